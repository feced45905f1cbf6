#include "echmm/predictor.hpp"
#include "echmm/synthetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace echmm;
using echmm::testing::make_panel;
using echmm::testing::random_panel;

namespace {

PoolConfig small_config(int L = 5) {
  PoolConfig c;
  c.pool_length = L;
  c.em.particles = 100;
  c.em.max_iters = 3;
  c.em.seed = 1;
  return c;
}

HistoryEntry entry(double ll, Direction d, int day, int stock = 0) {
  return HistoryEntry{ll, d, day, stock};
}

// Sort by (distance, more recent day first, lower stock), count the first k.
Direction sort_and_vote(std::vector<HistoryEntry> h, double current, int k) {
  std::sort(h.begin(), h.end(), [&](const HistoryEntry& a, const HistoryEntry& b) {
    const double da = std::abs(a.log_likelihood - current), db = std::abs(b.log_likelihood - current);
    if (da != db) return da < db;
    if (a.day != b.day) return a.day > b.day;
    return a.stock < b.stock;
  });
  int up = 0;
  for (int i = 0; i < k; ++i) up += h[static_cast<std::size_t>(i)].next_day == Direction::kUp;
  return 2 * up >= k ? Direction::kUp : Direction::kDown;
}

}  // namespace

TEST(SlidePool, DayBeforePoolLengthIsRangeError) {
  const auto panel = random_panel(2, 20, 1);
  const auto graph = CorrelationGraph::isolated(panel.stock_ids());
  const auto cfg = small_config(5);
  EXPECT_THROW(slide_pool(panel, nullptr, graph, 4, cfg), RangeError);
  EXPECT_THROW(slide_pool(panel, nullptr, graph, 20, cfg), RangeError);
  EXPECT_NO_THROW(slide_pool(panel, nullptr, graph, 5, cfg));
}

TEST(SlidePool, AdjacentWindowsOverlapInAllButOneDay) {
  const auto panel = random_panel(2, 20, 2);
  const auto graph = CorrelationGraph::isolated(panel.stock_ids());
  const auto cfg = small_config(6);
  AccessAudit a, b;
  slide_pool(panel, nullptr, graph, 9, cfg, nullptr, &a);
  slide_pool(panel, nullptr, graph, 10, cfg, nullptr, &b);
  EXPECT_EQ(a.first_day, 4);
  EXPECT_EQ(a.last_day, 9);
  EXPECT_EQ(b.first_day, 5);
  EXPECT_EQ(b.last_day, 10);
  const int overlap = std::min(a.last_day, b.last_day) - std::max(a.first_day, b.first_day) + 1;
  EXPECT_EQ(overlap, cfg.pool_length - 1);
}

TEST(SlidePool, PoolLikelihoodIsStableOnStationarySeries) {
  // Single-state generator: every window sees the same distribution.
  GeneratorSpec spec;
  spec.stocks = 2;
  spec.days = 60;
  spec.states = 1;
  spec.classes = 3;
  spec.seed = 3;
  const auto data = sample(spec);
  const auto graph = CorrelationGraph::from_neighbor_sets(data.panel.stock_ids(), data.truth.neighbors);
  PoolConfig cfg;
  cfg.classes = 3;
  cfg.em.states = 1;
  cfg.em.particles = 300;
  cfg.ll_scope = LlScope::kPool;
  std::optional<ModelParams> warm;
  Eigen::VectorXd prev;
  for (int t = cfg.pool_length; t < spec.days; ++t) {
    const auto r = slide_pool(data.panel, &data.events, graph, t, cfg, warm ? &*warm : nullptr);
    warm = r.params;
    if (prev.size())
      for (int s = 0; s < 2; ++s)
        EXPECT_LT(std::abs(r.log_likelihood(s) - prev(s)), 0.2 * std::abs(prev(s))) << "day " << t;
    prev = r.log_likelihood;
  }
}

TEST(BuildHistory, MinimalRangeGivesOneEntryPerStock) {
  const auto panel = random_panel(3, 12, 4);
  const auto graph = CorrelationGraph::isolated(panel.stock_ids());
  const auto cfg = small_config(5);
  const auto h = build_history(panel, nullptr, graph, 1, 6, cfg);
  ASSERT_EQ(h.size(), 3u);
  for (const auto& e : h) EXPECT_EQ(e.day, 5);
  EXPECT_THROW(build_history(panel, nullptr, graph, 1, 5, cfg), RangeError);
}

TEST(BuildHistory, LabelsMatchCloseComparison) {
  const auto panel = random_panel(2, 25, 5);
  const auto graph = CorrelationGraph::isolated(panel.stock_ids());
  const auto h = build_history(panel, nullptr, graph, 0, 24, small_config(5));
  EXPECT_EQ(h.size(), 2u * (23 - 5 + 1));
  for (const auto& e : h) {
    const bool up = panel.close(e.day + 1, e.stock) >= panel.close(e.day, e.stock);
    EXPECT_EQ(e.next_day == Direction::kUp, up) << "day " << e.day;
    EXPECT_TRUE(std::isfinite(e.log_likelihood));
  }
}

TEST(BuildHistory, EqualClosesLabelUp) {
  std::vector<double> closes{10, 11, 10, 12, 11, 13, 12, 12, 14};
  const auto panel = make_panel({closes});
  const auto graph = CorrelationGraph::isolated(panel.stock_ids());
  const auto h = build_history(panel, nullptr, graph, 0, 7, small_config(3));
  const auto it = std::find_if(h.begin(), h.end(), [](const HistoryEntry& e) { return e.day == 6; });
  ASSERT_NE(it, h.end());
  EXPECT_EQ(it->next_day, Direction::kUp);
}

TEST(PredictNext, Examples) {
  const std::vector<HistoryEntry> one{entry(-3.0, Direction::kDown, 1)};
  EXPECT_EQ(predict_next(one, 5.0, 1), Direction::kDown);
  const std::vector<HistoryEntry> three{entry(1.0, Direction::kUp, 1), entry(2.0, Direction::kUp, 2),
                                        entry(3.0, Direction::kDown, 3)};
  EXPECT_EQ(predict_next(three, 2.0, 3), Direction::kUp);
  const std::vector<HistoryEntry> tie{entry(1.0, Direction::kUp, 1), entry(2.0, Direction::kDown, 2)};
  EXPECT_EQ(predict_next(tie, 1.5, 2), Direction::kUp);
  // Equal distance: the more recent day wins.
  const std::vector<HistoryEntry> recent{entry(1.0, Direction::kUp, 1), entry(3.0, Direction::kDown, 7)};
  EXPECT_EQ(predict_next(recent, 2.0, 1), Direction::kDown);
}

TEST(PredictNext, Errors) {
  EXPECT_THROW(predict_next({}, 0.0, 1), InsufficientDataError);
  const std::vector<HistoryEntry> two{entry(1.0, Direction::kUp, 1), entry(2.0, Direction::kDown, 2)};
  EXPECT_THROW(predict_next(two, 0.0, 3), RangeError);
  EXPECT_THROW(predict_next(two, 0.0, 0), ConfigError);
}

TEST(PredictNext, MatchesSortAndVoteOracle) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> ll(-20.0, 5.0);
  std::bernoulli_distribution up(0.5);
  std::uniform_int_distribution<int> coarse(-5, 5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<HistoryEntry> h;
    for (int i = 0; i < 20; ++i) {
      // Half the trials use integer values so distance ties occur.
      const double v = trial % 2 ? ll(rng) : static_cast<double>(coarse(rng));
      h.push_back(entry(v, up(rng) ? Direction::kUp : Direction::kDown, i / 2, i % 2));
    }
    const double current = trial % 2 ? ll(rng) : static_cast<double>(coarse(rng));
    for (int k : {1, 4, 12, 20}) EXPECT_EQ(predict_next(h, current, k), sort_and_vote(h, current, k));
  }
}

TEST(PredictNext, AffineInvariant) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> ll(0.0, 3.0);
  std::bernoulli_distribution up(0.5);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-100.0, 100.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<HistoryEntry> h;
    for (int i = 0; i < 15; ++i) h.push_back(entry(ll(rng), up(rng) ? Direction::kUp : Direction::kDown, i));
    const double current = ll(rng);
    const double a = scale(rng), b = shift(rng);
    auto moved = h;
    for (auto& e : moved) e.log_likelihood = a * e.log_likelihood + b;
    for (int k : {1, 5, 9})
      EXPECT_EQ(predict_next(h, current, k), predict_next(moved, a * current + b, k));
  }
}

TEST(HistoryFor, FiltersByStockUnlessPooled) {
  const std::vector<HistoryEntry> h{entry(1, Direction::kUp, 1, 0), entry(2, Direction::kUp, 1, 1),
                                    entry(3, Direction::kDown, 2, 0)};
  EXPECT_EQ(history_for(h, 0, false).size(), 2u);
  EXPECT_EQ(history_for(h, 1, false).size(), 1u);
  EXPECT_EQ(history_for(h, 1, true).size(), 3u);
}

TEST(PoolConfig, ValidatesBounds) {
  auto c = small_config();
  c.pool_length = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_direction("up"), Direction::kUp);
  EXPECT_THROW(parse_direction("flat"), InputError);
}

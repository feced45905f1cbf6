#include "echmm/model.hpp"
#include "echmm/model_io.hpp"
#include "oracles/plain_hmm.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace echmm;
using echmm::testing::random_beliefs;
using echmm::testing::random_events;
using echmm::testing::random_panel;
using echmm::testing::random_params;

namespace {

std::vector<std::vector<int>> isolated_sets(int S) {
  std::vector<std::vector<int>> sets;
  for (int s = 0; s < S; ++s) sets.push_back({s});
  return sets;
}

oracle::HmmParams to_oracle(const ModelParams& p, int s) {
  oracle::HmmParams o;
  const auto us = static_cast<std::size_t>(s);
  for (int h = 0; h < p.states; ++h) {
    o.pi.push_back(p.initial(s, h));
    o.A.emplace_back();
    o.mean.emplace_back();
    o.sd.emplace_back();
    o.table.emplace_back();
    for (int j = 0; j < p.states; ++j) o.A.back().push_back(p.transition[us](h, j));
    for (int c = 0; c < kPriceComponents; ++c) {
      o.mean.back().push_back(p.gauss_mean[us](h, c));
      o.sd.back().push_back(p.gauss_std[us](h, c));
    }
    for (int f = 0; f < p.classes; ++f) o.table.back().push_back(p.event_table[us](h, f));
  }
  return o;
}

oracle::Posteriors to_oracle(const StateBeliefs& b, int s) {
  oracle::Posteriors o;
  for (int t = 0; t < b.num_days(); ++t) {
    o.gamma.push_back({});
    for (Eigen::Index h = 0; h < b.z[t].cols(); ++h) o.gamma.back().push_back(b.z[t](s, h));
    o.xi.push_back({});
    if (t == 0) continue;
    const auto& q = b.q[t][static_cast<std::size_t>(s)];
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      o.xi.back().push_back({});
      for (Eigen::Index j = 0; j < q.cols(); ++j) o.xi.back().back().push_back(q(i, j));
    }
  }
  return o;
}

oracle::Mat standardized(const ModelParams& p, const AlignedPanel& panel, int s) {
  oracle::Mat x;
  for (int t = 0; t < panel.num_days(); ++t) {
    const auto row = panel.prices(s).row(t);
    x.push_back({});
    for (int c = 0; c < kPriceComponents; ++c)
      x.back().push_back((row(c) - p.price_center(s, c)) / p.price_scale(s, c));
  }
  return x;
}

std::vector<int> event_column(const EventGrid* g, int T, int s) {
  std::vector<int> out(static_cast<std::size_t>(T), -1);
  if (g)
    for (int t = 0; t < T; ++t)
      if (auto c = g->event_class(t, s)) out[static_cast<std::size_t>(t)] = *c;
  return out;
}

}  // namespace

TEST(JointStateIndex, ExhaustiveBijection) {
  for (int H = 1; H <= 4; ++H)
    for (int width = 1; width <= 5; ++width) {
      const JointStateIndex index(H, width);
      int expected = 1;
      for (int i = 0; i < width; ++i) expected *= H;
      ASSERT_EQ(index.size(), expected);
      std::vector<bool> seen(static_cast<std::size_t>(expected), false);
      for (int i = 0; i < index.size(); ++i) {
        const auto digits = index.decode(i);
        EXPECT_EQ(index.encode(digits), i);
        seen[static_cast<std::size_t>(index.encode(digits))] = true;
      }
      EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
    }
}

TEST(JointStateIndex, FirstNeighborMostSignificant) {
  const JointStateIndex index(3, 2);
  EXPECT_EQ(index.encode(std::vector<int>{1, 0}), 3);
  EXPECT_EQ(index.encode(std::vector<int>{0, 2}), 2);
  EXPECT_EQ(index.decode(7), (std::vector<int>{2, 1}));
  EXPECT_THROW(index.encode(std::vector<int>{0, 3}), InputError);
  EXPECT_THROW(index.decode(9), InputError);
}

TEST(LogInitial, Examples) {
  const auto panel = random_panel(1, 5, 1);
  auto p = random_params(panel, isolated_sets(1), 2, 3, 2);
  p.initial << 1.0, 0.0;
  Eigen::MatrixXd z(1, 2);
  z << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(log_initial(p, z), 0.0);
  p.initial << 0.5, 0.5;
  z << 0.5, 0.5;
  EXPECT_DOUBLE_EQ(log_initial(p, z), std::log(0.5));
  p.initial << 1.0, 0.0;
  EXPECT_TRUE(std::isfinite(log_initial(p, z)));
  EXPECT_NEAR(log_initial(p, z), 0.5 * std::log(1e-300), 1e-9);
}

TEST(LogInitial, MatchesNestedLoopOracle) {
  const auto panel = random_panel(3, 5, 3);
  const auto p = random_params(panel, isolated_sets(3), 2, 3, 4);
  const auto b = random_beliefs(p, 1, 5);
  double expected = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int h = 0; h < 2; ++h) expected += b.z[0](s, h) * std::log(p.initial(s, h));
  EXPECT_NEAR(log_initial(p, b.z[0]), expected, 1e-12);
}

TEST(LogTransition, IsolatedReducesToPlainHmmTerm) {
  const auto panel = random_panel(2, 5, 6);
  const auto p = random_params(panel, isolated_sets(2), 2, 3, 7);
  const auto b = random_beliefs(p, 2, 8);
  for (int s = 0; s < 2; ++s) {
    double expected = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        expected += b.z[0](s, i) * b.z[1](s, j) * std::log(p.transition[s](i, j));
    EXPECT_NEAR(log_transition(p, b.z[0], b.z[1], s), expected, 1e-12);
  }
}

TEST(LogTransition, DegenerateBeliefsPickOneEntry) {
  const auto panel = random_panel(3, 5, 9);
  const auto p = random_params(panel, {{0, 2, 1}, {1}, {2, 0}}, 2, 3, 10);
  Eigen::MatrixXd prev(3, 2), curr(3, 2);
  prev << 0, 1, 1, 0, 0, 1;  // states (1, 0, 1)
  curr << 1, 0, 0, 1, 1, 0;
  // C_0 = (0, 2, 1): digits (1, 1, 0) -> row 6; stock 0 moves to state 0.
  EXPECT_NEAR(log_transition(p, prev, curr, 0), std::log(p.transition[0](6, 0)), 1e-15);
  // C_2 = (2, 0): digits (1, 1) -> row 3.
  EXPECT_NEAR(log_transition(p, prev, curr, 2), std::log(p.transition[2](3, 0)), 1e-15);
}

TEST(LogTransition, TwoNeighborsMatchExplicitSummation) {
  const auto panel = random_panel(2, 5, 11);
  const auto p = random_params(panel, {{0, 1}, {1, 0}}, 2, 3, 12);
  const auto b = random_beliefs(p, 2, 13);
  for (int s = 0; s < 2; ++s) {
    const int other = 1 - s;
    double expected = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c)
        for (int h = 0; h < 2; ++h) {
          const int row = 2 * a + c;  // (self, other) with self first
          expected += b.z[0](s, a) * b.z[0](other, c) * b.z[1](s, h) * std::log(p.transition[s](row, h));
        }
    EXPECT_NEAR(log_transition(p, b.z[0], b.z[1], s), expected, 1e-12);
    EXPECT_NEAR(log_transition_expected(p, b.q[1][s], s), expected, 1e-12);
  }
}

TEST(LogPriceEmission, ModeWithUnitDensityContributesZero) {
  const auto panel = random_panel(1, 5, 14);
  auto p = random_params(panel, isolated_sets(1), 2, 3, 15);
  p.price_center.setZero();
  p.price_scale.setOnes();
  const double sd = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  p.gauss_mean[0].row(0) << 10, 12, 8, 11;
  p.gauss_std[0].row(0).setConstant(sd);
  PriceObservation obs{"S0", 0, 10, 12, 8, 11, std::nullopt};
  EXPECT_NEAR(log_price_emission(p, 0, obs, Eigen::RowVector2d(1, 0)), 0.0, 1e-12);
}

TEST(LogPriceEmission, OneHotMatchesDensityFormula) {
  const auto panel = random_panel(2, 8, 16);
  const auto p = random_params(panel, isolated_sets(2), 2, 3, 17);
  for (int t = 0; t < 8; ++t)
    for (int s = 0; s < 2; ++s)
      for (int h = 0; h < 2; ++h) {
        Eigen::RowVector2d z = Eigen::RowVector2d::Zero();
        z(h) = 1.0;
        double expected = 0.0;
        const auto row = panel.prices(s).row(t);
        for (int c = 0; c < 4; ++c) {
          const double x = (row(c) - p.price_center(s, c)) / p.price_scale(s, c);
          const double m = p.gauss_mean[s](h, c), sd = p.gauss_std[s](h, c);
          expected += std::log(std::exp(-(x - m) * (x - m) / (2 * sd * sd)) / (sd * std::sqrt(2 * std::numbers::pi)));
        }
        EXPECT_NEAR(log_price_emission(p, s, panel.at(t, s), z), expected, 1e-10);
      }
}

TEST(LogPriceEmission, TranslationInvariant) {
  const auto panel = random_panel(1, 5, 18);
  auto p = random_params(panel, isolated_sets(1), 2, 3, 19);
  p.price_center.setZero();
  p.price_scale.setOnes();
  auto obs = panel.at(2, 0);
  const Eigen::RowVector2d z(0.3, 0.7);
  const double before = log_price_emission(p, 0, obs, z);
  p.gauss_mean[0].array() += 7.25;
  obs.open += 7.25;
  obs.high += 7.25;
  obs.low += 7.25;
  obs.close += 7.25;
  EXPECT_NEAR(log_price_emission(p, 0, obs, z), before, 1e-10);
  obs.close = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(log_price_emission(p, 0, obs, z), InputError);
}

TEST(LogEventEmission, Examples) {
  const auto panel = random_panel(1, 5, 20);
  auto p = random_params(panel, isolated_sets(1), 2, 4, 21);
  const Eigen::RowVector2d z(1, 0);
  EXPECT_DOUBLE_EQ(log_event_emission(p, 0, std::nullopt, z), 0.0);
  p.event_table[0].row(0).setConstant(0.25);
  EXPECT_DOUBLE_EQ(log_event_emission(p, 0, 3, z), std::log(0.25));
  EXPECT_THROW(log_event_emission(p, 0, 4, z), InputError);
}

TEST(LogEventEmission, MatchesNestedLoopOracle) {
  const auto panel = random_panel(3, 5, 22);
  const auto p = random_params(panel, isolated_sets(3), 3, 6, 23);
  const auto b = random_beliefs(p, 1, 24);
  for (int s = 0; s < 3; ++s)
    for (int f = 0; f < 6; ++f) {
      double expected = 0.0;
      for (int h = 0; h < 3; ++h) expected += b.z[0](s, h) * std::log(p.event_table[s](h, f));
      EXPECT_NEAR(log_event_emission(p, s, f, b.z[0].row(s)), expected, 1e-12);
    }
}

TEST(CompleteLogLikelihood, SingleDayHasNoTransition) {
  const auto panel = random_panel(2, 1, 25);
  auto p = random_params(random_panel(2, 6, 25), {{0, 1}, {1}}, 2, 3, 26);
  const auto b = random_beliefs(p, 1, 27);
  double expected = log_initial(p, b.z[0]);
  for (int s = 0; s < 2; ++s) expected += log_price_emission(p, s, panel.at(0, s), b.z[0].row(s));
  EXPECT_NEAR(complete_log_likelihood(p, b, panel, nullptr), expected, 1e-12);
}

TEST(CompleteLogLikelihood, SingleStockMatchesPlainHmm) {
  const auto panel = random_panel(1, 3, 28);
  const auto p = random_params(panel, isolated_sets(1), 2, 3, 29);
  const auto b = random_beliefs(p, 3, 30);
  const double expected = oracle::expected_complete_ll(to_oracle(b, 0), to_oracle(p, 0),
                                                       standardized(p, panel, 0), event_column(nullptr, 3, 0));
  EXPECT_NEAR(complete_log_likelihood(p, b, panel, nullptr), expected, 1e-9);
}

TEST(CompleteLogLikelihood, IsolatedChainsMatchPlainHmmProperty) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const int S = 1 + static_cast<int>(seed % 3);
    const int T = 2 + static_cast<int>(seed % 9);
    const auto panel = random_panel(S, T, seed);
    const auto p = random_params(panel, isolated_sets(S), 2, 5, seed + 100);
    const auto b = random_beliefs(p, T, seed + 200);
    const auto events = random_events(T, S, 5, 0.5, seed + 300);
    double expected = 0.0;
    for (int s = 0; s < S; ++s)
      expected += oracle::expected_complete_ll(to_oracle(b, s), to_oracle(p, s), standardized(p, panel, s),
                                               event_column(&events, T, s));
    EXPECT_NEAR(complete_log_likelihood(p, b, panel, &events), expected, 1e-9) << "seed " << seed;
  }
}

TEST(CompleteLogLikelihood, StreamsFactorize) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto panel = random_panel(3, 12, seed);
    const auto p = random_params(panel, {{0, 1}, {1, 2, 0}, {2}}, 2, 4, seed + 1);
    const auto b = random_beliefs(p, 12, seed + 2);
    const auto events = random_events(12, 3, 4, 0.6, seed + 3);
    const double both = complete_log_likelihood(p, b, panel, &events);
    const double prices_only = complete_log_likelihood(p, b, panel, nullptr);
    const double price_stream = price_stream_log_likelihood(p, b, panel);
    const double event_stream = event_stream_log_likelihood(p, b, events);
    const double shared = prices_only - price_stream;
    EXPECT_NEAR(both, price_stream + event_stream + shared, 1e-12 * std::abs(both));
    EXPECT_TRUE(std::isfinite(both));
  }
}

TEST(CompleteLogLikelihood, ShapeMismatchIsRejected) {
  const auto panel = random_panel(2, 4, 31);
  const auto p = random_params(panel, isolated_sets(2), 2, 3, 32);
  const auto b = random_beliefs(p, 3, 33);
  EXPECT_THROW(complete_log_likelihood(p, b, panel, nullptr), ShapeError);
}

TEST(ModelParams, ValidateCatchesBrokenInvariants) {
  const auto panel = random_panel(2, 4, 34);
  const auto good = random_params(panel, {{0, 1}, {1}}, 2, 3, 35);
  auto p = good;
  p.initial(0, 0) += 0.1;
  EXPECT_THROW(p.validate(), InputError);
  p = good;
  p.transition[0](3, 1) = 2.0;
  EXPECT_THROW(p.validate(), InputError);
  p = good;
  p.gauss_std[1](0, 2) = 1e-6;
  EXPECT_THROW(p.validate(), InputError);
  p = good;
  p.event_table[0].row(1) << 1.0, 0.0, 0.0;
  EXPECT_THROW(p.validate(), InputError);
  p = good;
  p.transition[0] = Eigen::MatrixXd::Constant(2, 2, 0.5);
  EXPECT_THROW(p.validate(), InputError);
}

TEST(ModelIo, RoundTripIsLossless) {
  echmm::testing::TempDir dir;
  const auto panel = random_panel(3, 10, 36);
  const auto p = random_params(panel, {{0, 2, 1}, {1}, {2, 0}}, 3, 5, 37);
  save_params(p, dir.file("m.json"));
  const auto back = load_params(dir.file("m.json"));
  EXPECT_EQ(back.states, p.states);
  EXPECT_EQ(back.classes, p.classes);
  EXPECT_EQ(back.neighbors, p.neighbors);
  EXPECT_EQ(back.stock_ids, p.stock_ids);
  EXPECT_EQ(back.initial, p.initial);
  EXPECT_EQ(back.price_center, p.price_center);
  EXPECT_EQ(back.price_scale, p.price_scale);
  for (int s = 0; s < 3; ++s) {
    EXPECT_EQ(back.transition[s], p.transition[s]);
    EXPECT_EQ(back.gauss_mean[s], p.gauss_mean[s]);
    EXPECT_EQ(back.gauss_std[s], p.gauss_std[s]);
    EXPECT_EQ(back.event_table[s], p.event_table[s]);
  }
  EXPECT_EQ(params_to_json(back), params_to_json(p));
  EXPECT_THROW(params_from_json("{\"states\": 2}"), Error);
}

#include "echmm/predictor.hpp"

#include <algorithm>
#include <numeric>

namespace echmm {

Direction parse_direction(const std::string& text) {
  if (text == "up") return Direction::kUp;
  if (text == "down") return Direction::kDown;
  throw InputError("direction must be 'up' or 'down', got '" + text + "'");
}

void PoolConfig::validate() const {
  if (pool_length < 2) throw ConfigError("predict.pool_length must be at least 2");
  if (k < 1) throw ConfigError("predict.k must be at least 1");
  if (classes < 1) throw ConfigError("event class count must be at least 1");
  em.validate();
}

PoolResult slide_pool(const AlignedPanel& panel, const EventGrid* events,
                      const CorrelationGraph& graph, int day_t, const PoolConfig& config,
                      const ModelParams* warm, AccessAudit* audit) {
  config.validate();
  if (day_t < config.pool_length)
    throw RangeError("pool ending at day " + std::to_string(day_t) + " needs day >= pool_length (" +
                     std::to_string(config.pool_length) + ")");
  if (day_t >= panel.num_days())
    throw RangeError("day " + std::to_string(day_t) + " is past the end of the panel");
  const int begin = day_t - config.pool_length + 1;
  const AlignedPanel pool = panel.slice(begin, day_t + 1);
  std::optional<EventGrid> pool_events;
  if (events) pool_events = events->slice(begin, day_t + 1);
  const EventGrid* ev = pool_events ? &*pool_events : nullptr;
  if (audit) audit->touch(begin, day_t);

  std::optional<ModelParams> init;
  if (warm && config.warm_start && warm->neighbors == graph.neighbor_sets &&
      warm->states == config.em.states && warm->classes == config.classes &&
      !has_collapsed_states(*warm)) {
    // Emission parameters carry over; initial and transition tables restart
    // uniform since the old initial row describes a day outside this pool and
    // zero transition entries from a short pool would never recover.
    init = initialize_params(pool, graph, config.em.states, config.classes, config.em.smoothing,
                             config.em.sigma_floor);
    const auto carried = rebase_params(*warm, pool);
    init->gauss_mean = carried.gauss_mean;
    init->gauss_std = carried.gauss_std;
    init->event_table = carried.event_table;
  }

  auto fitted = fit(pool, ev, graph, config.classes, config.em, init);
  align_labels(fitted.params);
  const auto final_beliefs = e_step(fitted.params, pool, ev, config.em).beliefs;

  PoolResult out;
  out.iterations = fitted.iterations;
  out.log_likelihood = Eigen::VectorXd::Zero(pool.num_stocks());
  const int last = pool.num_days() - 1;
  for (int s = 0; s < pool.num_stocks(); ++s) {
    if (config.ll_scope == LlScope::kFinalDay) {
      out.log_likelihood(s) = day_log_likelihood(fitted.params, final_beliefs, pool, ev, last, s);
    } else {
      std::vector<double> terms;
      for (int t = 0; t <= last; ++t)
        terms.push_back(day_log_likelihood(fitted.params, final_beliefs, pool, ev, t, s));
      out.log_likelihood(s) = detail::tree_sum(std::move(terms));
    }
  }
  out.params = std::move(fitted.params);
  return out;
}

std::vector<HistoryEntry> build_history(const AlignedPanel& panel, const EventGrid* events,
                                        const CorrelationGraph& graph, int first, int last,
                                        const PoolConfig& config, std::optional<ModelParams>* warm) {
  config.validate();
  if (first < 0 || last >= panel.num_days() || last < first)
    throw RangeError("history range [" + std::to_string(first) + ", " + std::to_string(last) +
                     "] is outside the panel");
  const int start = std::max(first + config.pool_length - 1, config.pool_length);
  if (start > last - 1)
    throw RangeError("history range [" + std::to_string(first) + ", " + std::to_string(last) +
                     "] is too short for a pool of " + std::to_string(config.pool_length) + " days");
  std::optional<ModelParams> local;
  auto& carry = warm ? *warm : local;
  std::vector<HistoryEntry> history;
  for (int t = start; t <= last - 1; ++t) {
    auto pool = slide_pool(panel, events, graph, t, config, carry ? &*carry : nullptr);
    for (int s = 0; s < panel.num_stocks(); ++s)
      history.push_back({pool.log_likelihood(s), realized_direction(panel, t, s), t, s});
    carry = std::move(pool.params);
  }
  return history;
}

Direction predict_next(std::span<const HistoryEntry> history, double current_ll, int k) {
  if (history.empty()) throw InsufficientDataError("no history to predict from");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (static_cast<std::size_t>(k) > history.size())
    throw RangeError("k = " + std::to_string(k) + " exceeds history size " +
                     std::to_string(history.size()));
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto closer = [&](std::size_t a, std::size_t b) {
    const double da = std::abs(history[a].log_likelihood - current_ll);
    const double db = std::abs(history[b].log_likelihood - current_ll);
    if (da != db) return da < db;
    if (history[a].day != history[b].day) return history[a].day > history[b].day;
    return history[a].stock < history[b].stock;
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
  int up = 0;
  for (int i = 0; i < k; ++i)
    if (history[order[static_cast<std::size_t>(i)]].next_day == Direction::kUp) ++up;
  return 2 * up >= k ? Direction::kUp : Direction::kDown;
}

std::vector<HistoryEntry> history_for(const std::vector<HistoryEntry>& history, int stock,
                                      bool pooled) {
  if (pooled) return history;
  std::vector<HistoryEntry> out;
  for (const auto& e : history)
    if (e.stock == stock) out.push_back(e);
  return out;
}

}  // namespace echmm

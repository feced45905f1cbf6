#pragma once

#include "echmm/inference.hpp"

#include <span>
#include <string>
#include <vector>

namespace echmm {

enum class Direction { kDown, kUp };

inline const char* to_string(Direction d) { return d == Direction::kUp ? "up" : "down"; }
Direction parse_direction(const std::string& text);

/// Up iff close[day + 1] >= close[day].
inline Direction realized_direction(const AlignedPanel& panel, int day, int stock) {
  return direction_up(panel, day, stock) ? Direction::kUp : Direction::kDown;
}

enum class LlScope { kFinalDay, kPool };

struct HistoryEntry {
  double log_likelihood = 0.0;
  Direction next_day = Direction::kUp;
  int day = 0;    // last day of the pool
  int stock = 0;
};

struct PoolConfig {
  int pool_length = 10;
  int k = 12;
  bool pooled_history = false;
  bool warm_start = true;
  LlScope ll_scope = LlScope::kFinalDay;
  int classes = 1;  // event classes F
  EmConfig em;

  void validate() const;
};

/// Records the span of days a computation touched.
struct AccessAudit {
  int first_day = -1;
  int last_day = -1;

  void touch(int begin, int end_inclusive) {
    if (first_day < 0 || begin < first_day) first_day = begin;
    if (end_inclusive > last_day) last_day = end_inclusive;
  }
};

struct PoolResult {
  ModelParams params;
  Eigen::VectorXd log_likelihood;  // per stock
  int iterations = 0;
};

/// Trains on days [day_t - pool_length + 1, day_t] and scores each stock.
PoolResult slide_pool(const AlignedPanel& panel, const EventGrid* events,
                      const CorrelationGraph& graph, int day_t, const PoolConfig& config,
                      const ModelParams* warm = nullptr, AccessAudit* audit = nullptr);

/// One entry per stock for every pool ending at t in [first + pool_length - 1,
/// last - 1] (with t >= pool_length), labeled by the direction of day t + 1.
/// `warm` carries parameters between consecutive pools and is updated.
std::vector<HistoryEntry> build_history(const AlignedPanel& panel, const EventGrid* events,
                                        const CorrelationGraph& graph, int first, int last,
                                        const PoolConfig& config,
                                        std::optional<ModelParams>* warm = nullptr);

/// Majority vote of the k entries nearest to current_ll; distance ties go to
/// the more recent day, vote ties go to up.
Direction predict_next(std::span<const HistoryEntry> history, double current_ll, int k);

/// Entries usable for `stock`: its own, or all when pooled.
std::vector<HistoryEntry> history_for(const std::vector<HistoryEntry>& history, int stock,
                                      bool pooled);

}  // namespace echmm

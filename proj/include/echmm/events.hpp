#pragma once

#include "echmm/market_data.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace echmm {

struct EventEmbedding {
  std::string stock_id;
  int day_index = 0;
  Eigen::VectorXd vector;
};

struct EventObservation {
  std::string stock_id;
  int day_index = 0;
  int event_class = 0;
  bool filled = false;
};

/// k-means centroids, one row per event class.
struct EventCodebook {
  Eigen::MatrixXd centroids;              // F x D
  std::vector<double> objective_trace;    // sum of squared distances per Lloyd pass

  int clusters() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

/// Day x stock event classes; absent cells hold no class.
class EventGrid {
 public:
  EventGrid() = default;
  EventGrid(int num_days, int num_stocks);

  int num_days() const { return num_days_; }
  int num_stocks() const { return num_stocks_; }

  std::optional<int> event_class(int day, int stock) const {
    const int c = classes_(day, stock);
    return c < 0 ? std::nullopt : std::optional<int>(c);
  }
  bool filled(int day, int stock) const { return filled_(day, stock) != 0; }
  void set(int day, int stock, int event_class, bool filled = false);
  void clear(int day, int stock);
  std::size_t count() const;
  std::size_t count_filled() const;

  /// Days [begin, end) rebased to 0.
  EventGrid slice(int begin, int end) const;
  /// Only the entries that were observed, not forward-filled.
  EventGrid originals() const;

  bool operator==(const EventGrid& other) const = default;

 private:
  int num_days_ = 0;
  int num_stocks_ = 0;
  Eigen::MatrixXi classes_;  // -1 = absent
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> filled_;
};

struct FillPolicy {
  enum class Kind { kFull, kNone, kPartial };
  Kind kind = Kind::kFull;
  double fraction = 1.0;  // kept share under kPartial

  static FillPolicy parse(const std::string& text);  // "full", "none", "partial:0.8"
  std::string to_string() const;
};

EventEmbedding average_daily_embeddings(std::span<const EventEmbedding> raw);

/// Collapses raw news rows to at most one averaged embedding per (stock, day),
/// ordered by (stock, day).
std::vector<EventEmbedding> average_by_stock_day(const std::vector<EventEmbedding>& raw);

/// Lloyd's k-means with k-means++ seeding.
EventCodebook fit_codebook(const std::vector<EventEmbedding>& embeddings, int clusters,
                           std::uint64_t seed, int max_iters = 100);

EventObservation assign_event_class(const EventCodebook& codebook, const EventEmbedding& e);

/// Nearest centroid by squared Euclidean distance, lowest index on ties.
template <typename Derived>
int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

EventGrid forward_fill(const EventGrid& observations, const FillPolicy& policy,
                       std::uint64_t seed = 0);

/// Embedding CSV rows mapped onto the panel calendar. A row dated on a
/// non-trading day lands on the next trading day; rows after the last trading
/// day or for unknown stocks are dropped.
std::vector<EventEmbedding> load_embedding_csv(const std::string& path, const AlignedPanel& panel,
                                               int expected_dim);

void write_events_csv(const EventGrid& events, const AlignedPanel& panel, const std::string& path);
EventGrid load_events_csv(const std::string& path, const AlignedPanel& panel);

void write_codebook_csv(const EventCodebook& codebook, const std::string& path);
EventCodebook load_codebook_csv(const std::string& path);

}  // namespace echmm

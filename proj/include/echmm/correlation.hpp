#pragma once

#include "echmm/market_data.hpp"

#include <string>
#include <vector>

namespace echmm {

/// Sample Pearson correlation. Throws UndefinedCorrelationError when either
/// input has zero variance.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar pearson(const Eigen::MatrixBase<DerivedX>& x,
                                  const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != y.size()) throw ShapeError("pearson inputs differ in length");
  if (x.size() < 2) throw InsufficientDataError("pearson needs at least 2 samples");
  const auto n = static_cast<Scalar>(x.size());
  const Scalar mx = x.sum() / n;
  const Scalar my = y.sum() / n;
  const auto dx = (x.array() - mx).matrix();
  const auto dy = (y.array() - my).matrix();
  const Scalar sxx = dx.squaredNorm();
  const Scalar syy = dy.squaredNorm();
  if (!(sxx > Scalar(0)) || !(syy > Scalar(0)))
    throw UndefinedCorrelationError("zero variance in pearson input");
  using std::sqrt;
  const Scalar r = dx.dot(dy) / sqrt(sxx * syy);
  return r > Scalar(1) ? Scalar(1) : (r < Scalar(-1) ? Scalar(-1) : r);
}

/// Per-stock ordered correlated-stock sets. Each set contains the stock itself
/// and is ordered by descending coefficient, ties by stock id.
struct CorrelationGraph {
  double threshold = 0.6;
  int max_neighbors = 4;
  std::vector<std::string> stock_ids;
  std::vector<std::vector<int>> neighbor_sets;
  Eigen::MatrixXd coefficients;  // symmetric, unit diagonal

  int num_stocks() const { return static_cast<int>(stock_ids.size()); }
  const std::vector<int>& neighbors(int stock) const {
    return neighbor_sets[static_cast<std::size_t>(stock)];
  }

  /// Every stock coupled only to itself.
  static CorrelationGraph isolated(const std::vector<std::string>& stock_ids);
  /// Explicit neighbor sets; coefficients are taken as given or identity.
  static CorrelationGraph from_neighbor_sets(std::vector<std::string> stock_ids,
                                             std::vector<std::vector<int>> neighbor_sets);
};

/// Pearson on p-change curves. Panels shorter than 3 days are rejected.
CorrelationGraph build_graph(const AlignedPanel& panel, double threshold = 0.6,
                             int max_neighbors = 4);

/// Neighbor sets from a coefficient matrix (the selection rule of build_graph).
std::vector<std::vector<int>> select_neighbors(const Eigen::MatrixXd& coefficients,
                                               const std::vector<std::string>& stock_ids,
                                               double threshold, int max_neighbors);

/// CSV export: stock_id,neighbor_id,coefficient,rank.
void write_graph_csv(const CorrelationGraph& graph, const std::string& path);
/// Neighbor sets ordered by rank; stocks are indexed as in `stock_ids`.
CorrelationGraph load_graph_csv(const std::string& path, const std::vector<std::string>& stock_ids);

}  // namespace echmm

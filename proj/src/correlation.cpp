#include "echmm/correlation.hpp"

#include "echmm/csv.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace echmm {

CorrelationGraph CorrelationGraph::isolated(const std::vector<std::string>& stock_ids) {
  CorrelationGraph g;
  g.threshold = 1.0;
  g.max_neighbors = 1;
  g.stock_ids = stock_ids;
  const auto n = static_cast<int>(stock_ids.size());
  g.coefficients = Eigen::MatrixXd::Identity(n, n);
  for (int s = 0; s < n; ++s) g.neighbor_sets.push_back({s});
  return g;
}

CorrelationGraph CorrelationGraph::from_neighbor_sets(std::vector<std::string> stock_ids,
                                                      std::vector<std::vector<int>> neighbor_sets) {
  const auto n = static_cast<int>(stock_ids.size());
  if (static_cast<int>(neighbor_sets.size()) != n)
    throw ShapeError("one neighbor set per stock is required");
  int widest = 1;
  for (int s = 0; s < n; ++s) {
    const auto& set = neighbor_sets[static_cast<std::size_t>(s)];
    if (std::find(set.begin(), set.end(), s) == set.end())
      throw InputError("neighbor set of stock " + std::to_string(s) + " must contain itself");
    for (int j : set)
      if (j < 0 || j >= n) throw InputError("neighbor index out of range");
    widest = std::max(widest, static_cast<int>(set.size()));
  }
  CorrelationGraph g;
  g.threshold = 0.0;
  g.max_neighbors = widest;
  g.stock_ids = std::move(stock_ids);
  g.neighbor_sets = std::move(neighbor_sets);
  g.coefficients = Eigen::MatrixXd::Identity(n, n);
  return g;
}

std::vector<std::vector<int>> select_neighbors(const Eigen::MatrixXd& coefficients,
                                               const std::vector<std::string>& stock_ids,
                                               double threshold, int max_neighbors) {
  const auto n = static_cast<int>(stock_ids.size());
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const auto before = [&](int a, int b) {
      const double ca = coefficients(s, a), cb = coefficients(s, b);
      if (ca != cb) return ca > cb;
      return stock_ids[static_cast<std::size_t>(a)] < stock_ids[static_cast<std::size_t>(b)];
    };
    std::vector<int> passing;
    for (int j = 0; j < n; ++j)
      if (j != s && coefficients(s, j) >= threshold) passing.push_back(j);
    std::sort(passing.begin(), passing.end(), before);
    if (static_cast<int>(passing.size()) > max_neighbors - 1)
      passing.resize(static_cast<std::size_t>(max_neighbors - 1));
    passing.push_back(s);
    std::sort(passing.begin(), passing.end(), before);
    sets[static_cast<std::size_t>(s)] = std::move(passing);
  }
  return sets;
}

CorrelationGraph build_graph(const AlignedPanel& panel, double threshold, int max_neighbors) {
  if (!(threshold >= -1.0 && threshold <= 1.0))
    throw ConfigError("correlation threshold " + std::to_string(threshold) + " outside [-1, 1]");
  if (max_neighbors < 1) throw ConfigError("max_neighbors must be at least 1");
  if (panel.num_days() < 3)
    throw InsufficientDataError("correlation needs at least 3 days, panel has " +
                                std::to_string(panel.num_days()));
  const int n = panel.num_stocks();
  std::vector<Eigen::VectorXd> curves;
  curves.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) curves.push_back(compute_pchange_curve(panel, s));

  CorrelationGraph g;
  g.threshold = threshold;
  g.max_neighbors = max_neighbors;
  g.stock_ids = panel.stock_ids();
  g.coefficients = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double r = 0.0;
      try {
        r = pearson(curves[static_cast<std::size_t>(i)], curves[static_cast<std::size_t>(j)]);
      } catch (const UndefinedCorrelationError&) {
        r = 0.0;  // suspended / constant series
      }
      g.coefficients(i, j) = g.coefficients(j, i) = r;
    }
  g.neighbor_sets = select_neighbors(g.coefficients, g.stock_ids, threshold, max_neighbors);
  return g;
}

void write_graph_csv(const CorrelationGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "stock_id,neighbor_id,coefficient,rank\n";
  for (int s = 0; s < graph.num_stocks(); ++s) {
    const auto& set = graph.neighbors(s);
    for (std::size_t r = 0; r < set.size(); ++r)
      out << graph.stock_ids[static_cast<std::size_t>(s)] << ','
          << graph.stock_ids[static_cast<std::size_t>(set[r])] << ','
          << csv::format_double(graph.coefficients(s, set[r])) << ',' << r << '\n';
  }
}

CorrelationGraph load_graph_csv(const std::string& path, const std::vector<std::string>& stock_ids) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open graph file '" + path + "'");
  std::string line;
  if (!reader.next(line) || line != "stock_id,neighbor_id,coefficient,rank")
    throw ParseError(path, 1, "header must be stock_id,neighbor_id,coefficient,rank");
  const auto n = static_cast<int>(stock_ids.size());
  const auto index_of = [&](std::string_view id) {
    const auto it = std::find(stock_ids.begin(), stock_ids.end(), id);
    if (it == stock_ids.end()) throw ParseError(path, reader.line_no(), "unknown stock '" + std::string(id) + "'");
    return static_cast<int>(it - stock_ids.begin());
  };
  std::vector<std::vector<std::pair<long long, int>>> ranked(static_cast<std::size_t>(n));
  Eigen::MatrixXd coefficients = Eigen::MatrixXd::Identity(n, n);
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 4) throw ParseError(path, reader.line_no(), "expected 4 fields");
    const int s = index_of(f[0]);
    const int j = index_of(f[1]);
    const auto c = csv::parse_double(f[2]);
    const auto r = csv::parse_int(f[3]);
    if (!c || !r || *r < 0) throw ParseError(path, reader.line_no(), "bad coefficient or rank");
    coefficients(s, j) = *c;
    coefficients(j, s) = *c;
    ranked[static_cast<std::size_t>(s)].emplace_back(*r, j);
  }
  std::vector<std::vector<int>> sets;
  int widest = 1;
  for (auto& list : ranked) {
    std::sort(list.begin(), list.end());
    std::vector<int> set;
    for (const auto& entry : list) set.push_back(entry.second);
    widest = std::max(widest, static_cast<int>(set.size()));
    sets.push_back(std::move(set));
  }
  auto graph = CorrelationGraph::from_neighbor_sets(stock_ids, std::move(sets));
  graph.coefficients = coefficients;
  graph.max_neighbors = widest;
  return graph;
}

}  // namespace echmm

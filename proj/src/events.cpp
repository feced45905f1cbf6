#include "echmm/events.hpp"

#include "echmm/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace echmm {

EventGrid::EventGrid(int num_days, int num_stocks)
    : num_days_(num_days),
      num_stocks_(num_stocks),
      classes_(Eigen::MatrixXi::Constant(num_days, num_stocks, -1)),
      filled_(Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_days, num_stocks)) {}

void EventGrid::set(int day, int stock, int event_class, bool filled) {
  if (event_class < 0) throw InputError("event class must be non-negative");
  classes_(day, stock) = event_class;
  filled_(day, stock) = filled ? 1 : 0;
}

void EventGrid::clear(int day, int stock) {
  classes_(day, stock) = -1;
  filled_(day, stock) = 0;
}

std::size_t EventGrid::count() const {
  return static_cast<std::size_t>((classes_.array() >= 0).count());
}

std::size_t EventGrid::count_filled() const {
  return static_cast<std::size_t>((filled_.array() != 0).count());
}

EventGrid EventGrid::slice(int begin, int end) const {
  if (begin < 0 || end > num_days_ || begin >= end) throw RangeError("event slice out of range");
  EventGrid out(end - begin, num_stocks_);
  out.classes_ = classes_.middleRows(begin, end - begin);
  out.filled_ = filled_.middleRows(begin, end - begin);
  return out;
}

EventGrid EventGrid::originals() const {
  EventGrid out = *this;
  for (int d = 0; d < num_days_; ++d)
    for (int s = 0; s < num_stocks_; ++s)
      if (filled(d, s)) out.clear(d, s);
  return out;
}

FillPolicy FillPolicy::parse(const std::string& text) {
  if (text == "full") return {Kind::kFull, 1.0};
  if (text == "none") return {Kind::kNone, 1.0};
  const std::string prefix = "partial:";
  if (text.rfind(prefix, 0) == 0) {
    const auto v = csv::parse_double(std::string_view(text).substr(prefix.size()));
    if (!v || !(*v >= 0.0 && *v <= 1.0))
      throw ConfigError("partial fill fraction must be in [0, 1]: '" + text + "'");
    return {Kind::kPartial, *v};
  }
  throw ConfigError("unknown fill policy '" + text + "' (full | none | partial:<p>)");
}

std::string FillPolicy::to_string() const {
  switch (kind) {
    case Kind::kFull:
      return "full";
    case Kind::kNone:
      return "none";
    case Kind::kPartial:
      return "partial:" + csv::format_double(fraction);
  }
  return "full";
}

EventEmbedding average_daily_embeddings(std::span<const EventEmbedding> raw) {
  if (raw.empty()) throw InputError("cannot average an empty embedding list");
  const auto& first = raw.front();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(first.vector.size());
  for (const auto& e : raw) {
    if (e.vector.size() != first.vector.size())
      throw ShapeError("embedding dimension " + std::to_string(e.vector.size()) + " != " +
                       std::to_string(first.vector.size()));
    if (e.stock_id != first.stock_id || e.day_index != first.day_index)
      throw InputError("averaged embeddings must share stock and day");
    sum += e.vector;
  }
  return {first.stock_id, first.day_index, sum / static_cast<double>(raw.size())};
}

std::vector<EventEmbedding> average_by_stock_day(const std::vector<EventEmbedding>& raw) {
  std::map<std::pair<std::string, int>, std::vector<EventEmbedding>> groups;
  for (const auto& e : raw) groups[{e.stock_id, e.day_index}].push_back(e);
  std::vector<EventEmbedding> out;
  out.reserve(groups.size());
  for (const auto& [key, items] : groups) out.push_back(average_daily_embeddings(items));
  return out;
}

namespace {

std::size_t count_distinct(const Eigen::MatrixXd& points) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  const auto less = [&](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(points.row(a).begin(), points.row(a).end(),
                                        points.row(b).begin(), points.row(b).end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (points.row(order[i]) != points.row(order[i - 1])) ++distinct;
  return distinct;
}

}  // namespace

EventCodebook fit_codebook(const std::vector<EventEmbedding>& embeddings, int clusters,
                           std::uint64_t seed, int max_iters) {
  if (clusters < 1) throw ConfigError("cluster count must be at least 1");
  if (embeddings.empty()) throw InfeasibleClusteringError("no embeddings to cluster");
  const auto dim = embeddings.front().vector.size();
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  Eigen::MatrixXd points(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = embeddings[static_cast<std::size_t>(i)].vector;
    if (v.size() != dim) throw ShapeError("embeddings differ in dimension");
    points.row(i) = v.transpose();
  }
  if (count_distinct(points) < static_cast<std::size_t>(clusters))
    throw InfeasibleClusteringError("fewer distinct embeddings than the " +
                                    std::to_string(clusters) + " requested clusters");

  // k-means++ seeding.
  CounterRng rng(seed, 0, 0);
  Eigen::MatrixXd centroids(clusters, dim);
  auto first = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
  centroids.row(0) = points.row(std::min(first, n - 1));
  Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < clusters; ++c) {
    const Eigen::Index pick = rng.categorical(d2);
    centroids.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  EventCodebook book;
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  Eigen::VectorXd dist(n);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(centroids, points.row(i).transpose());
      dist(i) = (points.row(i) - centroids.row(c)).squaredNorm();
      if (assignment[static_cast<std::size_t>(i)] != c) {
        assignment[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    book.objective_trace.push_back(dist.sum());
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, dim);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(clusters);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
      counts(assignment[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < clusters; ++c) {
      if (counts(c) > 0) {
        centroids.row(c) = sums.row(c) / counts(c);
        continue;
      }
      // Empty cluster: take over the point currently worst served.
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      centroids.row(c) = points.row(far);
      dist(far) = 0.0;
    }
  }
  book.centroids = std::move(centroids);
  return book;
}

EventObservation assign_event_class(const EventCodebook& codebook, const EventEmbedding& e) {
  if (e.vector.size() != codebook.dim())
    throw ShapeError("embedding dimension " + std::to_string(e.vector.size()) +
                     " does not match codebook dimension " + std::to_string(codebook.dim()));
  return {e.stock_id, e.day_index, nearest_centroid(codebook.centroids, e.vector), false};
}

EventGrid forward_fill(const EventGrid& observations, const FillPolicy& policy,
                       std::uint64_t seed) {
  if (policy.kind == FillPolicy::Kind::kNone) return observations;
  EventGrid full = observations;
  for (int s = 0; s < full.num_stocks(); ++s) {
    std::optional<int> last;
    for (int d = 0; d < full.num_days(); ++d) {
      const auto c = observations.event_class(d, s);
      if (c) {
        last = c;
      } else if (last) {
        full.set(d, s, *last, true);
      }
    }
  }
  if (policy.kind == FillPolicy::Kind::kFull) return full;

  // Partial: keep an exact, seeded share of the fully filled entries.
  std::vector<std::pair<int, int>> cells;
  for (int s = 0; s < full.num_stocks(); ++s)
    for (int d = 0; d < full.num_days(); ++d)
      if (full.event_class(d, s)) cells.emplace_back(d, s);
  CounterRng rng(seed, 1, 0);
  for (std::size_t i = cells.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(cells[i - 1], cells[std::min(j, i - 1)]);
  }
  const auto keep =
      static_cast<std::size_t>(std::llround(policy.fraction * static_cast<double>(cells.size())));
  for (std::size_t i = keep; i < cells.size(); ++i) full.clear(cells[i].first, cells[i].second);
  return full;
}

std::vector<EventEmbedding> load_embedding_csv(const std::string& path, const AlignedPanel& panel,
                                               int expected_dim) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open embedding file '" + path + "'");
  std::string line;
  if (!reader.next(line)) throw ParseError(path, 1, "missing header");
  const auto header = csv::split(line);
  if (header.size() < 3 || header[0] != "stock_id" || header[1] != "date")
    throw ParseError(path, 1, "header must be stock_id,date,v0,...");
  const int dim = static_cast<int>(header.size()) - 2;
  if (expected_dim > 0 && dim != expected_dim)
    throw ShapeError(path + ": embedding dimension " + std::to_string(dim) +
                     " does not match configured events.dim " + std::to_string(expected_dim));
  const auto& dates = panel.dates();
  std::vector<EventEmbedding> out;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (static_cast<int>(f.size()) != dim + 2)
      throw ShapeError(path + ":" + std::to_string(reader.line_no()) + ": row has " +
                       std::to_string(f.size() - 2) + " vector entries, expected " +
                       std::to_string(dim));
    if (!csv::is_iso_date(f[1]))
      throw ParseError(path, reader.line_no(), "date '" + std::string(f[1]) + "' is not YYYY-MM-DD");
    EventEmbedding e;
    e.stock_id = std::string(f[0]);
    e.vector.resize(dim);
    for (int i = 0; i < dim; ++i) {
      const auto v = csv::parse_double(f[static_cast<std::size_t>(i + 2)]);
      if (!v || !std::isfinite(*v)) throw ParseError(path, reader.line_no(), "non-numeric vector entry");
      e.vector(i) = *v;
    }
    const auto& ids = panel.stock_ids();
    if (std::find(ids.begin(), ids.end(), e.stock_id) == ids.end()) continue;
    const auto it = std::lower_bound(dates.begin(), dates.end(), std::string(f[1]));
    if (it == dates.end()) continue;
    e.day_index = static_cast<int>(it - dates.begin());
    out.push_back(std::move(e));
  }
  return out;
}

void write_events_csv(const EventGrid& events, const AlignedPanel& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "stock_id,date,event_class,filled\n";
  for (int s = 0; s < events.num_stocks(); ++s)
    for (int d = 0; d < events.num_days(); ++d)
      if (const auto c = events.event_class(d, s))
        out << panel.stock_ids()[static_cast<std::size_t>(s)] << ','
            << panel.dates()[static_cast<std::size_t>(d)] << ',' << *c << ','
            << (events.filled(d, s) ? 1 : 0) << '\n';
}

EventGrid load_events_csv(const std::string& path, const AlignedPanel& panel) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open event file '" + path + "'");
  std::string line;
  if (!reader.next(line) || line != "stock_id,date,event_class,filled")
    throw ParseError(path, 1, "header must be stock_id,date,event_class,filled");
  EventGrid grid(panel.num_days(), panel.num_stocks());
  const auto& dates = panel.dates();
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 4) throw ParseError(path, reader.line_no(), "expected 4 fields");
    const int s = panel.stock_index(std::string(f[0]));
    const auto it = std::lower_bound(dates.begin(), dates.end(), std::string(f[1]));
    if (it == dates.end() || *it != f[1])
      throw ParseError(path, reader.line_no(), "date not in panel calendar");
    const auto c = csv::parse_int(f[2]);
    const auto filled = csv::parse_int(f[3]);
    if (!c || *c < 0 || !filled || (*filled != 0 && *filled != 1))
      throw ParseError(path, reader.line_no(), "bad event_class or filled flag");
    grid.set(static_cast<int>(it - dates.begin()), s, static_cast<int>(*c), *filled == 1);
  }
  return grid;
}

void write_codebook_csv(const EventCodebook& codebook, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "class";
  for (int i = 0; i < codebook.dim(); ++i) out << ",v" << i;
  out << '\n';
  for (int c = 0; c < codebook.clusters(); ++c) {
    out << c;
    for (int i = 0; i < codebook.dim(); ++i) out << ',' << csv::format_double(codebook.centroids(c, i));
    out << '\n';
  }
}

EventCodebook load_codebook_csv(const std::string& path) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open codebook '" + path + "'");
  std::string line;
  if (!reader.next(line)) throw ParseError(path, 1, "missing header");
  const auto dim = static_cast<Eigen::Index>(csv::split(line).size()) - 1;
  std::vector<Eigen::VectorXd> rows;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (static_cast<Eigen::Index>(f.size()) != dim + 1)
      throw ParseError(path, reader.line_no(), "wrong number of fields");
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto x = csv::parse_double(f[static_cast<std::size_t>(i + 1)]);
      if (!x) throw ParseError(path, reader.line_no(), "non-numeric centroid entry");
      v(i) = *x;
    }
    rows.push_back(std::move(v));
  }
  EventCodebook book;
  book.centroids.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) book.centroids.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return book;
}

}  // namespace echmm

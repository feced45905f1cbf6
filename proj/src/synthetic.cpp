#include "echmm/synthetic.hpp"

#include "echmm/csv.hpp"
#include "echmm/model_io.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace echmm {

namespace {

constexpr std::uint64_t kStateStream = 1;
constexpr std::uint64_t kPriceStream = 2;
constexpr std::uint64_t kEventStream = 3;
constexpr std::uint64_t kDropStream = 4;

std::uint64_t stream_id(std::uint64_t tag, int stock) {
  return (tag << 32) | static_cast<std::uint64_t>(stock);
}

double per_state_value(const std::vector<double>& values, int state) {
  return values.size() == 1 ? values.front() : values[static_cast<std::size_t>(state)];
}

std::string stock_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "SYN%03d", s);
  return buf;
}

}  // namespace

void GeneratorSpec::validate() const {
  const auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("spec." + key + ": " + what);
  };
  if (stocks < 1) fail("stocks", "must be at least 1");
  if (days < 2) fail("days", "must be at least 2");
  if (states < 1) fail("states", "must be at least 1");
  if (classes < 1) fail("classes", "must be at least 1");
  if (!(event_sparsity >= 0 && event_sparsity <= 1)) fail("event_sparsity", "must lie in [0, 1]");
  if (!(unit > 0)) fail("unit", "must be positive");
  if (price_mode == PriceMode::kLevel && !(anchor > 0)) fail("anchor", "must be positive");
  if (params) {
    params->validate();
    if (params->num_stocks() != stocks) fail("params", "stock count differs from spec.stocks");
    if (params->states != states) fail("params", "state count differs from spec.states");
    if (params->classes != classes) fail("params", "class count differs from spec.classes");
    return;
  }
  if (!(persistence >= 0 && persistence <= 1)) fail("persistence", "must lie in [0, 1]");
  if (!(coupling >= 0 && coupling <= 1)) fail("coupling", "must lie in [0, 1]");
  if (!(range >= 0)) fail("range", "must be non-negative");
  if (sigma.size() != 1 && static_cast<int>(sigma.size()) != states)
    fail("sigma", "give one value or one per state");
  for (double v : sigma)
    if (!(v > 0)) fail("sigma", "values must be positive");
  if (event_concentration.size() != 1 && static_cast<int>(event_concentration.size()) != states)
    fail("event_concentration", "give one value or one per state");
  for (double c : event_concentration)
    if (!(c > 0 && (classes == 1 || c < 1))) fail("event_concentration", "values must lie in (0, 1)");
  if (neighbors) {
    if (static_cast<int>(neighbors->size()) != stocks) fail("neighbors", "one set per stock is required");
    for (int s = 0; s < stocks; ++s) {
      const auto& set = (*neighbors)[static_cast<std::size_t>(s)];
      if (std::find(set.begin(), set.end(), s) == set.end())
        fail("neighbors[" + std::to_string(s) + "]", "must contain the stock itself");
      for (int j : set)
        if (j < 0 || j >= stocks) fail("neighbors[" + std::to_string(s) + "]", "index out of range");
    }
  }
}

GeneratorSpec parse_generator_spec(const std::string& json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("spec must be a JSON object");
  GeneratorSpec spec;
  const auto number = [&](const std::string& key, const json& v) {
    if (!v.is_number()) throw ConfigError("spec." + key + ": expected a number");
    return v.get<double>();
  };
  const auto integer = [&](const std::string& key, const json& v) {
    if (!v.is_number_integer()) throw ConfigError("spec." + key + ": expected an integer");
    return v.get<long long>();
  };
  const auto per_state = [&](const std::string& key, const json& v) {
    std::vector<double> out;
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(number(key + "[" + std::to_string(i) + "]", v[i]));
    } else {
      out.push_back(number(key, v));
    }
    return out;
  };
  for (const auto& [key, v] : doc.items()) {
    if (key == "stocks") spec.stocks = static_cast<int>(integer(key, v));
    else if (key == "days") spec.days = static_cast<int>(integer(key, v));
    else if (key == "states") spec.states = static_cast<int>(integer(key, v));
    else if (key == "classes") spec.classes = static_cast<int>(integer(key, v));
    else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError("spec.seed: expected a non-negative integer");
      spec.seed = v.get<std::uint64_t>();
    } else if (key == "event_sparsity") spec.event_sparsity = number(key, v);
    else if (key == "price_mode") {
      const auto mode = v.is_string() ? v.get<std::string>() : "";
      if (mode == "level") spec.price_mode = PriceMode::kLevel;
      else if (mode == "return") spec.price_mode = PriceMode::kReturn;
      else throw ConfigError("spec.price_mode: expected \"level\" or \"return\"");
    } else if (key == "anchor") spec.anchor = number(key, v);
    else if (key == "unit") spec.unit = number(key, v);
    else if (key == "persistence") spec.persistence = number(key, v);
    else if (key == "coupling") spec.coupling = number(key, v);
    else if (key == "mean_separation") spec.mean_separation = number(key, v);
    else if (key == "range") spec.range = number(key, v);
    else if (key == "sigma") spec.sigma = per_state(key, v);
    else if (key == "event_concentration") spec.event_concentration = per_state(key, v);
    else if (key == "neighbors") {
      if (!v.is_array()) throw ConfigError("spec.neighbors: expected an array of index arrays");
      std::vector<std::vector<int>> sets;
      for (std::size_t s = 0; s < v.size(); ++s) {
        const std::string path = "neighbors[" + std::to_string(s) + "]";
        if (!v[s].is_array()) throw ConfigError("spec." + path + ": expected an array");
        std::vector<int> set;
        for (std::size_t j = 0; j < v[s].size(); ++j)
          set.push_back(static_cast<int>(integer(path + "[" + std::to_string(j) + "]", v[s][j])));
        sets.push_back(std::move(set));
      }
      spec.neighbors = std::move(sets);
    } else if (key == "params") {
      try {
        spec.params = params_from_json(v.dump());
      } catch (const Error& e) {
        throw ConfigError(std::string("spec.params: ") + e.what());
      }
    } else {
      throw ConfigError("spec." + key + ": unknown key");
    }
  }
  if (spec.params) {
    if (!doc.contains("stocks")) spec.stocks = spec.params->num_stocks();
    if (!doc.contains("states")) spec.states = spec.params->states;
    if (!doc.contains("classes")) spec.classes = spec.params->classes;
  }
  spec.validate();
  return spec;
}

GeneratorSpec load_generator_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_generator_spec(ss.str());
}

ModelParams generator_params(const GeneratorSpec& spec) {
  spec.validate();
  if (spec.params) return *spec.params;
  const int S = spec.stocks, H = spec.states, F = spec.classes;
  ModelParams p;
  p.states = H;
  p.classes = F;
  for (int s = 0; s < S; ++s) p.stock_ids.push_back(stock_name(s));
  if (spec.neighbors) {
    p.neighbors = *spec.neighbors;
  } else {
    for (int s = 0; s < S; ++s)
      p.neighbors.push_back(S == 1 ? std::vector<int>{s} : std::vector<int>{s, (s + 1) % S});
  }
  p.initial = Eigen::MatrixXd::Constant(S, H, 1.0 / H);
  for (int s = 0; s < S; ++s) {
    const auto& set = p.neighbors[static_cast<std::size_t>(s)];
    const auto self = static_cast<std::size_t>(std::find(set.begin(), set.end(), s) - set.begin());
    const JointStateIndex index = p.joint_index(s);
    Eigen::MatrixXd A(index.size(), H);
    for (int r = 0; r < index.size(); ++r) {
      const auto digits = index.decode(r);
      Eigen::RowVectorXd base =
          Eigen::RowVectorXd::Constant(H, H == 1 ? 1.0 : (1.0 - spec.persistence) / (H - 1));
      if (H > 1) base(digits[self]) = spec.persistence;
      if (set.size() > 1) {
        Eigen::RowVectorXd vote = Eigen::RowVectorXd::Zero(H);
        for (std::size_t j = 0; j < set.size(); ++j)
          if (j != self) vote(digits[j]) += 1.0 / static_cast<double>(set.size() - 1);
        A.row(r) = (1.0 - spec.coupling) * base + spec.coupling * vote;
      } else {
        A.row(r) = base;
      }
    }
    p.transition.push_back(std::move(A));

    Eigen::MatrixXd mu(H, kPriceComponents), sd(H, kPriceComponents);
    for (int h = 0; h < H; ++h) {
      const double sigma = per_state_value(spec.sigma, h);
      sd.row(h).setConstant(sigma);
      const double m = H == 1 ? 0.0 : spec.mean_separation * (static_cast<double>(h) / (H - 1) - 0.5);
      const double spread = spec.price_mode == PriceMode::kLevel ? spec.range * sigma : 0.0;
      mu.row(h) << m, m + spread, m - spread, m;
    }
    p.gauss_mean.push_back(std::move(mu));
    p.gauss_std.push_back(std::move(sd));

    Eigen::MatrixXd table(H, F);
    for (int h = 0; h < H; ++h) {
      const double c = per_state_value(spec.event_concentration, h);
      if (F == 1) {
        table(h, 0) = 1.0;
      } else {
        table.row(h).setConstant((1.0 - c) / (F - 1));
        table(h, h % F) = c;
      }
    }
    p.event_table.push_back(std::move(table));
  }
  p.price_center = Eigen::MatrixXd::Constant(S, kPriceComponents,
                                             spec.price_mode == PriceMode::kLevel ? spec.anchor : 0.0);
  p.price_scale = Eigen::MatrixXd::Constant(S, kPriceComponents,
                                            spec.price_mode == PriceMode::kLevel ? spec.unit : 1.0);
  p.validate();
  return p;
}

std::vector<std::string> business_days(int count) {
  using namespace std::chrono;
  std::vector<std::string> out;
  sys_days day = year{2020} / January / 1;
  while (static_cast<int>(out.size()) < count) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day};
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      out.emplace_back(buf);
    }
    day += days{1};
  }
  return out;
}

SyntheticData sample(const GeneratorSpec& spec) {
  SyntheticData data;
  data.truth = generator_params(spec);
  const auto& p = data.truth;
  const int S = p.num_stocks(), T = spec.days;
  data.states.resize(T, S);

  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      CounterRng rng(spec.seed, stream_id(kStateStream, s), static_cast<std::uint64_t>(t));
      if (t == 0) {
        data.states(t, s) = rng.categorical(p.initial.row(s));
      } else {
        const auto& set = p.neighbors[static_cast<std::size_t>(s)];
        std::vector<int> digits;
        for (int j : set) digits.push_back(data.states(t - 1, j));
        const int r = p.joint_index(s).encode(digits);
        data.states(t, s) = rng.categorical(p.transition[static_cast<std::size_t>(s)].row(r));
      }
    }

  std::vector<PriceTable> prices(static_cast<std::size_t>(S), PriceTable(T, kPriceComponents));
  data.events = EventGrid(T, S);
  for (int s = 0; s < S; ++s) {
    double prev_close = spec.anchor;
    for (int t = 0; t < T; ++t) {
      const int h = data.states(t, s);
      CounterRng rng(spec.seed, stream_id(kPriceStream, s), static_cast<std::uint64_t>(t));
      Eigen::Vector4d raw;
      for (int c = 0; c < kPriceComponents; ++c) {
        const double x = p.gauss_mean[static_cast<std::size_t>(s)](h, c) +
                         p.gauss_std[static_cast<std::size_t>(s)](h, c) * rng.normal();
        if (spec.price_mode == PriceMode::kLevel)
          raw(c) = p.price_center(s, c) + p.price_scale(s, c) * x;
        else
          raw(c) = prev_close * std::max(1.0 + spec.unit * x, 1e-3);
      }
      // Keep the bar consistent: high and low bracket open and close.
      raw(1) = std::max({raw(1), raw(0), raw(3)});
      raw(2) = std::min({raw(2), raw(0), raw(3)});
      if ((raw.array() <= 0).any())
        throw InputError("synthetic prices went non-positive; raise spec.anchor or lower spec.unit");
      prices[static_cast<std::size_t>(s)].row(t) = raw.transpose();
      prev_close = raw(3);

      CounterRng ev(spec.seed, stream_id(kEventStream, s), static_cast<std::uint64_t>(t));
      const int c = ev.categorical(p.event_table[static_cast<std::size_t>(s)].row(h));
      CounterRng drop(spec.seed, stream_id(kDropStream, s), static_cast<std::uint64_t>(t));
      if (!(drop.uniform() < spec.event_sparsity)) data.events.set(t, s, c);
    }
  }
  data.panel = AlignedPanel(p.stock_ids, business_days(T), std::move(prices));
  return data;
}

void write_states_csv(const Eigen::MatrixXi& states, const AlignedPanel& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "stock_id,date,state\n";
  for (int s = 0; s < static_cast<int>(states.cols()); ++s)
    for (int t = 0; t < static_cast<int>(states.rows()); ++t)
      out << panel.stock_ids()[static_cast<std::size_t>(s)] << ','
          << panel.dates()[static_cast<std::size_t>(t)] << ',' << states(t, s) << '\n';
}

Eigen::MatrixXi load_states_csv(const std::string& path, const AlignedPanel& panel) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open state file '" + path + "'");
  std::string line;
  if (!reader.next(line) || line != "stock_id,date,state")
    throw ParseError(path, 1, "header must be stock_id,date,state");
  Eigen::MatrixXi states = Eigen::MatrixXi::Constant(panel.num_days(), panel.num_stocks(), -1);
  const auto& dates = panel.dates();
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 3) throw ParseError(path, reader.line_no(), "expected 3 fields");
    const int s = panel.stock_index(std::string(f[0]));
    const auto it = std::lower_bound(dates.begin(), dates.end(), std::string(f[1]));
    if (it == dates.end() || *it != f[1]) throw ParseError(path, reader.line_no(), "date not in calendar");
    const auto h = csv::parse_int(f[2]);
    if (!h || *h < 0) throw ParseError(path, reader.line_no(), "state must be a non-negative integer");
    states(static_cast<int>(it - dates.begin()), s) = static_cast<int>(*h);
  }
  return states;
}

}  // namespace echmm

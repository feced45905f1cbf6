#include "echmm/config.hpp"

#include "echmm/csv.hpp"
#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace echmm {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"paths.prices", "string", "", {}, "price CSV for prepare"},
      {"paths.embeddings", "string", "", {}, "embedding CSV for prepare"},
      {"paths.dataset", "string", "", {}, "dataset directory"},
      {"paths.output", "string", "", {}, "output directory for reports and CSVs"},
      {"market.missing_days", "string", "forward_fill", {"forward_fill", "reject"},
       "handling of days missing for a stock"},
      {"correlation.threshold", "double", "0.6", {}, "minimum Pearson coefficient for a neighbor"},
      {"correlation.max_neighbors", "int", "4", {}, "largest neighbor set, the stock included"},
      {"correlation.source", "string", "train", {"train", "dataset", "none"},
       "graph used by backtest: rebuilt on the training days, read from the dataset, or no coupling"},
      {"events.clusters", "int", "300", {}, "event classes F"},
      {"events.dim", "int", "100", {}, "embedding dimension D"},
      {"events.fill_policy", "string", "full", {}, "full, none or partial:<fraction>"},
      {"events.seed", "uint", "0", {}, "seed for clustering and partial fill"},
      {"events.max_iters", "int", "100", {}, "Lloyd iteration cap"},
      {"events.enabled", "bool", "true", {}, "use the event stream at all"},
      {"model.states", "int", "2", {}, "hidden states per stock"},
      {"model.smoothing", "double", "1", {}, "additive smoothing of event tables"},
      {"model.sigma_floor", "double", "0.0001", {}, "lower bound on standardized deviations"},
      {"em.max_iters", "int", "50", {}, "EM iteration cap"},
      {"em.tol", "double", "0.0001", {}, "relative improvement that stops EM"},
      {"em.particles", "int", "2000", {}, "particles K"},
      {"em.seed", "uint", "0", {}, "particle filter seed"},
      {"em.q_mode", "string", "ancestry", {"ancestry", "mean_field"}, "joint responsibility estimate"},
      {"em.resampler", "string", "systematic", {"systematic", "multinomial"}, "resampling scheme"},
      {"estep.smoothing_lag", "int", "20", {}, "genealogy lag for beliefs; negative uses the last day"},
      {"estep.smoother", "string", "auto", {"auto", "backward", "genealogy"}, "how beliefs are smoothed"},
      {"mstep.q_squared", "bool", "false", {}, "use squared responsibilities in the transition update"},
      {"predict.pool_length", "int", "10", {}, "days in the training pool"},
      {"predict.k", "int", "12", {}, "neighbors in the k-NN vote"},
      {"predict.pooled_history", "bool", "false", {}, "share history across stocks"},
      {"predict.warm_start", "bool", "true", {}, "start each pool from the previous parameters"},
      {"predict.ll_scope", "string", "final_day", {"final_day", "pool"}, "log-likelihood used as feature"},
      {"backtest.train_first", "int", "0", {}, "first training day"},
      {"backtest.train_days", "int", "0", {}, "training days; 0 uses five sixths of the panel"},
      {"backtest.test_days", "int", "0", {}, "test days; 0 uses the rest of the panel"},
      {"run.threads", "int", "1", {}, "worker threads"},
  };
  return keys;
}

namespace {

const ConfigKey& find_key(const std::string& key) {
  const auto& keys = config_keys();
  const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.key == key; });
  if (it == keys.end()) throw ConfigError("unknown key '" + key + "'");
  return *it;
}

std::string check_value(const ConfigKey& k, const std::string& value) {
  const auto bad = [&](const std::string& what) {
    throw ConfigError(k.key + ": '" + value + "' " + what);
  };
  if (k.type == "int") {
    if (!csv::parse_int(value)) bad("is not an integer");
  } else if (k.type == "uint") {
    const auto v = csv::parse_int(value);
    if (!v || *v < 0) bad("is not a non-negative integer");
  } else if (k.type == "double") {
    const auto v = csv::parse_double(value);
    if (!v || !std::isfinite(*v)) bad("is not a number");
  } else if (k.type == "bool") {
    if (value != "true" && value != "false") bad("is not true or false");
  } else if (!k.choices.empty()) {
    if (std::find(k.choices.begin(), k.choices.end(), value) == k.choices.end()) {
      std::string list;
      for (const auto& c : k.choices) list += (list.empty() ? "" : ", ") + c;
      bad("is not one of " + list);
    }
  }
  if (k.key == "events.fill_policy") {
    try {
      FillPolicy::parse(value);
    } catch (const Error& e) {
      bad(std::string("is not a fill policy (") + e.what() + ")");
    }
  }
  return value;
}

void flatten(const nlohmann::json& node, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [key, v] : node.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (v.is_object()) {
      flatten(v, path, out);
    } else if (v.is_string()) {
      out.emplace_back(path, v.get<std::string>());
    } else if (v.is_boolean()) {
      out.emplace_back(path, v.get<bool>() ? "true" : "false");
    } else if (v.is_number_integer() || v.is_number_unsigned()) {
      out.emplace_back(path, v.dump());
    } else if (v.is_number_float()) {
      out.emplace_back(path, csv::format_double(v.get<double>()));
    } else {
      throw ConfigError(path + ": unsupported value " + v.dump());
    }
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void RunConfig::merge_json(const std::string& text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(origin + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(origin + " must be a JSON object");
  std::vector<std::pair<std::string, std::string>> pairs;
  flatten(doc, "", pairs);
  for (const auto& [key, value] : pairs) set(key, value);
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_json(ss.str(), path);
}

void RunConfig::apply_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  values_[key] = check_value(find_key(key), value);
}

std::string RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const { return *csv::parse_int(get_string(key)); }

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  return static_cast<std::uint64_t>(*csv::parse_int(get_string(key)));
}

double RunConfig::get_double(const std::string& key) const { return *csv::parse_double(get_string(key)); }

bool RunConfig::get_bool(const std::string& key) const { return get_string(key) == "true"; }

std::string RunConfig::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& k : config_keys()) {
    const auto dot = k.key.find('.');
    auto& section = doc[k.key.substr(0, dot)];
    const auto name = k.key.substr(dot + 1);
    const auto& v = values_.at(k.key);
    if (k.type == "int") section[name] = get_int(k.key);
    else if (k.type == "uint") section[name] = get_uint(k.key);
    else if (k.type == "double") section[name] = get_double(k.key);
    else if (k.type == "bool") section[name] = v == "true";
    else section[name] = v;
  }
  return doc.dump(2) + "\n";
}

std::string config_help() {
  std::ostringstream out;
  out << "Configuration keys (set with --config FILE or --set key=value; the command line wins):\n";
  for (const auto& k : config_keys()) {
    out << "  " << k.key << " (" << k.type << ", default "
        << (k.default_value.empty() ? "\"\"" : k.default_value) << ")";
    if (!k.choices.empty()) {
      out << " {";
      for (std::size_t i = 0; i < k.choices.size(); ++i) out << (i ? "|" : "") << k.choices[i];
      out << "}";
    }
    out << "\n      " << k.help << "\n";
  }
  return out.str();
}

EmConfig em_config(const RunConfig& c) {
  EmConfig em;
  em.max_iters = static_cast<int>(c.get_int("em.max_iters"));
  em.tol = c.get_double("em.tol");
  em.particles = static_cast<int>(c.get_int("em.particles"));
  em.seed = c.get_uint("em.seed");
  em.q_squared = c.get_bool("mstep.q_squared");
  em.states = static_cast<int>(c.get_int("model.states"));
  em.smoothing = c.get_double("model.smoothing");
  em.sigma_floor = c.get_double("model.sigma_floor");
  em.filter.q_mode = c.get_string("em.q_mode") == "mean_field" ? QMode::kMeanField : QMode::kAncestry;
  em.filter.resampler =
      c.get_string("em.resampler") == "multinomial" ? Resampler::kMultinomial : Resampler::kSystematic;
  em.filter.smoothing_lag = static_cast<int>(c.get_int("estep.smoothing_lag"));
  const auto smoother = c.get_string("estep.smoother");
  em.filter.smoother = smoother == "backward"    ? Smoother::kBackward
                       : smoother == "genealogy" ? Smoother::kGenealogy
                                                 : Smoother::kAuto;
  em.filter.threads = std::max(1, static_cast<int>(c.get_int("run.threads")));
  em.validate();
  return em;
}

PoolConfig pool_config(const RunConfig& c, int classes) {
  PoolConfig p;
  p.pool_length = static_cast<int>(c.get_int("predict.pool_length"));
  p.k = static_cast<int>(c.get_int("predict.k"));
  p.pooled_history = c.get_bool("predict.pooled_history");
  p.warm_start = c.get_bool("predict.warm_start");
  p.ll_scope = c.get_string("predict.ll_scope") == "pool" ? LlScope::kPool : LlScope::kFinalDay;
  p.classes = classes;
  p.em = em_config(c);
  p.validate();
  return p;
}

FillPolicy fill_policy(const RunConfig& c) { return FillPolicy::parse(c.get_string("events.fill_policy")); }

MissingDayPolicy missing_day_policy(const RunConfig& c) {
  return c.get_string("market.missing_days") == "reject" ? MissingDayPolicy::kReject
                                                          : MissingDayPolicy::kForwardFill;
}

Split split_from_config(const RunConfig& c, int num_days) {
  const auto first = static_cast<int>(c.get_int("backtest.train_first"));
  auto train = static_cast<int>(c.get_int("backtest.train_days"));
  auto test = static_cast<int>(c.get_int("backtest.test_days"));
  if (train < 0 || test < 0 || first < 0) throw ConfigError("backtest day counts must be non-negative");
  if (train == 0) train = num_days * 5 / 6 - first;
  Split s;
  s.train_first = first;
  s.train_last = first + train - 1;
  s.test_first = s.train_last + 1;
  s.test_last = test == 0 ? num_days - 1 : s.test_first + test - 1;
  return s;
}

}  // namespace echmm

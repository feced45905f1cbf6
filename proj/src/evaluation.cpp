#include "echmm/evaluation.hpp"

#include "echmm/csv.hpp"
#include "json.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>

namespace echmm {

void ConfusionMatrix::add(Direction predicted, Direction actual) {
  const bool p = predicted == Direction::kUp;
  const bool a = actual == Direction::kUp;
  if (p && a) ++tp;
  else if (!p && !a) ++tn;
  else if (p) ++fp;
  else ++fn;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw UndefinedMetricError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double f1(const ConfusionMatrix& cm) {
  const long denom = 2 * cm.tp + cm.fp + cm.fn;
  if (denom == 0) throw UndefinedMetricError("f1 is undefined when there are only true negatives");
  return 2.0 * static_cast<double>(cm.tp) / static_cast<double>(denom);
}

double mcc(const ConfusionMatrix& cm) {
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
  const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.acc = accuracy(cm);
  if (2 * cm.tp + cm.fp + cm.fn > 0) m.f1 = f1(cm);
  m.mcc = mcc(cm);
  return m;
}

void Split::validate(int num_days, int pool_length) const {
  if (train_first < 0 || train_last < train_first)
    throw ConfigError("training range is empty or negative");
  if (test_first <= train_last)
    throw ConfigError("test range [" + std::to_string(test_first) + ", " + std::to_string(test_last) +
                      "] overlaps the training range ending at " + std::to_string(train_last));
  if (test_last < test_first) throw ConfigError("test range is empty");
  if (test_last >= num_days)
    throw ConfigError("test range ends at day " + std::to_string(test_last) + " but the panel has " +
                      std::to_string(num_days) + " days");
  if (test_first - 1 < pool_length)
    throw ConfigError("first test day needs a full training pool before it");
}

Split default_split(int num_days, double train_fraction) {
  Split s;
  s.train_first = 0;
  s.train_last = std::max(0, static_cast<int>(std::floor(num_days * train_fraction)) - 1);
  s.test_first = s.train_last + 1;
  s.test_last = num_days - 1;
  return s;
}

BacktestTrace run_backtest_trace(const AlignedPanel& panel, const EventGrid* events,
                                 const CorrelationGraph& graph, const Split& split,
                                 const PoolConfig& config, int threads) {
  config.validate();
  split.validate(panel.num_days(), config.pool_length);
  BacktestTrace trace;
  std::optional<ModelParams> warm;
  // History only sees the training range.
  const AlignedPanel train_panel = panel.slice(0, split.train_last + 1);
  std::optional<EventGrid> train_events;
  if (events) train_events = events->slice(0, split.train_last + 1);
  trace.history = build_history(train_panel, train_events ? &*train_events : nullptr, graph,
                                split.train_first, split.train_last, config, &warm);

  const int S = panel.num_stocks();
  const int n_days = split.test_last - split.test_first + 1;
  trace.tests.resize(static_cast<std::size_t>(n_days * S));
  std::vector<int> audited(static_cast<std::size_t>(n_days), 0);

  const auto predict_day = [&](int i, const ModelParams* start, const PoolConfig& cfg) {
    const int p = split.test_first + i;
    AccessAudit audit;
    auto pool = slide_pool(panel, events, graph, p - 1, cfg, start, &audit);
    if (audit.last_day >= p)
      throw Error("look-ahead: prediction for day " + std::to_string(p) + " read day " +
                  std::to_string(audit.last_day));
    audited[static_cast<std::size_t>(i)] = 1;
    for (int s = 0; s < S; ++s) {
      auto& rec = trace.tests[static_cast<std::size_t>(i * S + s)];
      rec.stock = s;
      rec.day = p;
      rec.actual = realized_direction(panel, p - 1, s);
      rec.log_likelihood = pool.log_likelihood(s);
    }
    return pool;
  };

  if (config.warm_start || threads <= 1) {
    PoolConfig cfg = config;
    cfg.em.filter.threads = threads;
    for (int i = 0; i < n_days; ++i) {
      auto pool = predict_day(i, warm ? &*warm : nullptr, cfg);
      warm = std::move(pool.params);
    }
  } else {
    PoolConfig cfg = config;
    cfg.em.filter.threads = 1;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_days));
    parallel_for(static_cast<std::size_t>(n_days), threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        try {
          predict_day(static_cast<int>(i), nullptr, cfg);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
  }
  trace.audited = std::accumulate(audited.begin(), audited.end(), 0);
  return trace;
}

BacktestReport score_trace(const BacktestTrace& trace, int num_stocks, int k, bool pooled_history) {
  BacktestReport report;
  report.per_stock.assign(static_cast<std::size_t>(num_stocks), ConfusionMatrix{});
  report.history_size = static_cast<int>(trace.history.size());
  report.audited = trace.audited;
  std::vector<std::vector<HistoryEntry>> by_stock;
  for (int s = 0; s < num_stocks; ++s) by_stock.push_back(history_for(trace.history, s, pooled_history));
  for (const auto& t : trace.tests) {
    PredictionRecord rec = t;
    rec.predicted = predict_next(by_stock[static_cast<std::size_t>(t.stock)], t.log_likelihood, k);
    report.pooled.add(rec.predicted, rec.actual);
    report.per_stock[static_cast<std::size_t>(t.stock)].add(rec.predicted, rec.actual);
    report.predictions.push_back(rec);
  }
  return report;
}

BacktestReport backtest(const AlignedPanel& panel, const EventGrid* events,
                        const CorrelationGraph& graph, const Split& split, const PoolConfig& config,
                        int threads) {
  const auto trace = run_backtest_trace(panel, events, graph, split, config, threads);
  return score_trace(trace, panel.num_stocks(), config.k, config.pooled_history);
}

namespace {

nlohmann::json metrics_json(const ConfusionMatrix& cm) {
  nlohmann::json j{{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}};
  if (cm.total() == 0) return j;
  const auto m = compute_metrics(cm);
  j["acc"] = m.acc;
  j["f1"] = m.f1 ? nlohmann::json(*m.f1) : nlohmann::json(nullptr);
  j["mcc"] = m.mcc;
  return j;
}

}  // namespace

std::string report_to_json(const BacktestReport& report, const AlignedPanel& panel) {
  nlohmann::json doc;
  doc["pooled"] = metrics_json(report.pooled);
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t s = 0; s < report.per_stock.size(); ++s) {
    auto j = metrics_json(report.per_stock[s]);
    j["stock_id"] = panel.stock_ids()[s];
    per.push_back(std::move(j));
  }
  doc["per_stock"] = std::move(per);
  doc["predictions"] = report.predictions.size();
  doc["history_size"] = report.history_size;
  doc["look_ahead_checks"] = report.audited;
  return doc.dump(2) + "\n";
}

void write_predictions_csv(const std::vector<PredictionRecord>& predictions,
                           const AlignedPanel& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "stock_id,date,predicted,actual,log_likelihood\n";
  for (const auto& p : predictions)
    out << panel.stock_ids()[static_cast<std::size_t>(p.stock)] << ','
        << panel.dates()[static_cast<std::size_t>(p.day)] << ',' << to_string(p.predicted) << ','
        << to_string(p.actual) << ',' << csv::format_double(p.log_likelihood) << '\n';
}

std::vector<PredictionRow> load_predictions_csv(const std::string& path) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open prediction file '" + path + "'");
  std::string line;
  if (!reader.next(line) || line != "stock_id,date,predicted,actual,log_likelihood")
    throw ParseError(path, 1, "header must be stock_id,date,predicted,actual,log_likelihood");
  std::vector<PredictionRow> rows;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw ParseError(path, reader.line_no(), "expected 5 fields");
    PredictionRow row;
    row.stock_id = std::string(f[0]);
    row.date = std::string(f[1]);
    try {
      row.predicted = parse_direction(std::string(f[2]));
      row.actual = parse_direction(std::string(f[3]));
    } catch (const Error& e) {
      throw ParseError(path, reader.line_no(), e.what());
    }
    const auto ll = csv::parse_double(f[4]);
    if (!ll) throw ParseError(path, reader.line_no(), "log_likelihood is not a number");
    row.log_likelihood = *ll;
    rows.push_back(std::move(row));
  }
  return rows;
}

ConfusionMatrix confusion_from_rows(const std::vector<PredictionRow>& rows) {
  ConfusionMatrix cm;
  for (const auto& r : rows) cm.add(r.predicted, r.actual);
  return cm;
}

std::vector<SweepRow> sweep(const AlignedPanel& panel, const EventGrid* events,
                            const CorrelationGraph& graph, const Split& split,
                            const PoolConfig& config, const std::string& parameter,
                            const std::vector<std::string>& values, std::uint64_t fill_seed,
                            int threads) {
  if (values.empty()) throw ConfigError("sweep over '" + parameter + "' has no values");
  const auto as_int = [&](const std::string& v) {
    const auto n = csv::parse_int(v);
    if (!n) throw ConfigError("sweep value '" + v + "' for " + parameter + " is not an integer");
    return static_cast<int>(*n);
  };
  std::vector<SweepRow> rows;
  const auto push = [&](const std::string& value, const BacktestReport& r) {
    rows.push_back({parameter, value, compute_metrics(r.pooled)});
  };
  if (parameter == "k") {
    const auto trace = run_backtest_trace(panel, events, graph, split, config, threads);
    for (const auto& v : values)
      push(v, score_trace(trace, panel.num_stocks(), as_int(v), config.pooled_history));
  } else if (parameter == "pool_length") {
    for (const auto& v : values) {
      PoolConfig cfg = config;
      cfg.pool_length = as_int(v);
      push(v, backtest(panel, events, graph, split, cfg, threads));
    }
  } else if (parameter == "history_length") {
    for (const auto& v : values) {
      Split sp = split;
      sp.train_first = split.train_last - as_int(v) + 1;
      push(v, backtest(panel, events, graph, sp, config, threads));
    }
  } else if (parameter == "fill_policy") {
    if (!events) throw ConfigError("fill_policy sweep needs event observations");
    const EventGrid originals = events->originals();
    for (const auto& v : values) {
      const EventGrid filled = forward_fill(originals, FillPolicy::parse(v), fill_seed);
      push(v, backtest(panel, &filled, graph, split, config, threads));
    }
  } else {
    throw ConfigError("unknown sweep parameter '" + parameter +
                      "' (expected pool_length, k, fill_policy or history_length)");
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "parameter,value,acc,f1,mcc\n";
  for (const auto& r : rows)
    out << r.parameter << ',' << r.value << ',' << csv::format_double(r.metrics.acc) << ','
        << (r.metrics.f1 ? csv::format_double(*r.metrics.f1) : std::string()) << ','
        << csv::format_double(r.metrics.mcc) << '\n';
}

}  // namespace echmm

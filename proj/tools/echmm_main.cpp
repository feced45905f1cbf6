// echmm: prepare datasets, fit pools, backtest the direction predictor,
// generate synthetic data and score prediction files.

#include "echmm/config.hpp"
#include "echmm/csv.hpp"
#include "echmm/dataset.hpp"
#include "echmm/model_io.hpp"
#include "echmm/synthetic.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace echmm;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> assignments;
  int threads = 0;
};

RunConfig make_config(const Common& common) {
  RunConfig config;
  if (!common.config_file.empty()) config.load_file(common.config_file);
  for (const auto& a : common.assignments) config.apply_assignment(a);
  if (common.threads > 0) config.set("run.threads", std::to_string(common.threads));
  return config;
}

std::string pick(const std::string& flag, const RunConfig& config, const std::string& key,
                 const std::string& what) {
  const std::string value = flag.empty() ? config.get_string(key) : flag;
  if (value.empty()) throw ConfigError("missing " + what + " (flag or " + key + ")");
  return value;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

void print_metrics(const std::string& label, const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    std::cout << label << "  (no predictions)\n";
    return;
  }
  const auto m = compute_metrics(cm);
  std::printf("%-12s %8s %8s %8s   tp=%ld tn=%ld fp=%ld fn=%ld\n", label.c_str(),
              format_metric(m.acc).c_str(), format_metric(m.f1).c_str(), format_metric(m.mcc).c_str(),
              cm.tp, cm.tn, cm.fp, cm.fn);
}

CorrelationGraph backtest_graph(const RunConfig& config, const Dataset& data, int first, int last) {
  const auto source = config.get_string("correlation.source");
  if (source == "none") return CorrelationGraph::isolated(data.panel.stock_ids());
  if (source == "dataset") return data.graph;
  return build_graph(data.panel.slice(first, last + 1), config.get_double("correlation.threshold"),
                     static_cast<int>(config.get_int("correlation.max_neighbors")));
}

int cmd_prepare(const RunConfig& config, const std::string& prices_flag,
                const std::string& embeddings_flag, const std::string& out_flag) {
  const auto prices_path = pick(prices_flag, config, "paths.prices", "price CSV");
  const auto embeddings_path = pick(embeddings_flag, config, "paths.embeddings", "embedding CSV");
  const auto out_dir = pick(out_flag, config, "paths.dataset", "output dataset directory");

  Dataset data;
  data.source = "prepare";
  data.panel = load_price_csv(prices_path, missing_day_policy(config));
  const auto raw = load_embedding_csv(embeddings_path, data.panel,
                                      static_cast<int>(config.get_int("events.dim")));
  const auto daily = average_by_stock_day(raw);
  const int clusters = static_cast<int>(config.get_int("events.clusters"));
  data.codebook = fit_codebook(daily, clusters, config.get_uint("events.seed"),
                               static_cast<int>(config.get_int("events.max_iters")));
  data.classes = clusters;
  EventGrid observed(data.panel.num_days(), data.panel.num_stocks());
  for (const auto& e : daily) {
    const auto obs = assign_event_class(*data.codebook, e);
    observed.set(obs.day_index, data.panel.stock_index(obs.stock_id), obs.event_class);
  }
  const auto policy = fill_policy(config);
  data.fill_policy = policy.to_string();
  data.events = forward_fill(observed, policy, config.get_uint("events.seed"));
  data.graph = build_graph(data.panel, config.get_double("correlation.threshold"),
                           static_cast<int>(config.get_int("correlation.max_neighbors")));
  write_dataset(data, out_dir, config.to_json());
  std::cout << "prepared " << data.panel.num_stocks() << " stocks x " << data.panel.num_days()
            << " days, " << daily.size() << " event days (" << data.events.count()
            << " after fill) into " << out_dir << "\n";
  return 0;
}

int cmd_synth(const RunConfig& config, const std::string& spec_path, const std::string& out_flag) {
  const auto out_dir = pick(out_flag, config, "paths.dataset", "output dataset directory");
  const auto spec = load_generator_spec(spec_path);
  auto sample_data = sample(spec);
  Dataset data;
  data.source = "synth";
  data.panel = sample_data.panel;
  data.classes = spec.classes;
  const auto policy = fill_policy(config);
  data.fill_policy = policy.to_string();
  data.events = forward_fill(sample_data.events, policy, config.get_uint("events.seed"));
  data.graph = CorrelationGraph::from_neighbor_sets(data.panel.stock_ids(), sample_data.truth.neighbors);
  if (data.panel.num_days() >= 3) {
    try {
      data.graph.coefficients = build_graph(data.panel, 1.0, 1).coefficients;
    } catch (const UndefinedCorrelationError&) {
      // Identity coefficients remain.
    }
  }
  write_dataset(data, out_dir, config.to_json());
  write_states_csv(sample_data.states, data.panel, (fs::path(out_dir) / "true_states.csv").string());
  save_params(sample_data.truth, (fs::path(out_dir) / "true_params.json").string());
  std::cout << "synthesized " << data.panel.num_stocks() << " stocks x " << data.panel.num_days()
            << " days, " << sample_data.events.count() << " events into " << out_dir << "\n";
  return 0;
}

int cmd_fit(const RunConfig& config, const std::string& dataset_flag, const std::string& out_flag,
            int first, int last) {
  const auto data = load_dataset(pick(dataset_flag, config, "paths.dataset", "dataset directory"));
  const auto out_dir = pick(out_flag, config, "paths.output", "output directory");
  if (last < 0) last = data.panel.num_days() - 1;
  if (first < 0 || first >= last || last >= data.panel.num_days())
    throw RangeError("fit window [" + std::to_string(first) + ", " + std::to_string(last) +
                     "] is outside the panel");
  const auto window = data.panel.slice(first, last + 1);
  const auto events = data.events.slice(first, last + 1);
  const bool use_events = config.get_bool("events.enabled");
  const auto graph = backtest_graph(config, data, first, last);
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "training_log.jsonl", std::ios::binary);
  auto result = fit(window, use_events ? &events : nullptr, graph, data.classes, em_config(config),
                    std::nullopt, &log);
  align_labels(result.params);
  save_params(result.params, (fs::path(out_dir) / "params.json").string());
  std::cout << "fit " << result.iterations << " iterations; final expected log-likelihood "
            << result.ll_trace.back() << " (MC s.e. " << result.ll_stderr.back() << ")\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  for (char c : text) {
    if (c == ',') {
      out.push_back(item);
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  out.push_back(item);
  return out;
}

int cmd_backtest(const RunConfig& config, const std::string& dataset_flag, const std::string& out_flag,
                 const std::vector<std::string>& sweeps) {
  const auto data = load_dataset(pick(dataset_flag, config, "paths.dataset", "dataset directory"));
  const auto out_dir = pick(out_flag, config, "paths.output", "output directory");
  const int threads = static_cast<int>(config.get_int("run.threads"));
  const auto split = split_from_config(config, data.panel.num_days());
  const auto pool = pool_config(config, data.classes);
  split.validate(data.panel.num_days(), pool.pool_length);
  const auto graph = backtest_graph(config, data, split.train_first, split.train_last);
  const EventGrid* events = config.get_bool("events.enabled") ? &data.events : nullptr;

  fs::create_directories(out_dir);
  const auto report = backtest(data.panel, events, graph, split, pool, threads);
  write_predictions_csv(report.predictions, data.panel, (fs::path(out_dir) / "predictions.csv").string());
  write_text(fs::path(out_dir) / "report.json", report_to_json(report, data.panel));

  std::printf("%-12s %8s %8s %8s\n", "", "ACC", "F1", "MCC");
  print_metrics("pooled", report.pooled);
  for (int s = 0; s < data.panel.num_stocks(); ++s)
    print_metrics(data.panel.stock_ids()[static_cast<std::size_t>(s)],
                  report.per_stock[static_cast<std::size_t>(s)]);

  for (const auto& sw : sweeps) {
    const auto eq = sw.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--sweep expects name=v1,v2,..., got '" + sw + "'");
    const auto name = sw.substr(0, eq);
    const auto rows = sweep(data.panel, events, graph, split, pool, name, split_list(sw.substr(eq + 1)),
                            config.get_uint("events.seed"), threads);
    const auto path = fs::path(out_dir) / ("sweep_" + name + ".csv");
    write_sweep_csv(rows, path.string());
    std::cout << "sweep " << name << ": " << rows.size() << " rows -> " << path.string() << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& predictions_path, const std::string& out_path) {
  const auto rows = load_predictions_csv(predictions_path);
  const auto cm = confusion_from_rows(rows);
  std::printf("%-12s %8s %8s %8s\n", "", "ACC", "F1", "MCC");
  print_metrics("pooled", cm);
  if (!out_path.empty()) {
    const auto m = compute_metrics(cm);
    std::ostringstream doc;
    doc << "{\n  \"tp\": " << cm.tp << ",\n  \"tn\": " << cm.tn << ",\n  \"fp\": " << cm.fp
        << ",\n  \"fn\": " << cm.fn << ",\n  \"acc\": " << csv::format_double(m.acc)
        << ",\n  \"f1\": " << (m.f1 ? csv::format_double(*m.f1) : "null")
        << ",\n  \"mcc\": " << csv::format_double(m.mcc) << "\n}\n";
    write_text(out_path, doc.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled hidden Markov model stock direction predictor"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(config_help());
  Common common;
  app.add_option("--config", common.config_file, "JSON configuration file");
  app.add_option("--set", common.assignments, "override a configuration key (key=value)")
      ->allow_extra_args(false);
  app.add_option("--threads", common.threads, "worker threads (overrides run.threads)")->check(CLI::PositiveNumber);

  std::string prices, embeddings, dataset, out, spec, predictions;
  std::vector<std::string> sweeps;
  int first = 0, last = -1;

  auto* prepare = app.add_subcommand("prepare", "build a dataset directory from prices and embeddings");
  prepare->add_option("--prices", prices, "price CSV");
  prepare->add_option("--embeddings", embeddings, "embedding CSV");
  prepare->add_option("--out", out, "dataset directory to write");

  auto* backtest_cmd = app.add_subcommand("backtest", "run the rolling-pool backtest on a dataset");
  backtest_cmd->add_option("--dataset", dataset, "dataset directory");
  backtest_cmd->add_option("--out", out, "directory for the report and CSVs");
  backtest_cmd
      ->add_option("--sweep", sweeps, "name=v1,v2,... over pool_length, k, fill_policy or history_length")
      ->allow_extra_args(false);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset from a generator spec");
  synth->add_option("spec", spec, "generator spec (JSON)")->required();
  synth->add_option("--out", out, "dataset directory to write");

  auto* fit_cmd = app.add_subcommand("fit", "train one window and write its parameters");
  fit_cmd->add_option("--dataset", dataset, "dataset directory");
  fit_cmd->add_option("--out", out, "directory for params.json and training_log.jsonl");
  fit_cmd->add_option("--first", first, "first day of the window");
  fit_cmd->add_option("--last", last, "last day of the window (default: last day)");

  auto* eval = app.add_subcommand("eval", "metrics from a prediction CSV");
  eval->add_option("predictions", predictions, "prediction CSV")->required();
  eval->add_option("--out", out, "optional JSON metrics file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto config = make_config(common);
    if (*prepare) return cmd_prepare(config, prices, embeddings, out);
    if (*backtest_cmd) return cmd_backtest(config, dataset, out, sweeps);
    if (*synth) return cmd_synth(config, spec, out);
    if (*fit_cmd) return cmd_fit(config, dataset, out, first, last);
    if (*eval) return cmd_eval(predictions, out);
  } catch (const Error& e) {
    std::cerr << "echmm: " << e.what() << "\n";
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "echmm: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

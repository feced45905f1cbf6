#include "echmm/dataset.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace echmm {

namespace fs = std::filesystem;

void write_dataset(const Dataset& data, const std::string& dir, const std::string& config_json) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir + "': " + ec.message());
  const fs::path root(dir);
  write_price_csv(data.panel, (root / "panel.csv").string());
  write_graph_csv(data.graph, (root / "graph.csv").string());
  write_events_csv(data.events, data.panel, (root / "events.csv").string());
  nlohmann::json artifacts = {"panel.csv", "graph.csv", "events.csv"};
  if (data.codebook) {
    write_codebook_csv(*data.codebook, (root / "codebook.csv").string());
    artifacts.push_back("codebook.csv");
  }
  nlohmann::json manifest{{"format", "echmm-dataset"},
                          {"version", 1},
                          {"source", data.source},
                          {"num_stocks", data.panel.num_stocks()},
                          {"num_days", data.panel.num_days()},
                          {"classes", data.classes},
                          {"fill_policy", data.fill_policy},
                          {"artifacts", artifacts}};
  if (!config_json.empty()) manifest["config"] = nlohmann::json::parse(config_json);
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const auto require = [&](const std::string& name) {
    const auto p = root / name;
    if (!fs::exists(p))
      throw InputError("dataset '" + dir + "' is missing " + name +
                       "; run `echmm prepare` (or `echmm synth`) to create it");
    return p.string();
  };
  std::ifstream in(require("manifest.json"), std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw InputError("manifest in '" + dir + "' is not valid JSON: " + e.what());
  }
  if (manifest.value("format", "") != "echmm-dataset")
    throw InputError("'" + dir + "' does not hold an echmm dataset manifest");
  Dataset data;
  data.source = manifest.value("source", "");
  data.fill_policy = manifest.value("fill_policy", "");
  data.classes = manifest.value("classes", 1);
  data.panel = load_price_csv(require("panel.csv"), MissingDayPolicy::kReject);
  data.graph = load_graph_csv(require("graph.csv"), data.panel.stock_ids());
  data.events = load_events_csv(require("events.csv"), data.panel);
  if (fs::exists(root / "codebook.csv")) {
    data.codebook = load_codebook_csv((root / "codebook.csv").string());
    data.classes = data.codebook->clusters();
  }
  if (static_cast<int>(manifest.value("num_days", -1)) != data.panel.num_days() ||
      static_cast<int>(manifest.value("num_stocks", -1)) != data.panel.num_stocks())
    throw InputError("manifest in '" + dir + "' does not match panel.csv");
  return data;
}

}  // namespace echmm

#pragma once

#include "echmm/correlation.hpp"
#include "echmm/events.hpp"
#include "echmm/market_data.hpp"

#include <optional>
#include <string>

namespace echmm {

/// The directory handed from `prepare` (or `synth`) to `backtest`:
/// panel.csv, graph.csv, events.csv, optional codebook.csv, manifest.json.
struct Dataset {
  AlignedPanel panel;
  CorrelationGraph graph;
  EventGrid events;
  std::optional<EventCodebook> codebook;
  int classes = 1;
  std::string source;       // "prepare" or "synth"
  std::string fill_policy;  // as applied to events.csv
};

/// `config_json` is embedded in the manifest verbatim (parsed) when non-empty.
void write_dataset(const Dataset& data, const std::string& dir, const std::string& config_json = "");
Dataset load_dataset(const std::string& dir);

}  // namespace echmm

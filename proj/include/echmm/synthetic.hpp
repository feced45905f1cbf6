#pragma once

#include "echmm/correlation.hpp"
#include "echmm/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace echmm {

/// How sampled Gaussian draws become prices.
///  level:  component = anchor + unit * x, so the model's standardized frame
///          is an affine image of the generating one.
///  return: component = previous close * (1 + unit * x); the close draw sets
///          the day's direction.
enum class PriceMode { kLevel, kReturn };

struct GeneratorSpec {
  int stocks = 3;
  int days = 200;
  int states = 2;
  int classes = 4;
  std::uint64_t seed = 0;
  double event_sparsity = 0.0;  // probability an emitted event is dropped
  PriceMode price_mode = PriceMode::kLevel;
  double anchor = 100.0;
  double unit = 1.0;

  // Knobs used when `params` is not given.
  double persistence = 0.8;   // probability of keeping the previous state
  double coupling = 0.3;      // weight on the other neighbors' previous states
  std::vector<double> event_concentration{0.7};  // per state, or one for all
  double mean_separation = 2.0;
  std::vector<double> sigma{0.25};  // per state, or one for all
  double range = 4.0;  // level mode: high/low offset from the close mean, in sigmas
  std::optional<std::vector<std::vector<int>>> neighbors;  // default: {s, s+1 mod S}

  /// Explicit parameters override every knob above.
  std::optional<ModelParams> params;

  void validate() const;
};

/// Reads a spec document; unknown keys and bad values are reported with their
/// key path.
GeneratorSpec parse_generator_spec(const std::string& json_text);
GeneratorSpec load_generator_spec(const std::string& path);

/// Parameters built from the spec's knobs (or its explicit parameters).
ModelParams generator_params(const GeneratorSpec& spec);

struct SyntheticData {
  ModelParams truth;
  AlignedPanel panel;
  EventGrid events;
  Eigen::MatrixXi states;  // days x stocks
};

SyntheticData sample(const GeneratorSpec& spec);

/// Consecutive weekdays from 2020-01-01.
std::vector<std::string> business_days(int count);

/// `stock_id,date,state`.
void write_states_csv(const Eigen::MatrixXi& states, const AlignedPanel& panel, const std::string& path);
Eigen::MatrixXi load_states_csv(const std::string& path, const AlignedPanel& panel);

}  // namespace echmm

#pragma once

#include "echmm/correlation.hpp"
#include "echmm/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace echmm {

enum class QMode { kAncestry, kMeanField };
enum class Resampler { kSystematic, kMultinomial };
/// kBackward runs a backward pass over the distinct joint configurations of
/// each day's weighted particles. kGenealogy reads beliefs off the resampled
/// ancestry. kAuto picks kBackward when H^S <= kBackwardMaxConfigs.
enum class Smoother { kAuto, kBackward, kGenealogy };
inline constexpr long kBackwardMaxConfigs = 256;

struct FilterOptions {
  Resampler resampler = Resampler::kSystematic;
  QMode q_mode = QMode::kAncestry;
  /// Genealogy smoother: beliefs for day t are read at day t + lag.
  /// 0 gives filtering marginals; a negative lag uses the final day.
  int smoothing_lag = 20;
  Smoother smoother = Smoother::kAuto;
  int threads = 1;
};

struct EmConfig {
  int max_iters = 50;
  double tol = 1e-4;
  int particles = 2000;
  std::uint64_t seed = 0;
  bool q_squared = false;
  FilterOptions filter;
  int states = 2;
  double smoothing = 1.0;
  double sigma_floor = 1e-4;

  void validate() const;
};

/// K joint configurations (one state per stock) with normalized weights.
struct ParticleSet {
  int num_stocks = 0;
  std::vector<int> states;       // K x S, row-major
  Eigen::VectorXd weights;       // normalized

  int size() const { return static_cast<int>(weights.size()); }
  int state(int particle, int stock) const {
    return states[static_cast<std::size_t>(particle * num_stocks + stock)];
  }
};

/// Normalizes log-weights in place; returns log of their mean before
/// normalization.
double normalize_log_weights(const Eigen::VectorXd& log_weights, Eigen::VectorXd& weights);

/// Ancestor indices for K draws from normalized weights.
std::vector<int> resample(const Eigen::VectorXd& weights, Resampler scheme, CounterRng& rng);

struct FilterResult {
  StateBeliefs beliefs;
  double log_evidence = 0.0;   // sum over days of log mean weight
  double ll_stderr = 0.0;      // Monte Carlo standard error of the expected log-likelihood
  ParticleSet final_particles; // resampled population on the last day
};

/// Propagate / weight / resample over joint configurations; beliefs are read
/// off the particle genealogy.
FilterResult particle_filter(const ModelParams& params, const AlignedPanel& panel,
                             const EventGrid* events, int particles, std::uint64_t seed,
                             const FilterOptions& options = {});

struct EStepResult {
  StateBeliefs beliefs;
  double expected_ll = 0.0;
  double ll_stderr = 0.0;
  double log_evidence = 0.0;
};

EStepResult e_step(const ModelParams& params, const AlignedPanel& panel, const EventGrid* events,
                   const EmConfig& config);

struct MStepOptions {
  int states = 2;
  int classes = 1;
  double smoothing = 1.0;
  double sigma_floor = 1e-4;
  bool q_squared = false;
};

/// Closed-form maximizers given beliefs. The graph fixes the neighbor sets and
/// the standardization constants come from the panel.
ModelParams m_step(const StateBeliefs& beliefs, const CorrelationGraph& graph,
                   const AlignedPanel& panel, const EventGrid* events, const MStepOptions& options);

/// Uniform initial and transition tables, uniform event tables, Gaussians
/// from a per-stock 1-D k-means on standardized closes (state 0 = lowest).
ModelParams initialize_params(const AlignedPanel& panel, const CorrelationGraph& graph, int states,
                              int classes, double smoothing = 1.0, double sigma_floor = 1e-4);

/// Keeps the learned tables of `previous` but adopts the standardization of
/// `panel`, so a fit can warm-start on a shifted window.
ModelParams rebase_params(const ModelParams& previous, const AlignedPanel& panel);

/// Relabels the states of one stock: new state i is old state perm[i]. Every
/// transition tensor that references the stock is permuted consistently.
void permute_states(ModelParams& params, int stock, const std::vector<int>& perm);

/// True when some stock has two states with the same Gaussians, or a state
/// whose deviations all sit at the floor. A warm start from such parameters
/// cannot separate the states again.
bool has_collapsed_states(const ModelParams& params, double tol = 1e-9);

/// Orders each stock's states by ascending close mean, so the last state is
/// the "rise" state.
void align_labels(ModelParams& params);

struct FitResult {
  ModelParams params;
  std::vector<double> ll_trace;
  std::vector<double> ll_stderr;
  std::vector<double> log_evidence;
  int iterations = 0;
};

/// Alternates e_step / m_step until the relative improvement drops below tol
/// or max_iters is reached. Writes one JSON line per iteration to `log` when
/// given.
FitResult fit(const AlignedPanel& panel, const EventGrid* events, const CorrelationGraph& graph,
              int classes, const EmConfig& config, const std::optional<ModelParams>& init = std::nullopt,
              std::ostream* log = nullptr);

}  // namespace echmm

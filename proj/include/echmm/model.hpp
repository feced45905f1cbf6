#pragma once

// Parameters of the coupled model and the terms of its expected complete
// log-likelihood. Everything here is templated on the scalar type; the rest of
// the library uses the double instantiation (ModelParams, StateBeliefs).

#include "echmm/common.hpp"
#include "echmm/events.hpp"
#include "echmm/joint_state.hpp"
#include "echmm/market_data.hpp"

#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace echmm {

template <typename Scalar>
struct BasicModelParams {
  int states = 2;    // H
  int classes = 1;   // F
  Scalar smoothing = Scalar(1);      // additive mass on event tables
  Scalar sigma_floor = Scalar(1e-4); // in standardized units
  std::vector<std::string> stock_ids;
  std::vector<std::vector<int>> neighbors;     // C_s, ordered
  MatrixX<Scalar> initial;                     // S x H
  std::vector<MatrixX<Scalar>> transition;     // per stock: H^|C_s| x H
  std::vector<MatrixX<Scalar>> gauss_mean;     // per stock: H x 4 (standardized)
  std::vector<MatrixX<Scalar>> gauss_std;      // per stock: H x 4 (standardized)
  std::vector<MatrixX<Scalar>> event_table;    // per stock: H x F
  MatrixX<Scalar> price_center;                // S x 4
  MatrixX<Scalar> price_scale;                 // S x 4

  int num_stocks() const { return static_cast<int>(stock_ids.size()); }
  JointStateIndex joint_index(int stock) const {
    return JointStateIndex(states, static_cast<int>(neighbors[static_cast<std::size_t>(stock)].size()));
  }

  /// Throws InputError naming the first violated invariant.
  void validate(Scalar tol = Scalar(1e-9)) const;
};

using ModelParams = BasicModelParams<double>;

/// Per-day posterior summaries: z[t] is S x H; q[t][s] is H^|C_s| x H and is
/// empty at t = 0.
template <typename Scalar>
struct BasicStateBeliefs {
  std::vector<MatrixX<Scalar>> z;
  std::vector<std::vector<MatrixX<Scalar>>> q;

  int num_days() const { return static_cast<int>(z.size()); }
};

using StateBeliefs = BasicStateBeliefs<double>;

/// Which form of the transition term to evaluate.
enum class TransitionTerm {
  kResponsibility,   // sum over (R, h) of q * log A
  kMarginalProduct,  // sum over (R, h) of prod_j z_{t-1} * z_t * log A
};

// ---------------------------------------------------------------------------

template <typename Scalar>
void BasicModelParams<Scalar>::validate(Scalar tol) const {
  using std::abs;
  const int S = num_stocks();
  const auto fail = [](const std::string& what) { throw InputError("invalid parameters: " + what); };
  if (states < 1) fail("state count must be positive");
  if (classes < 1) fail("class count must be positive");
  if (initial.rows() != S || initial.cols() != states) fail("initial matrix shape");
  if (static_cast<int>(neighbors.size()) != S || static_cast<int>(transition.size()) != S ||
      static_cast<int>(gauss_mean.size()) != S || static_cast<int>(gauss_std.size()) != S ||
      static_cast<int>(event_table.size()) != S)
    fail("per-stock tables must cover every stock");
  if (price_center.rows() != S || price_scale.rows() != S) fail("standardization shape");
  for (int s = 0; s < S; ++s) {
    const std::string tag = " (stock " + stock_ids[static_cast<std::size_t>(s)] + ")";
    if ((initial.row(s).array() < Scalar(0)).any() || abs(initial.row(s).sum() - Scalar(1)) > tol)
      fail("initial row not a distribution" + tag);
    const auto& A = transition[static_cast<std::size_t>(s)];
    if (A.rows() != joint_index(s).size() || A.cols() != states) fail("transition shape" + tag);
    for (Eigen::Index r = 0; r < A.rows(); ++r)
      if ((A.row(r).array() < Scalar(0)).any() || abs(A.row(r).sum() - Scalar(1)) > tol)
        fail("transition row not a distribution" + tag);
    const auto& sd = gauss_std[static_cast<std::size_t>(s)];
    if (sd.rows() != states || sd.cols() != kPriceComponents ||
        gauss_mean[static_cast<std::size_t>(s)].rows() != states)
      fail("gaussian table shape" + tag);
    if ((sd.array() < sigma_floor * (Scalar(1) - tol)).any()) fail("sigma below floor" + tag);
    const auto& L = event_table[static_cast<std::size_t>(s)];
    if (L.rows() != states || L.cols() != classes) fail("event table shape" + tag);
    for (Eigen::Index h = 0; h < L.rows(); ++h)
      if ((L.row(h).array() <= Scalar(0)).any() || abs(L.row(h).sum() - Scalar(1)) > tol)
        fail("event row not a smoothed distribution" + tag);
  }
}

/// log N(x | mean, sd).
template <typename Scalar>
inline Scalar log_gaussian(Scalar x, Scalar mean, Scalar sd) {
  using std::log;
  const Scalar u = (x - mean) / sd;
  return -Scalar(0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar>) - log(sd) - Scalar(0.5) * u * u;
}

/// Standardized OHLC of one observation.
template <typename Scalar>
Eigen::Matrix<Scalar, kPriceComponents, 1> standardize(const BasicModelParams<Scalar>& params,
                                                       int stock, const PriceObservation& obs) {
  Eigen::Matrix<Scalar, kPriceComponents, 1> x;
  const Eigen::Vector4d raw = obs.components();
  for (int c = 0; c < kPriceComponents; ++c) {
    if (!std::isfinite(raw(c))) throw InputError("non-finite price");
    x(c) = (Scalar(raw(c)) - params.price_center(stock, c)) / params.price_scale(stock, c);
  }
  return x;
}

/// Sum over components of log g_s^h for an already standardized observation.
template <typename Scalar, typename Derived>
Scalar log_price_density(const BasicModelParams<Scalar>& params, int stock, int state,
                         const Eigen::MatrixBase<Derived>& standardized) {
  const auto& mu = params.gauss_mean[static_cast<std::size_t>(stock)];
  const auto& sd = params.gauss_std[static_cast<std::size_t>(stock)];
  Scalar total(0);
  for (int c = 0; c < kPriceComponents; ++c)
    total += log_gaussian<Scalar>(standardized(c), mu(state, c), sd(state, c));
  return total;
}

/// log l_s^h(class), or 0 when the day has no event.
template <typename Scalar>
Scalar log_event_density(const BasicModelParams<Scalar>& params, int stock, int state,
                         std::optional<int> event_class) {
  if (!event_class) return Scalar(0);
  if (*event_class < 0 || *event_class >= params.classes)
    throw InputError("event class " + std::to_string(*event_class) + " outside [0, " +
                     std::to_string(params.classes) + ")");
  return floored_log(params.event_table[static_cast<std::size_t>(stock)](state, *event_class));
}

template <typename Scalar>
Scalar log_initial(const BasicModelParams<Scalar>& params, const MatrixX<Scalar>& z_day1) {
  if (z_day1.rows() != params.num_stocks() || z_day1.cols() != params.states)
    throw ShapeError("initial beliefs shape");
  Scalar total(0);
  for (int s = 0; s < params.num_stocks(); ++s)
    for (int h = 0; h < params.states; ++h)
      if (z_day1(s, h) != Scalar(0)) total += z_day1(s, h) * floored_log(params.initial(s, h));
  return total;
}

/// Transition term from marginal beliefs: each joint neighbor configuration
/// is weighted by the product of its members' previous-day marginals.
template <typename Scalar>
Scalar log_transition(const BasicModelParams<Scalar>& params, const MatrixX<Scalar>& z_prev,
                      const MatrixX<Scalar>& z_curr, int stock) {
  const auto& set = params.neighbors[static_cast<std::size_t>(stock)];
  const auto& A = params.transition[static_cast<std::size_t>(stock)];
  const JointStateIndex index = params.joint_index(stock);
  Scalar total(0);
  for (int i = 0; i < index.size(); ++i) {
    const auto digits = index.decode(i);
    Scalar weight(1);
    for (std::size_t j = 0; j < set.size(); ++j) weight *= z_prev(set[j], digits[j]);
    if (weight == Scalar(0)) continue;
    for (int h = 0; h < params.states; ++h) {
      const Scalar w = weight * z_curr(stock, h);
      if (w != Scalar(0)) total += w * floored_log(A(i, h));
    }
  }
  return total;
}

/// Transition term from joint responsibilities q (rows = R, cols = h).
template <typename Scalar>
Scalar log_transition_expected(const BasicModelParams<Scalar>& params,
                               const MatrixX<Scalar>& q_day, int stock) {
  const auto& A = params.transition[static_cast<std::size_t>(stock)];
  if (q_day.rows() != A.rows() || q_day.cols() != A.cols())
    throw ShapeError("responsibility table shape does not match transition tensor");
  Scalar total(0);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index h = 0; h < A.cols(); ++h)
      if (q_day(i, h) != Scalar(0)) total += q_day(i, h) * floored_log(A(i, h));
  return total;
}

template <typename Scalar, typename Derived>
Scalar log_price_emission(const BasicModelParams<Scalar>& params, int stock,
                          const PriceObservation& prices, const Eigen::MatrixBase<Derived>& z_row) {
  const auto x = standardize(params, stock, prices);
  Scalar total(0);
  for (int h = 0; h < params.states; ++h)
    if (z_row(h) != Scalar(0)) total += z_row(h) * log_price_density(params, stock, h, x);
  return total;
}

template <typename Scalar, typename Derived>
Scalar log_event_emission(const BasicModelParams<Scalar>& params, int stock,
                          std::optional<int> event_class, const Eigen::MatrixBase<Derived>& z_row) {
  if (!event_class) return Scalar(0);
  Scalar total(0);
  for (int h = 0; h < params.states; ++h) {
    const Scalar term = log_event_density(params, stock, h, event_class);
    if (z_row(h) != Scalar(0)) total += z_row(h) * term;
  }
  return total;
}

namespace detail {

template <typename Scalar>
Scalar tree_sum(std::vector<Scalar> level) {
  if (level.empty()) return Scalar(0);
  while (level.size() > 1) {
    std::vector<Scalar> next((level.size() + 1) / 2);
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] = 2 * i + 1 < level.size() ? level[2 * i] + level[2 * i + 1] : level[2 * i];
    level.swap(next);
  }
  return level.front();
}

template <typename Scalar>
void check_coverage(const BasicModelParams<Scalar>& params, const BasicStateBeliefs<Scalar>& beliefs,
                    const AlignedPanel& panel, const EventGrid* events) {
  if (panel.num_stocks() != params.num_stocks()) throw ShapeError("panel and parameters differ in stocks");
  if (beliefs.num_days() != panel.num_days()) throw ShapeError("beliefs do not cover every day");
  if (events && (events->num_days() != panel.num_days() || events->num_stocks() != panel.num_stocks()))
    throw ShapeError("event grid does not match panel");
}

}  // namespace detail

/// The per-stock terms attributed to a single day: the initial term on day 0,
/// otherwise the transition term; plus both emission terms.
template <typename Scalar>
Scalar day_log_likelihood(const BasicModelParams<Scalar>& params,
                          const BasicStateBeliefs<Scalar>& beliefs, const AlignedPanel& panel,
                          const EventGrid* events, int day, int stock,
                          TransitionTerm term = TransitionTerm::kResponsibility) {
  const auto& z = beliefs.z[static_cast<std::size_t>(day)];
  Scalar total(0);
  if (day == 0) {
    for (int h = 0; h < params.states; ++h)
      if (z(stock, h) != Scalar(0)) total += z(stock, h) * floored_log(params.initial(stock, h));
  } else if (term == TransitionTerm::kResponsibility) {
    total += log_transition_expected(params,
                                     beliefs.q[static_cast<std::size_t>(day)][static_cast<std::size_t>(stock)],
                                     stock);
  } else {
    total += log_transition(params, beliefs.z[static_cast<std::size_t>(day - 1)], z, stock);
  }
  total += log_price_emission(params, stock, panel.at(day, stock), z.row(stock));
  if (events) total += log_event_emission(params, stock, events->event_class(day, stock), z.row(stock));
  return total;
}

/// Expected complete log-likelihood: initial + transitions (t >= 1) + price
/// and event emissions. Pass events = nullptr to drop the event stream.
template <typename Scalar>
Scalar complete_log_likelihood(const BasicModelParams<Scalar>& params,
                               const BasicStateBeliefs<Scalar>& beliefs, const AlignedPanel& panel,
                               const EventGrid* events,
                               TransitionTerm term = TransitionTerm::kResponsibility) {
  detail::check_coverage(params, beliefs, panel, events);
  std::vector<Scalar> terms;
  terms.reserve(static_cast<std::size_t>(panel.num_days() * params.num_stocks()));
  for (int t = 0; t < panel.num_days(); ++t)
    for (int s = 0; s < params.num_stocks(); ++s)
      terms.push_back(day_log_likelihood(params, beliefs, panel, events, t, s, term));
  return detail::tree_sum(std::move(terms));
}

/// Emission-only sums, one per stream; used to check the stream factorization.
template <typename Scalar>
Scalar price_stream_log_likelihood(const BasicModelParams<Scalar>& params,
                                   const BasicStateBeliefs<Scalar>& beliefs, const AlignedPanel& panel) {
  std::vector<Scalar> terms;
  for (int t = 0; t < panel.num_days(); ++t)
    for (int s = 0; s < params.num_stocks(); ++s)
      terms.push_back(log_price_emission(params, s, panel.at(t, s),
                                         beliefs.z[static_cast<std::size_t>(t)].row(s)));
  return detail::tree_sum(std::move(terms));
}

template <typename Scalar>
Scalar event_stream_log_likelihood(const BasicModelParams<Scalar>& params,
                                   const BasicStateBeliefs<Scalar>& beliefs, const EventGrid& events) {
  std::vector<Scalar> terms;
  for (int t = 0; t < events.num_days(); ++t)
    for (int s = 0; s < params.num_stocks(); ++s)
      terms.push_back(log_event_emission(params, s, events.event_class(t, s),
                                         beliefs.z[static_cast<std::size_t>(t)].row(s)));
  return detail::tree_sum(std::move(terms));
}

/// Per-stock, per-component z-score constants over a panel. Constant
/// components get unit scale.
template <typename Scalar = double>
void fit_standardization(const AlignedPanel& panel, MatrixX<Scalar>& center, MatrixX<Scalar>& scale) {
  const int S = panel.num_stocks();
  center.resize(S, kPriceComponents);
  scale.resize(S, kPriceComponents);
  const auto n = static_cast<double>(panel.num_days());
  for (int s = 0; s < S; ++s)
    for (int c = 0; c < kPriceComponents; ++c) {
      const auto col = panel.prices(s).col(c);
      const double mean = col.mean();
      const double var = n > 1 ? (col.array() - mean).square().sum() / (n - 1) : 0.0;
      center(s, c) = Scalar(mean);
      scale(s, c) = var > 0 ? Scalar(std::sqrt(var)) : Scalar(1);
    }
}

}  // namespace echmm

#include "echmm/inference.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <ostream>

namespace echmm {

void EmConfig::validate() const {
  if (max_iters < 1) throw ConfigError("em.max_iters must be at least 1");
  if (!(tol > 0)) throw ConfigError("em.tol must be positive");
  if (particles < 2) throw ConfigError("em.particles must be at least 2");
  if (states < 1) throw ConfigError("model.states must be at least 1");
  if (!(smoothing > 0)) throw ConfigError("event smoothing must be positive");
  if (!(sigma_floor > 0)) throw ConfigError("sigma floor must be positive");
}

double normalize_log_weights(const Eigen::VectorXd& log_weights, Eigen::VectorXd& weights) {
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) throw DegenerateFilterError("all particle weights are zero or non-finite");
  weights = (log_weights.array() - top).exp().matrix();
  const double total = weights.sum();
  if (!(total > 0) || !std::isfinite(total))
    throw DegenerateFilterError("particle weights do not normalize");
  weights /= total;
  return top + std::log(total / static_cast<double>(log_weights.size()));
}

std::vector<int> resample(const Eigen::VectorXd& weights, Resampler scheme, CounterRng& rng) {
  const auto K = static_cast<int>(weights.size());
  std::vector<double> cdf(static_cast<std::size_t>(K));
  std::partial_sum(weights.data(), weights.data() + K, cdf.begin());
  cdf.back() = std::max(cdf.back(), 1.0);
  std::vector<int> ancestors(static_cast<std::size_t>(K));
  if (scheme == Resampler::kSystematic) {
    const double u0 = rng.uniform() / K;
    int j = 0;
    for (int k = 0; k < K; ++k) {
      const double u = u0 + static_cast<double>(k) / K;
      while (j < K - 1 && cdf[static_cast<std::size_t>(j)] <= u) ++j;
      ancestors[static_cast<std::size_t>(k)] = j;
    }
  } else {
    for (int k = 0; k < K; ++k) {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      ancestors[static_cast<std::size_t>(k)] =
          std::min(K - 1, static_cast<int>(it - cdf.begin()));
    }
  }
  return ancestors;
}

namespace {

constexpr std::uint64_t kResampleStream = 1ULL << 40;

/// log g + log l for every (stock, state) on one day.
Eigen::MatrixXd emission_table(const ModelParams& params, const AlignedPanel& panel,
                               const EventGrid* events, int day) {
  Eigen::MatrixXd table(params.num_stocks(), params.states);
  for (int s = 0; s < params.num_stocks(); ++s) {
    const auto x = standardize(params, s, panel.at(day, s));
    const auto event = events ? events->event_class(day, s) : std::nullopt;
    for (int h = 0; h < params.states; ++h)
      table(s, h) = log_price_density(params, s, h, x) + log_event_density(params, s, h, event);
  }
  return table;
}

struct RadixPlan {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<int>> place;  // H^(width-1-j)

  explicit RadixPlan(const ModelParams& params) : neighbors(params.neighbors) {
    for (const auto& set : neighbors) {
      std::vector<int> p(set.size());
      int v = 1;
      for (std::size_t j = set.size(); j-- > 0;) {
        p[j] = v;
        v *= params.states;
      }
      place.push_back(std::move(p));
    }
  }

  int joint(int stock, const int* states) const {
    const auto& set = neighbors[static_cast<std::size_t>(stock)];
    const auto& p = place[static_cast<std::size_t>(stock)];
    int r = 0;
    for (std::size_t j = 0; j < set.size(); ++j) r += states[set[j]] * p[j];
    return r;
  }
};

bool use_backward(const FilterOptions& options, int states, int stocks) {
  if (options.smoother != Smoother::kAuto) return options.smoother == Smoother::kBackward;
  long configs = 1;
  for (int s = 0; s < stocks && configs <= kBackwardMaxConfigs; ++s) configs *= states;
  return configs <= kBackwardMaxConfigs;
}

// Distinct joint configurations of one day's particles with summed weights.
struct Support {
  std::vector<int> configs;  // D x S, row-major
  Eigen::VectorXd mass;
  double ess = 0.0;
};

Support collapse(const std::vector<int>& states, const Eigen::VectorXd& weights, int S) {
  Support out;
  std::map<std::vector<int>, int> slot;
  std::vector<double> mass;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    const auto* row = &states[static_cast<std::size_t>(k) * static_cast<std::size_t>(S)];
    std::vector<int> key(row, row + S);
    const auto [it, fresh] = slot.emplace(std::move(key), static_cast<int>(mass.size()));
    if (fresh) {
      out.configs.insert(out.configs.end(), row, row + S);
      mass.push_back(0.0);
    }
    mass[static_cast<std::size_t>(it->second)] += weights(k);
  }
  out.mass = Eigen::Map<Eigen::VectorXd>(mass.data(), static_cast<Eigen::Index>(mass.size()));
  out.ess = 1.0 / weights.squaredNorm();
  return out;
}

// Marginal backward smoothing on the particle approximation: the filtering
// distribution of each day is reweighted by the smoothed mass of the next day.
void backward_smooth(const ModelParams& params, const RadixPlan& plan,
                     const std::vector<std::vector<int>>& X, const std::vector<Eigen::VectorXd>& W,
                     const std::vector<Eigen::MatrixXd>& emis, StateBeliefs& beliefs,
                     std::vector<double>& se2) {
  const int S = params.num_stocks();
  const auto T = static_cast<int>(X.size());
  std::vector<Support> sup;
  for (int t = 0; t < T; ++t)
    sup.push_back(collapse(X[static_cast<std::size_t>(t)], W[static_cast<std::size_t>(t)], S));
  const auto config = [&](int t, int i) {
    return &sup[static_cast<std::size_t>(t)].configs[static_cast<std::size_t>(i) * static_cast<std::size_t>(S)];
  };
  const auto emission = [&](int t, const int* c) {
    double v = 0.0;
    for (int s = 0; s < S; ++s) v += emis[static_cast<std::size_t>(t)](s, c[s]);
    return v;
  };

  Eigen::VectorXd smooth = sup.back().mass;
  for (int t = T - 1; t >= 0; --t) {
    const auto& cur = sup[static_cast<std::size_t>(t)];
    auto& z = beliefs.z[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < cur.mass.size(); ++j)
      for (int s = 0; s < S; ++s) z(s, config(t, static_cast<int>(j))[s]) += smooth(j);
    if (t == 0) {
      double mean = 0.0, second = 0.0;
      for (Eigen::Index j = 0; j < cur.mass.size(); ++j) {
        const int* c = config(0, static_cast<int>(j));
        double v = emission(0, c);
        for (int s = 0; s < S; ++s) v += floored_log(params.initial(s, c[s]));
        mean += smooth(j) * v;
        second += smooth(j) * v * v;
      }
      se2[0] = std::max(second - mean * mean, 0.0) / cur.ess;
      break;
    }
    const auto& prev = sup[static_cast<std::size_t>(t - 1)];
    // trans(i, j): probability of moving from previous config i to config j.
    Eigen::MatrixXd trans(prev.mass.size(), cur.mass.size());
    Eigen::MatrixXd log_trans(prev.mass.size(), cur.mass.size());
    for (Eigen::Index i = 0; i < trans.rows(); ++i) {
      const int* a = config(t - 1, static_cast<int>(i));
      for (Eigen::Index j = 0; j < trans.cols(); ++j) {
        const int* c = config(t, static_cast<int>(j));
        double p = 1.0, lp = 0.0;
        for (int s = 0; s < S; ++s) {
          const double v = params.transition[static_cast<std::size_t>(s)](plan.joint(s, a), c[s]);
          p *= v;
          lp += floored_log(v);
        }
        trans(i, j) = p;
        log_trans(i, j) = lp;
      }
    }
    const Eigen::VectorXd pred = trans.transpose() * prev.mass;
    Eigen::VectorXd ratio = Eigen::VectorXd::Zero(pred.size());
    for (Eigen::Index j = 0; j < pred.size(); ++j)
      if (pred(j) > 0) ratio(j) = smooth(j) / pred(j);
    // pair(i, j): smoothed probability of config i at t - 1 and j at t.
    const Eigen::MatrixXd pair = prev.mass.asDiagonal() * trans * ratio.asDiagonal();
    auto& q = beliefs.q[static_cast<std::size_t>(t)];
    double mean = 0.0, second = 0.0;
    for (Eigen::Index i = 0; i < pair.rows(); ++i) {
      const int* a = config(t - 1, static_cast<int>(i));
      for (Eigen::Index j = 0; j < pair.cols(); ++j) {
        const double m = pair(i, j);
        if (m == 0.0) continue;
        const int* c = config(t, static_cast<int>(j));
        for (int s = 0; s < S; ++s) q[static_cast<std::size_t>(s)](plan.joint(s, a), c[s]) += m;
        const double v = emission(t, c) + log_trans(i, j);
        mean += m * v;
        second += m * v * v;
      }
    }
    se2[static_cast<std::size_t>(t)] = std::max(second - mean * mean, 0.0) / cur.ess;
    smooth = pair.rowwise().sum();
  }
}

}  // namespace

FilterResult particle_filter(const ModelParams& params, const AlignedPanel& panel,
                             const EventGrid* events, int particles, std::uint64_t seed,
                             const FilterOptions& options) {
  if (particles < 2) throw ConfigError("particle count must be at least 2");
  if (panel.num_stocks() != params.num_stocks()) throw ShapeError("panel and parameters differ in stocks");
  if (events && (events->num_days() != panel.num_days() || events->num_stocks() != panel.num_stocks()))
    throw ShapeError("event grid does not match panel");
  const int S = params.num_stocks();
  const int T = panel.num_days();
  const int H = params.states;
  const int K = particles;
  if (T < 1) throw InsufficientDataError("particle filter needs at least one day");

  std::vector<Eigen::MatrixXd> emis(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) emis[static_cast<std::size_t>(t)] = emission_table(params, panel, events, t);
  const RadixPlan plan(params);

  std::vector<std::vector<int>> X(static_cast<std::size_t>(T),
                                  std::vector<int>(static_cast<std::size_t>(K * S)));
  std::vector<std::vector<int>> anc(static_cast<std::size_t>(T));
  std::vector<Eigen::VectorXd> W(static_cast<std::size_t>(T));
  Eigen::VectorXd logw(K), w(K);
  FilterResult result;

  for (int t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Eigen::MatrixXd& e = emis[ut];
    parallel_for(static_cast<std::size_t>(K), options.threads, [&](std::size_t b, std::size_t end) {
      for (std::size_t k = b; k < end; ++k) {
        CounterRng rng(seed, k, static_cast<std::uint64_t>(t));
        int* out = &X[ut][k * static_cast<std::size_t>(S)];
        double lw = 0.0;
        if (t == 0) {
          for (int s = 0; s < S; ++s) out[s] = rng.categorical(params.initial.row(s));
        } else {
          const int* parent =
              &X[ut - 1][static_cast<std::size_t>(anc[ut - 1][k]) * static_cast<std::size_t>(S)];
          for (int s = 0; s < S; ++s)
            out[s] = rng.categorical(
                params.transition[static_cast<std::size_t>(s)].row(plan.joint(s, parent)));
        }
        for (int s = 0; s < S; ++s) lw += e(s, out[s]);
        logw(static_cast<Eigen::Index>(k)) = lw;
      }
    });
    result.log_evidence += normalize_log_weights(logw, w);
    W[ut] = w;
    CounterRng rr(seed, kResampleStream, static_cast<std::uint64_t>(t));
    anc[ut] = resample(w, options.resampler, rr);
  }

  // Smooth the beliefs backwards, or read them off the genealogy.
  auto& beliefs = result.beliefs;
  beliefs.z.assign(static_cast<std::size_t>(T), Eigen::MatrixXd::Zero(S, H));
  beliefs.q.assign(static_cast<std::size_t>(T), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(S)));
  for (int t = 1; t < T; ++t)
    for (int s = 0; s < S; ++s)
      beliefs.q[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] =
          Eigen::MatrixXd::Zero(params.transition[static_cast<std::size_t>(s)].rows(), H);

  const double inv_k = 1.0 / K;
  const bool ancestry_q = options.q_mode == QMode::kAncestry;
  std::vector<double> se2(static_cast<std::size_t>(T), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(K));
  std::vector<double> f(static_cast<std::size_t>(K));
  std::vector<char> seen(static_cast<std::size_t>(K));

  const auto accumulate = [&](int t) {
    const auto ut = static_cast<std::size_t>(t);
    auto& z = beliefs.z[ut];
    std::fill(seen.begin(), seen.end(), 0);
    int distinct = 0;
    for (int k = 0; k < K; ++k) {
      const int i = idx[static_cast<std::size_t>(k)];
      if (!seen[static_cast<std::size_t>(i)]) {
        seen[static_cast<std::size_t>(i)] = 1;
        ++distinct;
      }
      const int* cur = &X[ut][static_cast<std::size_t>(i) * static_cast<std::size_t>(S)];
      const int* parent =
          t > 0 ? &X[ut - 1][static_cast<std::size_t>(anc[ut - 1][static_cast<std::size_t>(i)]) *
                             static_cast<std::size_t>(S)]
                : nullptr;
      double value = 0.0;
      for (int s = 0; s < S; ++s) {
        const int h = cur[s];
        z(s, h) += inv_k;
        value += emis[ut](s, h);
        if (t == 0) {
          value += floored_log(params.initial(s, h));
        } else {
          const int r = plan.joint(s, parent);
          if (ancestry_q) beliefs.q[ut][static_cast<std::size_t>(s)](r, h) += inv_k;
          value += floored_log(params.transition[static_cast<std::size_t>(s)](r, h));
        }
      }
      f[static_cast<std::size_t>(k)] = value;
    }
    const double mean = std::accumulate(f.begin(), f.end(), 0.0) * inv_k;
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    var *= inv_k;
    se2[ut] = var / distinct;
  };
  const auto trace_from = [&](int tau, int lowest, bool all) {
    for (int k = 0; k < K; ++k)
      idx[static_cast<std::size_t>(k)] = anc[static_cast<std::size_t>(tau)][static_cast<std::size_t>(k)];
    for (int u = tau; u >= lowest; --u) {
      if (all || u == lowest) accumulate(u);
      if (u == lowest) break;
      for (auto& i : idx) i = anc[static_cast<std::size_t>(u - 1)][static_cast<std::size_t>(i)];
    }
  };
  const int lag = options.smoothing_lag;
  if (use_backward(options, H, S)) {
    backward_smooth(params, plan, X, W, emis, beliefs, se2);
  } else if (lag < 0 || lag >= T - 1) {
    trace_from(T - 1, 0, true);
  } else {
    for (int t = 0; t + lag < T - 1; ++t) trace_from(t + lag, t, false);
    trace_from(T - 1, T - 1 - lag, true);
  }

  if (!ancestry_q) {
    for (int t = 1; t < T; ++t) {
      const auto& zp = beliefs.z[static_cast<std::size_t>(t - 1)];
      const auto& zc = beliefs.z[static_cast<std::size_t>(t)];
      for (int s = 0; s < S; ++s) {
        const auto& A = params.transition[static_cast<std::size_t>(s)];
        const JointStateIndex index = params.joint_index(s);
        const auto& set = params.neighbors[static_cast<std::size_t>(s)];
        Eigen::VectorXd prior(A.rows());
        for (int r = 0; r < index.size(); ++r) {
          const auto digits = index.decode(r);
          double p = 1.0;
          for (std::size_t j = 0; j < set.size(); ++j) p *= zp(set[j], digits[j]);
          prior(r) = p;
        }
        auto& q = beliefs.q[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
        for (int h = 0; h < H; ++h) {
          Eigen::VectorXd col = prior.cwiseProduct(A.col(h));
          const double mass = col.sum();
          q.col(h) = (mass > 0 ? Eigen::VectorXd(col / mass) : prior) * zc(s, h);
        }
      }
    }
  }

  result.ll_stderr = std::sqrt(std::accumulate(se2.begin(), se2.end(), 0.0));
  result.final_particles.num_stocks = S;
  result.final_particles.weights = Eigen::VectorXd::Constant(K, inv_k);
  result.final_particles.states.resize(static_cast<std::size_t>(K * S));
  const auto& last = anc[static_cast<std::size_t>(T - 1)];
  for (int k = 0; k < K; ++k)
    for (int s = 0; s < S; ++s)
      result.final_particles.states[static_cast<std::size_t>(k * S + s)] =
          X[static_cast<std::size_t>(T - 1)][static_cast<std::size_t>(last[static_cast<std::size_t>(k)] * S + s)];
  return result;
}

EStepResult e_step(const ModelParams& params, const AlignedPanel& panel, const EventGrid* events,
                   const EmConfig& config) {
  auto filtered = particle_filter(params, panel, events, config.particles, config.seed, config.filter);
  EStepResult out;
  out.expected_ll = complete_log_likelihood(params, filtered.beliefs, panel, events);
  out.ll_stderr = filtered.ll_stderr;
  out.log_evidence = filtered.log_evidence;
  out.beliefs = std::move(filtered.beliefs);
  return out;
}

namespace {

std::vector<Eigen::MatrixXd> standardized_prices(const AlignedPanel& panel,
                                                 const Eigen::MatrixXd& center,
                                                 const Eigen::MatrixXd& scale) {
  std::vector<Eigen::MatrixXd> out;
  for (int s = 0; s < panel.num_stocks(); ++s) {
    Eigen::MatrixXd x = panel.prices(s);
    for (int c = 0; c < kPriceComponents; ++c)
      x.col(c) = (x.col(c).array() - center(s, c)) / scale(s, c);
    out.push_back(std::move(x));
  }
  return out;
}

using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

void weighted_gaussian(const Eigen::MatrixXd& x, const Eigen::VectorXd& weight, double floor,
                       RowRef mean, RowRef sd) {
  double mass = weight.sum();
  Eigen::VectorXd w = weight;
  if (!(mass > 0)) {
    w = Eigen::VectorXd::Ones(x.rows());
    mass = static_cast<double>(x.rows());
  }
  mean = (w.transpose() * x) / mass;
  for (int c = 0; c < kPriceComponents; ++c) {
    const double var = (w.array() * (x.col(c).array() - mean(c)).square()).sum() / mass;
    sd(c) = std::max(std::sqrt(std::max(var, 0.0)), floor);
  }
}

}  // namespace

ModelParams m_step(const StateBeliefs& beliefs, const CorrelationGraph& graph,
                   const AlignedPanel& panel, const EventGrid* events, const MStepOptions& options) {
  const int S = panel.num_stocks();
  const int T = panel.num_days();
  const int H = options.states;
  const int F = options.classes;
  if (beliefs.num_days() != T) throw ShapeError("beliefs do not cover the panel");
  if (graph.num_stocks() != S) throw ShapeError("graph and panel differ in stocks");

  ModelParams p;
  p.states = H;
  p.classes = F;
  p.smoothing = options.smoothing;
  p.sigma_floor = options.sigma_floor;
  p.stock_ids = panel.stock_ids();
  p.neighbors = graph.neighbor_sets;
  fit_standardization(panel, p.price_center, p.price_scale);
  const auto x = standardized_prices(panel, p.price_center, p.price_scale);

  p.initial = beliefs.z.front();
  for (int s = 0; s < S; ++s) {
    const double total = p.initial.row(s).sum();
    if (total > 0) p.initial.row(s) /= total;
  }

  for (int s = 0; s < S; ++s) {
    const auto us = static_cast<std::size_t>(s);
    const int rows = p.joint_index(s).size();
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(rows, H);
    for (int t = 1; t < T; ++t) {
      const auto& q = beliefs.q[static_cast<std::size_t>(t)][us];
      if (q.rows() != rows || q.cols() != H) throw ShapeError("responsibility table shape");
      counts += options.q_squared ? Eigen::MatrixXd(q.cwiseProduct(q)) : q;
    }
    Eigen::MatrixXd A(rows, H);
    for (int r = 0; r < rows; ++r) {
      const double mass = counts.row(r).sum();
      if (mass > 0)
        A.row(r) = counts.row(r) / mass;
      else
        A.row(r).setConstant(1.0 / H);
    }
    p.transition.push_back(std::move(A));

    Eigen::MatrixXd mu(H, kPriceComponents), sd(H, kPriceComponents);
    Eigen::MatrixXd table(H, F);
    for (int h = 0; h < H; ++h) {
      Eigen::VectorXd weight(T);
      for (int t = 0; t < T; ++t) weight(t) = beliefs.z[static_cast<std::size_t>(t)](s, h);
      weighted_gaussian(x[us], weight, options.sigma_floor, mu.row(h), sd.row(h));

      Eigen::RowVectorXd hits = Eigen::RowVectorXd::Zero(F);
      double event_mass = 0.0;
      if (events)
        for (int t = 0; t < T; ++t)
          if (const auto c = events->event_class(t, s)) {
            if (*c >= F) throw InputError("event class " + std::to_string(*c) + " >= " + std::to_string(F));
            hits(*c) += weight(t);
            event_mass += weight(t);
          }
      table.row(h) = (hits.array() + options.smoothing) / (options.smoothing * F + event_mass);
    }
    p.gauss_mean.push_back(std::move(mu));
    p.gauss_std.push_back(std::move(sd));
    p.event_table.push_back(std::move(table));
  }
  return p;
}

ModelParams initialize_params(const AlignedPanel& panel, const CorrelationGraph& graph, int states,
                              int classes, double smoothing, double sigma_floor) {
  const int S = panel.num_stocks();
  const int T = panel.num_days();
  if (T < 1) throw InsufficientDataError("cannot initialize on an empty panel");
  if (graph.num_stocks() != S) throw ShapeError("graph and panel differ in stocks");
  ModelParams p;
  p.states = states;
  p.classes = classes;
  p.smoothing = smoothing;
  p.sigma_floor = sigma_floor;
  p.stock_ids = panel.stock_ids();
  p.neighbors = graph.neighbor_sets;
  fit_standardization(panel, p.price_center, p.price_scale);
  const auto x = standardized_prices(panel, p.price_center, p.price_scale);
  p.initial = Eigen::MatrixXd::Constant(S, states, 1.0 / states);

  for (int s = 0; s < S; ++s) {
    const auto us = static_cast<std::size_t>(s);
    p.transition.push_back(Eigen::MatrixXd::Constant(p.joint_index(s).size(), states, 1.0 / states));
    p.event_table.push_back(Eigen::MatrixXd::Constant(states, classes, 1.0 / classes));

    // 1-D k-means on the standardized close, seeded at evenly spaced quantiles.
    Eigen::VectorXd close = x[us].col(3);
    std::vector<double> sorted(close.data(), close.data() + T);
    std::sort(sorted.begin(), sorted.end());
    Eigen::VectorXd centers(states);
    for (int h = 0; h < states; ++h) {
      const auto q = static_cast<std::size_t>((h + 0.5) / states * T);
      centers(h) = sorted[std::min(q, sorted.size() - 1)];
    }
    std::vector<int> label(static_cast<std::size_t>(T), 0);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (int t = 0; t < T; ++t) {
        Eigen::Index best = 0;
        (centers.array() - close(t)).abs().minCoeff(&best);
        if (label[static_cast<std::size_t>(t)] != best) {
          label[static_cast<std::size_t>(t)] = static_cast<int>(best);
          changed = true;
        }
      }
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(states), n = Eigen::VectorXd::Zero(states);
      for (int t = 0; t < T; ++t) {
        sum(label[static_cast<std::size_t>(t)]) += close(t);
        n(label[static_cast<std::size_t>(t)]) += 1;
      }
      for (int h = 0; h < states; ++h)
        if (n(h) > 0) centers(h) = sum(h) / n(h);
      if (!changed && iter > 0) break;
    }
    std::vector<int> order(static_cast<std::size_t>(states));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return centers(a) < centers(b); });
    Eigen::MatrixXd mu(states, kPriceComponents), sd(states, kPriceComponents);
    for (int h = 0; h < states; ++h) {
      Eigen::VectorXd weight(T);
      for (int t = 0; t < T; ++t)
        weight(t) = label[static_cast<std::size_t>(t)] == order[static_cast<std::size_t>(h)] ? 1.0 : 0.0;
      weighted_gaussian(x[us], weight, sigma_floor, mu.row(h), sd.row(h));
    }
    p.gauss_mean.push_back(std::move(mu));
    p.gauss_std.push_back(std::move(sd));
  }
  return p;
}

ModelParams rebase_params(const ModelParams& previous, const AlignedPanel& panel) {
  if (panel.num_stocks() != previous.num_stocks()) throw ShapeError("panel and parameters differ in stocks");
  ModelParams p = previous;
  fit_standardization(panel, p.price_center, p.price_scale);
  for (int s = 0; s < p.num_stocks(); ++s) {
    auto& mu = p.gauss_mean[static_cast<std::size_t>(s)];
    auto& sd = p.gauss_std[static_cast<std::size_t>(s)];
    for (int c = 0; c < kPriceComponents; ++c) {
      const double ratio = previous.price_scale(s, c) / p.price_scale(s, c);
      mu.col(c) = ((mu.col(c).array() * previous.price_scale(s, c) + previous.price_center(s, c)) -
                   p.price_center(s, c)) /
                  p.price_scale(s, c);
      sd.col(c) = (sd.col(c).array() * ratio).max(p.sigma_floor);
    }
  }
  return p;
}

void permute_states(ModelParams& params, int stock, const std::vector<int>& perm) {
  const int H = params.states;
  if (static_cast<int>(perm.size()) != H) throw ShapeError("permutation size must equal state count");
  const auto us = static_cast<std::size_t>(stock);
  const auto permute_rows = [&](Eigen::MatrixXd& m) {
    const Eigen::MatrixXd old = m;
    for (int i = 0; i < H; ++i) m.row(i) = old.row(perm[static_cast<std::size_t>(i)]);
  };
  {
    const Eigen::RowVectorXd old = params.initial.row(stock);
    for (int i = 0; i < H; ++i) params.initial(stock, i) = old(perm[static_cast<std::size_t>(i)]);
  }
  permute_rows(params.gauss_mean[us]);
  permute_rows(params.gauss_std[us]);
  permute_rows(params.event_table[us]);
  {
    auto& A = params.transition[us];
    const Eigen::MatrixXd old = A;
    for (int i = 0; i < H; ++i) A.col(i) = old.col(perm[static_cast<std::size_t>(i)]);
  }
  for (int u = 0; u < params.num_stocks(); ++u) {
    const auto& set = params.neighbors[static_cast<std::size_t>(u)];
    const auto pos = std::find(set.begin(), set.end(), stock);
    if (pos == set.end()) continue;
    const auto j = static_cast<std::size_t>(pos - set.begin());
    const JointStateIndex index = params.joint_index(u);
    auto& A = params.transition[static_cast<std::size_t>(u)];
    const Eigen::MatrixXd old = A;
    for (int r = 0; r < index.size(); ++r) {
      auto digits = index.decode(r);
      digits[j] = perm[static_cast<std::size_t>(digits[j])];
      A.row(r) = old.row(index.encode(digits));
    }
  }
}

bool has_collapsed_states(const ModelParams& params, double tol) {
  for (int s = 0; s < params.num_stocks(); ++s) {
    const auto& mu = params.gauss_mean[static_cast<std::size_t>(s)];
    const auto& sd = params.gauss_std[static_cast<std::size_t>(s)];
    for (int h = 0; h < params.states; ++h) {
      if ((sd.row(h).array() <= params.sigma_floor * (1.0 + tol)).all()) return true;
      for (int g = h + 1; g < params.states; ++g)
        if ((mu.row(h) - mu.row(g)).cwiseAbs().maxCoeff() <= tol &&
            (sd.row(h) - sd.row(g)).cwiseAbs().maxCoeff() <= tol)
          return true;
    }
  }
  return false;
}

void align_labels(ModelParams& params) {
  for (int s = 0; s < params.num_stocks(); ++s) {
    const auto& mu = params.gauss_mean[static_cast<std::size_t>(s)];
    std::vector<int> perm(static_cast<std::size_t>(params.states));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return mu(a, 3) < mu(b, 3); });
    permute_states(params, s, perm);
  }
}

FitResult fit(const AlignedPanel& panel, const EventGrid* events, const CorrelationGraph& graph,
              int classes, const EmConfig& config, const std::optional<ModelParams>& init,
              std::ostream* log) {
  config.validate();
  if (panel.num_days() < 2) throw InsufficientDataError("fit needs at least 2 days");
  FitResult result;
  if (init) {
    if (init->neighbors != graph.neighbor_sets || init->states != config.states ||
        init->classes != classes)
      throw InputError("warm-start parameters do not match the graph or model sizes");
    result.params = rebase_params(*init, panel);
  } else {
    result.params = initialize_params(panel, graph, config.states, classes, config.smoothing,
                                      config.sigma_floor);
  }
  const MStepOptions mopts{config.states, classes, config.smoothing, config.sigma_floor, config.q_squared};
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const auto start = std::chrono::steady_clock::now();
    const auto es = e_step(result.params, panel, events, config);
    result.params = m_step(es.beliefs, graph, panel, events, mopts);
    result.params.validate();
    result.ll_trace.push_back(es.expected_ll);
    result.ll_stderr.push_back(es.ll_stderr);
    result.log_evidence.push_back(es.log_evidence);
    result.iterations = iter + 1;
    if (log) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      nlohmann::json line{{"iteration", iter},          {"expected_ll", es.expected_ll},
                          {"ll_stderr", es.ll_stderr},  {"log_evidence", es.log_evidence},
                          {"wall_seconds", secs}};
      *log << line.dump() << '\n';
    }
    if (iter > 0) {
      const double prev = result.ll_trace[static_cast<std::size_t>(iter - 1)];
      if ((es.expected_ll - prev) < config.tol * std::abs(prev)) break;
    }
  }
  return result;
}

}  // namespace echmm

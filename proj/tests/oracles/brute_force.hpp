#pragma once
// Exact posteriors of a small coupled chain by enumerating every joint state
// path. Exponential in S * T; meant for S * T <= 10 with H = 2.

#include <cmath>
#include <vector>

namespace oracle {

struct CoupledChain {
  int states = 2;
  std::vector<std::vector<int>> neighbors;           // ordered C_s
  std::vector<std::vector<double>> pi;               // [s][h]
  std::vector<std::vector<std::vector<double>>> A;   // [s][row][h], row mixed radix, first most significant
  std::vector<std::vector<std::vector<double>>> log_emit;  // [t][s][h]
};

struct CoupledPosteriors {
  std::vector<std::vector<std::vector<double>>> z;                // [t][s][h]
  std::vector<std::vector<std::vector<std::vector<double>>>> q;   // [t][s][row][h], t >= 1
};

inline int joint_row(const std::vector<int>& config, const std::vector<int>& set, int H) {
  int r = 0;
  for (int j : set) r = r * H + config[static_cast<std::size_t>(j)];
  return r;
}

inline CoupledPosteriors enumerate_posteriors(const CoupledChain& m) {
  const int T = static_cast<int>(m.log_emit.size());
  const int S = static_cast<int>(m.pi.size());
  const int H = m.states;
  const int cells = S * T;
  long paths = 1;
  for (int i = 0; i < cells; ++i) paths *= H;

  CoupledPosteriors out;
  out.z.assign(static_cast<std::size_t>(T),
               std::vector<std::vector<double>>(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(H), 0.0)));
  out.q.resize(static_cast<std::size_t>(T));
  for (int t = 1; t < T; ++t)
    for (int s = 0; s < S; ++s)
      out.q[static_cast<std::size_t>(t)].push_back(std::vector<std::vector<double>>(
          m.A[static_cast<std::size_t>(s)].size(), std::vector<double>(static_cast<std::size_t>(H), 0.0)));

  std::vector<double> logw(static_cast<std::size_t>(paths));
  std::vector<std::vector<int>> y(static_cast<std::size_t>(T), std::vector<int>(static_cast<std::size_t>(S)));
  const auto decode = [&](long p) {
    for (int t = T - 1; t >= 0; --t)
      for (int s = S - 1; s >= 0; --s) {
        y[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = static_cast<int>(p % H);
        p /= H;
      }
  };
  double best = -INFINITY;
  for (long p = 0; p < paths; ++p) {
    decode(p);
    double lw = 0.0;
    for (int s = 0; s < S; ++s) lw += std::log(m.pi[static_cast<std::size_t>(s)][static_cast<std::size_t>(y[0][static_cast<std::size_t>(s)])]);
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s) {
        const auto us = static_cast<std::size_t>(s);
        const auto ut = static_cast<std::size_t>(t);
        const int h = y[ut][us];
        if (t > 0) {
          const int r = joint_row(y[ut - 1], m.neighbors[us], H);
          lw += std::log(m.A[us][static_cast<std::size_t>(r)][static_cast<std::size_t>(h)]);
        }
        lw += m.log_emit[ut][us][static_cast<std::size_t>(h)];
      }
    logw[static_cast<std::size_t>(p)] = lw;
    if (lw > best) best = lw;
  }
  double norm = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - best);
    norm += lw;
  }
  for (long p = 0; p < paths; ++p) {
    decode(p);
    const double w = logw[static_cast<std::size_t>(p)] / norm;
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s) {
        const auto us = static_cast<std::size_t>(s);
        const auto ut = static_cast<std::size_t>(t);
        const auto h = static_cast<std::size_t>(y[ut][us]);
        out.z[ut][us][h] += w;
        if (t > 0) {
          const int r = joint_row(y[ut - 1], m.neighbors[us], H);
          out.q[ut][us][static_cast<std::size_t>(r)][h] += w;
        }
      }
  }
  return out;
}

}  // namespace oracle

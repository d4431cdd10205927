#include "grainkin/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace grainkin {

EdgeDeletionSeries estimate_edge_deletions(const GrainTrackDataset& ds) {
  const std::size_t n = ds.n_steps();
  if (n < 2)
    throw std::invalid_argument("estimate_edge_deletions: need >= 2 steps");
  EdgeDeletionSeries out;
  out.t.reserve(n - 1);
  out.N.reserve(n - 1);
  out.dE.reserve(n - 1);
  out.dEf.reserve(n - 1);
  out.dS.reserve(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const auto& cur = ds.steps[k];
    const auto& nxt = ds.steps[k + 1];
    double dE = 0.0, dEf = 0.0;
    // both sides sorted by id: merge walk
    std::size_t i = 0, j = 0;
    while (i < cur.size()) {
      while (j < nxt.size() && nxt[j].id < cur[i].id) ++j;  // births: ignored
      if (j < nxt.size() && nxt[j].id == cur[i].id) {
        if (nxt[j].sides != cur[i].sides) dE += 1.0;
        ++j;
      } else {
        const int s = cur[i].sides;
        if (s == 3 || s == 5)
          dEf += 3.0;
        else if (s == 4)
          dEf += 2.0;
      }
      ++i;
    }
    double dS = (dE - dEf) / 4.0;
    if (dS < 0.0) {
      out.floored_mass += -dS;
      dS = 0.0;
    }
    out.t.push_back(ds.times[k]);
    out.N.push_back(static_cast<std::int64_t>(cur.size()));
    out.dE.push_back(dE);
    out.dEf.push_back(dEf);
    out.dS.push_back(dS);
  }
  out.S.assign(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) out.S[k] = out.S[k - 1] + out.dS[k - 1];
  return out;
}

LinearFit coarsening_rate(const GrainTrackDataset& ds, std::size_t k_begin,
                          std::size_t k_end) {
  LinearFit fit;
  k_end = std::min(k_end, ds.n_steps());
  std::vector<double> xs, ys;
  for (std::size_t k = k_begin; k < k_end; ++k) {
    if (ds.steps[k].empty()) continue;
    xs.push_back(ds.times[k]);
    ys.push_back(ds.mean_area_at(k));
  }
  if (xs.size() < 3) {
    fit.degenerate = true;
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    fit.degenerate = true;  // constant series: slope 0, R undefined
    return fit;
  }
  fit.alpha = sxy / sxx;
  fit.pearson_R = sxy / std::sqrt(sxx * syy);
  return fit;
}

LinearFit coarsening_rate(const GrainTrackDataset& ds) {
  return coarsening_rate(ds, 0, ds.n_steps());
}

double weighted_median(std::vector<std::pair<double, double>> vw) {
  double total = 0.0;
  for (const auto& [v, w] : vw) {
    if (w < 0.0)
      throw std::invalid_argument("weighted_median: negative weight");
    total += w;
  }
  if (!(total > 0.0))
    throw std::invalid_argument("weighted_median: zero total weight");
  std::sort(vw.begin(), vw.end());
  double cum = 0.0;
  for (const auto& [v, w] : vw) {
    cum += w;
    if (cum >= 0.5 * total) return v;
  }
  return vw.back().first;
}

BetaFit fit_beta_pd(const GrainTrackDataset& ds, const EdgeDeletionSeries& s,
                    double burn_in) {
  BetaFit fit;
  const double dt = ds.dt();
  if (dt <= 0.0 || s.dS.empty()) {
    fit.degenerate = true;
    return fit;
  }
  const std::size_t b =
      static_cast<std::size_t>(burn_in * static_cast<double>(s.dS.size()));
  std::vector<std::pair<double, double>> vw;
  for (std::size_t k = b; k < s.dS.size(); ++k) {
    const double x = static_cast<double>(s.N[k]);
    if (x <= 0.0) continue;
    vw.push_back({(s.dS[k] / dt) / x, x});
  }
  if (vw.empty()) {
    fit.degenerate = true;
    return fit;
  }
  fit.beta = weighted_median(std::move(vw));
  return fit;
}

BetaFit fit_beta_rd(const GrainTrackDataset& ds, const EdgeDeletionSeries& s,
                    double burn_in) {
  BetaFit fit;
  const std::size_t n = ds.n_steps();
  if (n < 2 || s.S.size() != n) {
    fit.degenerate = true;
    return fit;
  }
  const std::size_t b =
      static_cast<std::size_t>(burn_in * static_cast<double>(n - 1));
  const double N_base = static_cast<double>(ds.count_at(b));
  const double S_base = s.S[b];
  std::vector<std::pair<double, double>> vw;
  for (std::size_t k = b + 1; k < n; ++k) {
    const double x = N_base - static_cast<double>(ds.count_at(k));
    if (x <= 0.0) continue;
    vw.push_back({(s.S[k] - S_base) / x, x});
  }
  if (vw.empty()) {
    fit.degenerate = true;  // no grain deletions in the kept window
    return fit;
  }
  fit.beta = weighted_median(std::move(vw));
  return fit;
}

std::vector<double> topology_frequencies(const GrainTrackDataset& ds,
                                         double t) {
  const std::size_t k = ds.step_nearest(t);
  const auto& rows = ds.steps[k];
  if (rows.empty())
    throw std::runtime_error("topology_frequencies: step at t = " +
                             std::to_string(ds.times[k]) + " is empty");
  int max_side = 0;
  for (const GrainRecord& r : rows) max_side = std::max(max_side, r.sides);
  std::vector<double> p(static_cast<std::size_t>(max_side) + 1, 0.0);
  for (const GrainRecord& r : rows) p[r.sides] += 1.0;
  const double n = static_cast<double>(rows.size());
  for (double& v : p) v /= n;
  return p;
}

std::vector<double> solve_correlated_weights(const std::vector<double>& p,
                                             const std::vector<double>& c) {
  if (p.size() != c.size())
    throw std::invalid_argument("solve_correlated_weights: length mismatch");
  std::vector<double> w(p.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] < 0.0 || c[k] < 0.0)
      throw std::invalid_argument(
          "solve_correlated_weights: negative input entry");
    if (c[k] > 0.0) {
      if (p[k] <= 0.0)
        throw std::invalid_argument(
            "solve_correlated_weights: c > 0 where p = 0 (index " +
            std::to_string(k) + ")");
      w[k] = c[k] / p[k];
      total += w[k];
    }
  }
  if (!(total > 0.0))
    throw std::invalid_argument("solve_correlated_weights: c is all zero");
  for (double& v : w) v /= total;
  return w;
}

WeightTable build_correlated_table(
    const std::vector<double>& p,
    const std::map<int, std::vector<double>>& c_by_trigger,
    const std::map<int, int>& donor) {
  WeightTable table;
  std::vector<int> triggers;
  for (const auto& [l, c] : c_by_trigger) triggers.push_back(l);
  for (const auto& [l, d] : donor)
    if (!c_by_trigger.count(l)) triggers.push_back(l);
  for (int l : triggers) {
    const std::vector<double>* c = nullptr;
    auto it = c_by_trigger.find(l);
    if (it != c_by_trigger.end()) {
      c = &it->second;
    } else {
      const auto dit = donor.find(l);
      const auto cit =
          dit != donor.end() ? c_by_trigger.find(dit->second) : c_by_trigger.end();
      if (cit == c_by_trigger.end())
        throw std::invalid_argument(
            "build_correlated_table: no c table (or donor) for trigger " +
            std::to_string(l));
      c = &cit->second;
    }
    table[l] = solve_correlated_weights(p, *c);
  }
  return table;
}

FitResult fit_dataset(const GrainTrackDataset& ds, const FitOptions& opt) {
  FitResult out;
  out.burn_in = opt.burn_in;
  out.series = estimate_edge_deletions(ds);
  const std::size_t n = ds.n_steps();
  const std::size_t trim =
      static_cast<std::size_t>(opt.burn_in * static_cast<double>(n));
  out.coarsening = coarsening_rate(ds, trim, n - std::min(trim, n));
  out.beta_pd = fit_beta_pd(ds, out.series, opt.burn_in);
  out.beta_rd = fit_beta_rd(ds, out.series, opt.burn_in);
  return out;
}

}  // namespace grainkin

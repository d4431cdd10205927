#include "grainkin/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "grainkin/fitting.hpp"

namespace grainkin {

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("tv_distance: length mismatch");
  double sp = 0.0, sq = 0.0, d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
    d += std::abs(p[i] - q[i]);
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw std::invalid_argument("tv_distance: inputs must sum to 1");
  return 0.5 * d;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_distance: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      x = a[i];
    else
      x = b[j];
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

double distribution_variance(const std::vector<double>& p) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double x = static_cast<double>(k);
    m1 += x * p[k];
    m2 += x * x * p[k];
  }
  return m2 - m1 * m1;
}

Histogram make_histogram(const std::vector<double>& samples, int nbins,
                         int species_tag) {
  if (nbins < 1) throw std::invalid_argument("make_histogram: nbins < 1");
  Histogram h;
  h.species = species_tag;
  h.lo = 0.0;
  h.hi = 0.0;
  for (double x : samples) h.hi = std::max(h.hi, x);
  if (h.hi <= 0.0) h.hi = 1.0;
  h.counts.assign(static_cast<std::size_t>(nbins), 0);
  for (double x : samples) {
    int b = static_cast<int>((x - h.lo) / (h.hi - h.lo) *
                             static_cast<double>(nbins));
    b = std::clamp(b, 0, nbins - 1);
    ++h.counts[b];
  }
  return h;
}

namespace {

std::size_t step_near_or_throw(const GrainTrackDataset& ds, double t,
                               const char* which) {
  const std::size_t k = ds.step_nearest(t);
  const double dt = ds.dt();
  const double slack = dt > 0.0 ? 0.5000001 * dt : 1e-9 * std::max(1.0, std::abs(t));
  if (std::abs(ds.times[k] - t) > slack)
    throw std::invalid_argument(std::string("compare_runs: run ") + which +
                                " has no snapshot near t = " +
                                std::to_string(t));
  return k;
}

std::vector<double> normalized_areas(const GrainTrackDataset& ds,
                                     std::size_t step, int species) {
  std::vector<double> v;
  for (const GrainRecord& r : ds.steps[step])
    if (r.sides == species) v.push_back(r.area);
  if (v.empty()) return v;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (mean > 0.0)
    for (double& x : v) x /= mean;
  return v;
}

}  // namespace

CompareReport compare_runs(const GrainTrackDataset& a,
                           const GrainTrackDataset& b,
                           const std::vector<double>& times,
                           const std::vector<int>& ks_species) {
  CompareReport rep;
  rep.ks_species = ks_species;
  for (double t : times) {
    CompareRow row;
    row.t = t;
    const std::size_t ka = step_near_or_throw(a, t, "A");
    const std::size_t kb = step_near_or_throw(b, t, "B");
    row.t_a = a.times[ka];
    row.t_b = b.times[kb];
    row.n_a = a.count_at(ka);
    row.n_b = b.count_at(kb);

    std::vector<double> pa = topology_frequencies(a, t);
    std::vector<double> pb = topology_frequencies(b, t);
    const std::size_t len = std::max(pa.size(), pb.size());
    pa.resize(len, 0.0);
    pb.resize(len, 0.0);
    row.tv = tv_distance(pa, pb);

    for (int s : ks_species) {
      std::vector<double> va = normalized_areas(a, ka, s);
      std::vector<double> vb = normalized_areas(b, kb, s);
      if (va.empty() || vb.empty()) continue;
      row.ks[s] = ks_distance(std::move(va), std::move(vb));
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace grainkin

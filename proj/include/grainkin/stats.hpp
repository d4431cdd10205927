#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "grainkin/graintrack.hpp"

namespace grainkin {

// (1/2) sum |p_i - q_i|; inputs must be equal-length probability vectors
// (each summing to 1 within 1e-9).
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);

// sup_x |F_a(x) - F_b(x)| of the empirical CDFs, merged-sort sweep.
double ks_distance(std::vector<double> a, std::vector<double> b);

// Variance of the integer-indexed distribution p (index is the value).
double distribution_variance(const std::vector<double>& p);

struct Histogram {
  int species = -1;  // tag only; -1 = all species
  double lo = 0.0;
  double hi = 0.0;  // uniform bin edges: lo + i*(hi-lo)/counts.size()
  std::vector<std::int64_t> counts;
};
// Uniform bins over [0, max sample] (the default figure-analog convention).
Histogram make_histogram(const std::vector<double>& samples, int nbins = 100,
                         int species_tag = -1);

struct CompareRow {
  double t = 0.0;  // requested time
  double t_a = 0.0, t_b = 0.0;
  double tv = 0.0;             // over side-count frequencies
  std::map<int, double> ks;    // per species: KS over mean-normalized areas;
                               // absent when either run lacks samples
  std::size_t n_a = 0, n_b = 0;
};
struct CompareReport {
  std::vector<int> ks_species;
  std::vector<CompareRow> rows;
};
// Side-by-side metrics at each requested time, taken at the nearest step of
// each dataset (must lie within half a step of the request). Area samples
// are normalized by their own per-run per-species mean before KS.
CompareReport compare_runs(const GrainTrackDataset& a,
                           const GrainTrackDataset& b,
                           const std::vector<double>& times,
                           const std::vector<int>& ks_species = {5, 6, 7});

}  // namespace grainkin

#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "grainkin/graintrack.hpp"
#include "grainkin/model.hpp"

namespace grainkin {

// Per-interval side-change bookkeeping between consecutive steps. dEf
// charges each vanished grain by its last recorded side count (3, 2, 3
// neighbors change for a 3-, 4-, 5-gon); dE counts surviving grains whose
// side count changed, once per grain per interval; dS = (dE - dEf)/4 is
// floored at 0 with the clamped mass reported separately.
struct EdgeDeletionSeries {
  std::vector<double> t;        // interval start times, size n_steps - 1
  std::vector<std::int64_t> N;  // live grains at the interval start
  std::vector<double> dE;
  std::vector<double> dEf;
  std::vector<double> dS;
  std::vector<double> S;  // S[k] = sum_{j<k} dS[j], size n_steps
  double floored_mass = 0.0;
};
EdgeDeletionSeries estimate_edge_deletions(const GrainTrackDataset& ds);

struct LinearFit {
  double alpha = 0.0;
  double pearson_R = 0.0;
  bool degenerate = false;
};
// Least-squares slope of per-grain mean area vs time over steps
// [k_begin, k_end); empty steps are skipped.
LinearFit coarsening_rate(const GrainTrackDataset& ds, std::size_t k_begin,
                          std::size_t k_end);
LinearFit coarsening_rate(const GrainTrackDataset& ds);

struct BetaFit {
  double beta = 0.0;
  bool degenerate = false;
};
// argmin_b sum_k |dS_k/dt - b*N_k|: exact L1 slope through the origin via
// the weighted median of ratios. burn_in discards that leading fraction of
// intervals.
BetaFit fit_beta_pd(const GrainTrackDataset& ds, const EdgeDeletionSeries& s,
                    double burn_in);
// argmin_b sum_k |S(t_k) - b*(N(0) - N(t_k))|. The cumulative series is
// re-based at the end of the burn-in window so the through-origin form
// holds on the kept steps.
BetaFit fit_beta_rd(const GrainTrackDataset& ds, const EdgeDeletionSeries& s,
                    double burn_in);

// Normalized side-count frequencies among live grains at the step nearest t,
// indexed by side count.
std::vector<double> topology_frequencies(const GrainTrackDataset& ds, double t);

// w_k = (c_k/p_k) / sum_n (c_n/p_n); zero where c_k = 0. Satisfies
// p_k w_k / sum_n p_n w_n = c_k (after normalizing c) and sums to 1.
std::vector<double> solve_correlated_weights(const std::vector<double>& p,
                                             const std::vector<double>& c);

// One correlated-weight row per trigger. Triggers missing a c table may
// borrow another trigger's via the donor map (e.g. 2 -> 4, 3 -> 4).
WeightTable build_correlated_table(
    const std::vector<double>& p,
    const std::map<int, std::vector<double>>& c_by_trigger,
    const std::map<int, int>& donor);

struct FitOptions {
  double burn_in = 0.10;
};
struct FitResult {
  LinearFit coarsening;  // over the middle (1 - 2*burn_in) of the run
  BetaFit beta_pd;
  BetaFit beta_rd;
  EdgeDeletionSeries series;
  double burn_in = 0.10;
};
FitResult fit_dataset(const GrainTrackDataset& ds, const FitOptions& opt = {});

// argmin over m of sum w_i |v_i - m|; pairs are (value, weight).
double weighted_median(std::vector<std::pair<double, double>> value_weight);

}  // namespace grainkin

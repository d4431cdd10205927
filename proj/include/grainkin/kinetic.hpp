#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grainkin/model.hpp"

namespace grainkin {

// Finite-T* signal: a selection denominator demanded by the dynamics dropped
// to its threshold, so mutation probabilities degenerate.
struct BlowUp final : std::runtime_error {
  double t_star;
  int trigger;
  BlowUp(double t, int trig)
      : std::runtime_error("blow-up at t = " + std::to_string(t) +
                           " (trigger " + std::to_string(trig) + ")"),
        t_star(t),
        trigger(trig) {}
};

// Support reached the top of the grid; the caller must raise x_max.
struct GridOverflow final : std::runtime_error {
  explicit GridOverflow(const std::string& what) : std::runtime_error(what) {}
};

// Uniform grid x_g = g*dx, g = 0..G. Row f[s] holds the density of species s
// at the nodes; rows below s_min stay zero so species labels index directly.
struct DensityField {
  double dx = 0.0;
  double t = 0.0;
  std::vector<std::vector<double>> f;

  std::size_t n_nodes() const { return f.empty() ? 0 : f.back().size(); }
  double x_max() const {
    return n_nodes() ? dx * static_cast<double>(n_nodes() - 1) : 0.0;
  }
  double node_x(std::size_t g) const { return dx * static_cast<double>(g); }
};

enum class DensityShape { Uniform, Triangle };

struct DensitySpec {
  int species = 0;
  DensityShape shape = DensityShape::Uniform;
  double a = 0.0;  // support (a, b]
  double b = 0.0;
  double mass = 0.0;
};

// Samples the specs nodewise on the left-open support (a, b] (the node at
// x = a stays zero, so an a = 0 spec leaves the origin node clear and the
// rectangle-rule boundary supply matches the trapezoid mass exactly), then
// rescales each species row so the trapezoid mass is exact.
DensityField sample_density(const ModelPreset& preset,
                            const std::vector<DensitySpec>& specs, double dx,
                            double x_max);

// Trapezoid totals per species label; optional grand total.
std::vector<double> compute_totals(const DensityField& field,
                                   double* F_total = nullptr);
// Trapezoid of x*f summed over species.
double total_area(const DensityField& field);
// Sum of (s - zero_label) * F_s.
double polyhedral_defect(const ModelPreset& preset,
                         const std::vector<double>& F);
// Per-label outflow rate |v_l| * f_l(0); zero for non-shrinking labels.
std::vector<double> boundary_flux(const ModelPreset& preset,
                                  const DensityField& field);

struct WeightFractions {
  // Per trigger: W_s = w_s / sum_n w_n F_n, zero row when the denominator
  // is nonpositive. denom keeps the raw denominators for demand checks.
  std::map<int, std::vector<double>> W;
  std::map<int, double> denom;
  double gamma = 0.0;  // F / sum_n w_n^I F_n; 0 without an interior rule
};
WeightFractions compute_weights(const ModelPreset& preset,
                                const std::vector<double>& F, double F_total);

enum class FluxPath { Generic, Topological, Both };

struct FluxEval {
  std::vector<double> F;
  double F_total = 0.0;
  std::vector<double> Ldot;
  WeightFractions wf;
  double beta = 0.0;
  std::vector<double> alpha;               // loss rate: j_s^- = alpha_s f_s
  std::vector<std::vector<double>> jplus;  // gain density per label/node
  double path_rel_diff = 0.0;              // filled for FluxPath::Both
};

// Evaluates the mutation fluxes on the field as it stands (traces are read
// at node 0). The generic path assembles transfer-count coefficients from
// the preset rules; the topological path hardcodes the grain-coarsening
// specialization (requires the standard five grain triggers). When eps is
// given, a demanded denominator at or below its threshold raises BlowUp:
// demanded means Ldot > 0 for a boundary trigger, or beta > 0 with mass
// present for the interior one.
void compute_flux_into(const ModelPreset& preset, const DensityField& field,
                       double beta, FluxPath path,
                       const std::map<int, double>* eps, FluxEval& out);
FluxEval compute_flux(const ModelPreset& preset, const DensityField& field,
                      double beta, FluxPath path);

struct SolverConfig {
  double dx = 0.0;
  double dt = 0.0;
  double x_max = 0.0;
  double t_end = 0.0;
  // Per-trigger blow-up threshold = eps_scale * (initial weighted total).
  double eps_scale = 1e-6;
  FluxPath path = FluxPath::Generic;
  int record_every = 1;  // trajectory row cadence in steps
  // Velocities that do not shift an integer cell count per step are an error
  // unless this is set, in which case a linear-interpolation shift is used
  // (first-order accuracy loss, still positivity-preserving).
  bool allow_fractional_shift = false;
  // RD mode: beta(t) = alpha * beta_rd * n_ref * F(t)/F(0).
  double rd_n_ref = 1.0;
};

struct TrajectoryRow {
  double t = 0.0;
  std::vector<double> F;
  double F_total = 0.0;
  double area = 0.0;
  double defect = 0.0;
  std::vector<double> L;
  double conservation_error = 0.0;  // |F_total + sum L - F(0)|
};

struct SolveResult {
  std::vector<TrajectoryRow> rows;
  std::optional<double> t_star;
  int t_star_trigger = 0;
  double F0 = 0.0;
  // max over steps/nodes of |sum_s j_s| relative to the largest |j_s| seen
  double max_flux_identity_rel = 0.0;
  double max_path_rel_diff = 0.0;  // FluxPath::Both only
  bool rd_experimental = false;
  DensityField final_field;
};

// One step: exact cell shifts per species (outflow trace read at node 0
// after the shift), then the source update f <- f*(1 - alpha*dt)_+ + dt*j+
// (linearized integrating factor; first order, positivity by clamping) and
// L_l accumulation by dt * Ldot_l. Blow-up is checked on the post-shift
// field before any source is applied.
class KineticSolver {
 public:
  KineticSolver(const ModelPreset& preset, const DensityField& init,
                const SolverConfig& config);

  // False when blow-up was detected (t_star() set); throws GridOverflow when
  // support would leave the grid.
  bool step();
  SolveResult solve();

  const DensityField& field() const { return field_; }
  const std::vector<double>& cumulative_loss() const { return L_; }
  std::optional<double> t_star() const { return t_star_; }
  int t_star_trigger() const { return t_star_trigger_; }
  double initial_total() const { return F0_; }
  double current_beta() const;
  long steps_taken() const { return steps_; }
  double max_flux_identity_rel() const;
  double max_path_rel_diff() const { return max_path_diff_; }
  const std::map<int, double>& blowup_thresholds() const { return eps_; }

 private:
  void shift_species(int s);

  const ModelPreset* preset_;
  SolverConfig cfg_;
  DensityField field_;
  std::vector<int> cells_;      // per-label signed cell shift per step
  std::vector<double> delta_;   // per-label displacement in cells (lerp mode)
  std::vector<bool> fractional_;
  std::map<int, double> eps_;
  std::vector<double> L_;
  double F0_ = 0.0;
  std::optional<double> t_star_;
  int t_star_trigger_ = 0;
  double max_ident_abs_ = 0.0;
  double max_j_abs_ = 0.0;
  double max_path_diff_ = 0.0;
  long steps_ = 0;
  FluxEval flux_;
  std::vector<double> buf_;
};

}  // namespace grainkin

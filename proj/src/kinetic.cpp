#include "grainkin/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "grainkin/topology.hpp"

namespace grainkin {

namespace {

constexpr double kPiThird = std::numbers::pi / 3.0;

double trapezoid(const std::vector<double>& row, double dx) {
  const std::size_t n = row.size();
  if (n < 2) return 0.0;
  double s = 0.5 * (row.front() + row.back());
  for (std::size_t g = 1; g + 1 < n; ++g) s += row[g];
  return s * dx;
}

double at_or_zero(const std::vector<double>& v, int i) {
  return (i >= 0 && i < static_cast<int>(v.size())) ? v[i] : 0.0;
}

}  // namespace

DensityField sample_density(const ModelPreset& preset,
                            const std::vector<DensitySpec>& specs, double dx,
                            double x_max) {
  if (!(dx > 0.0) || !(x_max > dx))
    throw std::invalid_argument("sample_density: need dx > 0 and x_max > dx");
  const double cells = x_max / dx;
  const long G = std::lround(cells);
  if (G < 1 || std::abs(cells - static_cast<double>(G)) > 1e-9 * cells)
    throw std::invalid_argument(
        "sample_density: x_max must be an integer number of cells");
  const SpeciesConfig& sc = preset.species;
  DensityField field;
  field.dx = dx;
  field.f.assign(static_cast<std::size_t>(sc.M) + 1,
                 std::vector<double>(static_cast<std::size_t>(G) + 1, 0.0));

  std::vector<double> target(static_cast<std::size_t>(sc.M) + 1, 0.0);
  const double tol = 1e-9 * dx;
  for (const DensitySpec& spec : specs) {
    if (!sc.in_range(spec.species))
      throw std::invalid_argument("sample_density: species out of range");
    if (!(spec.mass > 0.0) || !(spec.b > spec.a) || spec.a < 0.0 ||
        spec.b > x_max + tol)
      throw std::invalid_argument(
          "sample_density: need mass > 0 and 0 <= a < b <= x_max");
    auto& row = field.f[spec.species];
    const double width = spec.b - spec.a;
    const double mid = 0.5 * (spec.a + spec.b);
    // Supports are left-open: the node at x = a stays zero. For a = 0 this
    // keeps the origin node clear, so the per-step boundary supply
    // sum_k f(k*dx)*dx equals the trapezoid mass exactly and a draining
    // species reaches zero in step with its supply.
    for (long g = 0; g <= G; ++g) {
      const double x = dx * static_cast<double>(g);
      if (x <= spec.a + tol || x > spec.b + tol) continue;
      if (spec.shape == DensityShape::Uniform) {
        row[g] += spec.mass / width;
      } else {
        const double peak = 2.0 * spec.mass / width;
        row[g] += peak * std::max(0.0, 1.0 - std::abs(x - mid) / (0.5 * width));
      }
    }
    target[spec.species] += spec.mass;
  }
  for (int s = sc.s_min; s <= sc.M; ++s) {
    if (target[s] <= 0.0) continue;
    const double measured = trapezoid(field.f[s], dx);
    if (measured <= 0.0)
      throw std::invalid_argument(
          "sample_density: support unresolved at this dx (species " +
          std::to_string(s) + ")");
    const double scale = target[s] / measured;
    for (double& v : field.f[s]) v *= scale;
  }
  return field;
}

std::vector<double> compute_totals(const DensityField& field, double* F_total) {
  std::vector<double> F(field.f.size(), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < field.f.size(); ++s) {
    F[s] = trapezoid(field.f[s], field.dx);
    total += F[s];
  }
  if (F_total) *F_total = total;
  return F;
}

double total_area(const DensityField& field) {
  double a = 0.0;
  for (const auto& row : field.f) {
    if (row.size() < 2) continue;
    double s = 0.5 * (row.back() * field.dx * static_cast<double>(row.size() - 1));
    for (std::size_t g = 1; g + 1 < row.size(); ++g)
      s += row[g] * field.dx * static_cast<double>(g);
    a += s * field.dx;  // node 0 contributes x = 0
  }
  return a;
}

double polyhedral_defect(const ModelPreset& preset,
                         const std::vector<double>& F) {
  const int zero = preset.species.zero_label();
  double p = 0.0;
  for (int s = preset.species.s_min; s < static_cast<int>(F.size()); ++s)
    p += static_cast<double>(s - zero) * F[s];
  return p;
}

std::vector<double> boundary_flux(const ModelPreset& preset,
                                  const DensityField& field) {
  std::vector<double> Ldot(field.f.size(), 0.0);
  const SpeciesConfig& sc = preset.species;
  for (int l = sc.s_min; l <= sc.M; ++l)
    if (sc.v[l] < 0.0) Ldot[l] = -sc.v[l] * field.f[l][0];
  return Ldot;
}

WeightFractions compute_weights(const ModelPreset& preset,
                                const std::vector<double>& F, double F_total) {
  WeightFractions wf;
  const int M = preset.species.M;
  for (const auto& [l, rule] : preset.rules) {
    double D = 0.0;
    for (int n = preset.species.s_min; n <= M; ++n) D += rule.w[n] * F[n];
    wf.denom[l] = D;
    auto& W = wf.W[l];
    W.assign(static_cast<std::size_t>(M) + 1, 0.0);
    if (D > 0.0)
      for (int n = preset.species.s_min; n <= M; ++n) W[n] = rule.w[n] / D;
    if (l == kInteriorTrigger) wf.gamma = D > 0.0 ? F_total / D : 0.0;
  }
  return wf;
}

namespace {

// Gains/losses assembled from the preset's mutation rules: the K targets of
// each rule row contribute one transfer each, which realizes the J counts.
void generic_flux(const ModelPreset& preset, const DensityField& field,
                  const FluxEval& in, std::vector<std::vector<double>>& jplus,
                  std::vector<double>& alpha) {
  const SpeciesConfig& sc = preset.species;
  const std::size_t nodes = field.n_nodes();
  alpha.assign(static_cast<std::size_t>(sc.M) + 1, 0.0);
  jplus.resize(static_cast<std::size_t>(sc.M) + 1);
  for (auto& row : jplus) row.assign(nodes, 0.0);

  for (const auto& [l, rule] : preset.rules) {
    const bool interior = (l == kInteriorTrigger);
    const double pref =
        interior ? in.beta * in.wf.gamma : in.Ldot[l];
    if (!(pref > 0.0)) continue;
    const std::vector<double>& Wl = in.wf.W.at(l);
    for (int s = sc.s_min; s <= sc.M; ++s) {
      if (!(rule.w[s] > 0.0)) continue;
      const double c0 = pref * (interior ? rule.w[s] : Wl[s]);
      alpha[s] += c0 * static_cast<double>(rule.K);
      const auto& targets = rule.R[s];
      for (std::size_t j = 0; j < targets.size(); ++j) {
        // collapse repeated targets into one pass over the nodes
        if (j > 0 &&
            std::find(targets.begin(), targets.begin() + j, targets[j]) !=
                targets.begin() + j)
          continue;
        int count = 0;
        for (int tgt : targets)
          if (tgt == targets[j]) ++count;
        const double c = c0 * static_cast<double>(count);
        const auto& src = field.f[s];
        auto& dst = jplus[targets[j]];
        for (std::size_t g = 0; g < nodes; ++g) dst[g] += c * src[g];
      }
    }
  }
}

// Hardcoded grain-coarsening specialization. The integer coefficients fold
// |v_l| * (transfer multiplicity) into units of pi/3; the edge-deletion
// terms carry no velocity factor.
void topological_flux(const ModelPreset& preset, const DensityField& field,
                      const FluxEval& in,
                      std::vector<std::vector<double>>& jplus,
                      std::vector<double>& alpha) {
  const SpeciesConfig& sc = preset.species;
  const std::size_t nodes = field.n_nodes();
  alpha.assign(static_cast<std::size_t>(sc.M) + 1, 0.0);
  jplus.resize(static_cast<std::size_t>(sc.M) + 1);
  for (auto& row : jplus) row.assign(nodes, 0.0);

  const double tr2 = field.f[2][0];
  const double tr3 = field.f[3][0];
  const double tr4 = field.f[4][0];
  const double tr5 = field.f[5][0];
  const std::vector<double>& W2 = in.wf.W.at(2);
  const std::vector<double>& W3 = in.wf.W.at(3);
  const std::vector<double>& W4 = in.wf.W.at(4);
  const std::vector<double>& W5 = in.wf.W.at(5);
  static const std::vector<double> kNoWeights;
  const auto it_int = preset.rules.find(kInteriorTrigger);
  const std::vector<double>& w0 =
      it_int != preset.rules.end() ? it_int->second.w : kNoWeights;
  const double bg = in.beta * in.wf.gamma;

  for (int n = sc.s_min; n <= sc.M; ++n) {
    const double from_up2 = kPiThird * 8.0 * tr2 * at_or_zero(W2, n + 2);
    const double from_up1 =
        kPiThird * (9.0 * tr3 * at_or_zero(W3, n + 1) +
                    4.0 * tr4 * at_or_zero(W4, n + 1) +
                    2.0 * tr5 * at_or_zero(W5, n + 1)) +
        2.0 * bg * at_or_zero(w0, n + 1);
    const double from_dn1 = kPiThird * tr5 * at_or_zero(W5, n - 1) +
                            2.0 * bg * at_or_zero(w0, n - 1);
    auto& dst = jplus[n];
    if (from_up2 != 0.0 && n + 2 <= sc.M) {
      const auto& src = field.f[n + 2];
      for (std::size_t g = 0; g < nodes; ++g) dst[g] += from_up2 * src[g];
    }
    if (from_up1 != 0.0 && n + 1 <= sc.M) {
      const auto& src = field.f[n + 1];
      for (std::size_t g = 0; g < nodes; ++g) dst[g] += from_up1 * src[g];
    }
    if (from_dn1 != 0.0 && n - 1 >= sc.s_min) {
      const auto& src = field.f[n - 1];
      for (std::size_t g = 0; g < nodes; ++g) dst[g] += from_dn1 * src[g];
    }
    alpha[n] = kPiThird * (8.0 * tr2 * W2[n] + 9.0 * tr3 * W3[n] +
                           4.0 * tr4 * W4[n] + 3.0 * tr5 * W5[n]) +
               4.0 * bg * at_or_zero(w0, n);
  }
}

void require_grain_rules(const ModelPreset& preset, double beta) {
  if (!preset.sides_semantics)
    throw std::invalid_argument(
        "topological flux path requires a side-count (grain) preset");
  for (int l : {2, 3, 4, 5})
    if (preset.rules.find(l) == preset.rules.end())
      throw std::invalid_argument(
          "topological flux path requires boundary rules for triggers 2..5");
  if (beta > 0.0 && preset.rules.find(kInteriorTrigger) == preset.rules.end())
    throw std::invalid_argument(
        "topological flux path with beta > 0 requires an interior rule");
}

}  // namespace

void compute_flux_into(const ModelPreset& preset, const DensityField& field,
                       double beta, FluxPath path,
                       const std::map<int, double>* eps, FluxEval& out) {
  const SpeciesConfig& sc = preset.species;
  out.F = compute_totals(field, &out.F_total);
  out.Ldot = boundary_flux(preset, field);
  out.wf = compute_weights(preset, out.F, out.F_total);
  out.beta = beta;
  out.path_rel_diff = 0.0;

  if (eps) {
    for (const auto& [l, D] : out.wf.denom) {
      const bool demanded = (l == kInteriorTrigger)
                                ? (beta > 0.0 && out.F_total > 0.0)
                                : (out.Ldot[l] > 0.0);
      const auto it = eps->find(l);
      const double threshold = it != eps->end() ? it->second : 0.0;
      if (demanded && D <= threshold) throw BlowUp(field.t, l);
    }
  }

  if (path == FluxPath::Topological || path == FluxPath::Both)
    require_grain_rules(preset, beta);

  if (path == FluxPath::Generic || path == FluxPath::Both) {
    generic_flux(preset, field, out, out.jplus, out.alpha);
  }
  if (path == FluxPath::Topological) {
    topological_flux(preset, field, out, out.jplus, out.alpha);
  } else if (path == FluxPath::Both) {
    std::vector<std::vector<double>> jp2;
    std::vector<double> al2;
    topological_flux(preset, field, out, jp2, al2);
    double jscale = 0.0, jdiff = 0.0, ascale = 0.0, adiff = 0.0;
    for (int s = sc.s_min; s <= sc.M; ++s) {
      ascale = std::max({ascale, std::abs(out.alpha[s]), std::abs(al2[s])});
      adiff = std::max(adiff, std::abs(out.alpha[s] - al2[s]));
      for (std::size_t g = 0; g < field.n_nodes(); ++g) {
        jscale =
            std::max({jscale, std::abs(out.jplus[s][g]), std::abs(jp2[s][g])});
        jdiff = std::max(jdiff, std::abs(out.jplus[s][g] - jp2[s][g]));
      }
    }
    const double ja = jscale > 0.0 ? jdiff / jscale : 0.0;
    const double aa = ascale > 0.0 ? adiff / ascale : 0.0;
    out.path_rel_diff = std::max(ja, aa);
  }
}

FluxEval compute_flux(const ModelPreset& preset, const DensityField& field,
                      double beta, FluxPath path) {
  FluxEval out;
  compute_flux_into(preset, field, beta, path, nullptr, out);
  return out;
}

KineticSolver::KineticSolver(const ModelPreset& preset,
                             const DensityField& init,
                             const SolverConfig& config)
    : preset_(&preset), cfg_(config), field_(init) {
  const SpeciesConfig& sc = preset.species;
  if (!(cfg_.dx > 0.0) || !(cfg_.dt > 0.0) || !(cfg_.t_end > 0.0))
    throw std::invalid_argument("solver: dx, dt, t_end must be positive");
  if (std::abs(field_.dx - cfg_.dx) > 1e-12 * cfg_.dx)
    throw std::invalid_argument("solver: field dx does not match config");
  const double cells = cfg_.x_max / cfg_.dx;
  const long G = std::lround(cells);
  if (std::abs(cells - static_cast<double>(G)) > 1e-9 * cells ||
      field_.n_nodes() != static_cast<std::size_t>(G) + 1)
    throw std::invalid_argument("solver: field does not span [0, x_max]");
  if (field_.f.size() != static_cast<std::size_t>(sc.M) + 1)
    throw std::invalid_argument("solver: field species rows mismatch preset");

  cells_.assign(static_cast<std::size_t>(sc.M) + 1, 0);
  delta_.assign(static_cast<std::size_t>(sc.M) + 1, 0.0);
  fractional_.assign(static_cast<std::size_t>(sc.M) + 1, false);
  for (int s = sc.s_min; s <= sc.M; ++s) {
    const double d = sc.v[s] * cfg_.dt / cfg_.dx;
    const long c = std::lround(d);
    if (std::abs(d - static_cast<double>(c)) <= 1e-9 * std::max(1.0, std::abs(d))) {
      cells_[s] = static_cast<int>(c);
    } else if (cfg_.allow_fractional_shift) {
      fractional_[s] = true;
      delta_[s] = d;
    } else {
      throw std::invalid_argument(
          "solver: species " + std::to_string(s) +
          " shifts a non-integer cell count per step; align dx = |v|*dt/k "
          "or enable fractional shifts");
    }
  }

  if (cfg_.path == FluxPath::Topological || cfg_.path == FluxPath::Both) {
    const ValidationReport rep = check_matrices_against_rules(preset);
    if (!rep.ok())
      throw std::invalid_argument(
          "solver: topological path needs coarsening-rule matrices: " +
          rep.to_string());
  }

  std::vector<double> F0v = compute_totals(field_, &F0_);
  for (const auto& [l, rule] : preset.rules) {
    double D = 0.0;
    for (int n = sc.s_min; n <= sc.M; ++n) D += rule.w[n] * F0v[n];
    eps_[l] = cfg_.eps_scale * D;
  }
  L_.assign(static_cast<std::size_t>(sc.M) + 1, 0.0);
}

double KineticSolver::current_beta() const {
  const EdgeDeletion& ed = preset_->edge_deletion;
  switch (ed.mode) {
    case EdgeDeletionMode::ND:
      return 0.0;
    case EdgeDeletionMode::PD:
      return ed.beta_pd;
    case EdgeDeletionMode::RD: {
      double Ft = 0.0;
      compute_totals(field_, &Ft);
      return F0_ > 0.0 ? ed.alpha * ed.beta_rd * cfg_.rd_n_ref * Ft / F0_ : 0.0;
    }
  }
  return 0.0;
}

void KineticSolver::shift_species(int s) {
  auto& row = field_.f[s];
  const long G = static_cast<long>(row.size()) - 1;
  if (fractional_[s]) {
    const double d = delta_[s];
    if (d == 0.0) return;
    if (d > 0.0) {
      for (long go = static_cast<long>(std::floor(static_cast<double>(G) - d)) + 1;
           go <= G; ++go)
        if (go >= 0 && row[go] != 0.0)
          throw GridOverflow("species " + std::to_string(s) +
                             " support reached x_max; raise x_max");
    }
    buf_ = row;
    for (long g = 0; g <= G; ++g) {
      const double pos = static_cast<double>(g) - d;
      const long i = static_cast<long>(std::floor(pos));
      const double theta = pos - static_cast<double>(i);
      const double lo = (i >= 0 && i <= G) ? buf_[i] : 0.0;
      const double hi = (i + 1 >= 0 && i + 1 <= G) ? buf_[i + 1] : 0.0;
      row[g] = (1.0 - theta) * lo + theta * hi;
    }
    return;
  }
  const int c = cells_[s];
  if (c == 0) return;
  if (c < 0) {
    const long k = -c;
    for (long g = 0; g + k <= G; ++g) row[g] = row[g + k];
    for (long g = std::max<long>(0, G - k + 1); g <= G; ++g) row[g] = 0.0;
  } else {
    for (long go = G - c + 1; go <= G; ++go)
      if (go >= 0 && row[go] != 0.0)
        throw GridOverflow("species " + std::to_string(s) +
                           " support reached x_max; raise x_max");
    for (long g = G; g >= c; --g) row[g] = row[g - c];
    for (long g = 0; g < c && g <= G; ++g) row[g] = 0.0;
  }
}

bool KineticSolver::step() {
  if (t_star_) return false;
  const SpeciesConfig& sc = preset_->species;
  for (int s = sc.s_min; s <= sc.M; ++s) shift_species(s);
  field_.t += cfg_.dt;

  const double beta = current_beta();
  try {
    compute_flux_into(*preset_, field_, beta, cfg_.path, &eps_, flux_);
  } catch (const BlowUp& b) {
    t_star_ = b.t_star;
    t_star_trigger_ = b.trigger;
    return false;
  }
  if (cfg_.path == FluxPath::Both)
    max_path_diff_ = std::max(max_path_diff_, flux_.path_rel_diff);

  const std::size_t nodes = field_.n_nodes();
  const double dt = cfg_.dt;
  buf_.assign(nodes, 0.0);
  for (int s = sc.s_min; s <= sc.M; ++s) {
    const double a = flux_.alpha[s];
    const double decay = std::max(0.0, 1.0 - a * dt);
    auto& row = field_.f[s];
    const auto& jp = flux_.jplus[s];
    for (std::size_t g = 0; g < nodes; ++g) {
      const double j = jp[g] - a * row[g];
      buf_[g] += j;
      const double aj = std::abs(j);
      if (aj > max_j_abs_) max_j_abs_ = aj;
      row[g] = row[g] * decay + dt * jp[g];
    }
  }
  for (std::size_t g = 0; g < nodes; ++g)
    max_ident_abs_ = std::max(max_ident_abs_, std::abs(buf_[g]));

  for (int l = sc.s_min; l <= sc.M; ++l) L_[l] += dt * flux_.Ldot[l];
  ++steps_;
  return true;
}

double KineticSolver::max_flux_identity_rel() const {
  return max_j_abs_ > 0.0 ? max_ident_abs_ / max_j_abs_ : 0.0;
}

SolveResult KineticSolver::solve() {
  SolveResult out;
  out.F0 = F0_;
  out.rd_experimental = preset_->edge_deletion.mode == EdgeDeletionMode::RD;

  auto record = [&] {
    TrajectoryRow row;
    row.t = field_.t;
    row.F = compute_totals(field_, &row.F_total);
    row.area = total_area(field_);
    row.defect = polyhedral_defect(*preset_, row.F);
    row.L = L_;
    double Lsum = 0.0;
    for (double v : L_) Lsum += v;
    row.conservation_error = std::abs(row.F_total + Lsum - F0_);
    if (!out.rows.empty() && out.rows.back().t == row.t) return;
    out.rows.push_back(std::move(row));
  };

  record();
  const long n_steps = std::lround(cfg_.t_end / cfg_.dt);
  const int every = std::max(1, cfg_.record_every);
  for (long k = 0; k < n_steps; ++k) {
    if (!step()) break;
    if ((k + 1) % every == 0) record();
  }
  record();
  out.t_star = t_star_;
  out.t_star_trigger = t_star_trigger_;
  out.max_flux_identity_rel = max_flux_identity_rel();
  out.max_path_rel_diff = max_path_diff_;
  out.final_field = field_;
  return out;
}

}  // namespace grainkin

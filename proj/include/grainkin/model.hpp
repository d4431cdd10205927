#pragma once

#include <map>
#include <string>
#include <vector>

namespace grainkin {

// Trigger key of the interior (edge-deletion) event. Boundary events are
// keyed by the label l of the vanishing species.
inline constexpr int kInteriorTrigger = 0;

enum class EdgeDeletionMode { ND, PD, RD };

// Interior event rate model. ND: no interior events. PD: total rate
// beta_pd * N(t). RD: total rate alpha * beta_rd * N(t)^2, the autonomous
// form of a per-population rate beta(t) = alpha * beta_rd * N(t).
struct EdgeDeletion {
  EdgeDeletionMode mode = EdgeDeletionMode::ND;
  double beta_pd = 0.0;
  double alpha = 0.0;
  double beta_rd = 0.0;
};

enum class WeightMode { Uncorrelated, Correlated };

// Species labels run s_min..M and are used directly as vector indices, so all
// per-species vectors have size M+1 with entries below s_min unused. Groups
// are contiguous in label order: shrinking (v<0), then zero-velocity, then
// growing species.
struct SpeciesConfig {
  int M = 0;
  int s_min = 1;
  int n_minus = 0;
  int n_zero = 0;
  int n_plus = 0;
  std::vector<double> v;  // velocity by label, size M+1

  bool in_range(int s) const { return s >= s_min && s <= M; }
  bool shrinking(int s) const { return s >= s_min && s < s_min + n_minus; }
  // First zero-velocity label; equals 6 for grain presets, where labels are
  // side counts and the polyhedral defect is measured against it.
  int zero_label() const { return s_min + n_minus; }
};

// One mutation rule. When an event with this trigger fires, K targets are
// drawn sequentially; the j-th draw (1-based) mutates a target of species s
// to R[s][j-1], size unchanged. R entries of 0 mark species that may never be
// selected for this trigger; such species must also carry w == 0.
struct MutationRule {
  int trigger = kInteriorTrigger;
  int K = 0;
  std::vector<std::vector<int>> R;  // by species label, each row size K
  std::vector<double> w;            // selection weight by species label
};

// J[s][sigma] = number of columns j with R[s][j] == sigma: how many targets
// of species s an event sends to sigma.
struct TransferCounts {
  int M = 0;
  std::vector<int> counts;  // (M+1) x (M+1), row-major by source label

  int at(int s, int sigma) const { return counts[s * (M + 1) + sigma]; }
  int row_sum(int s) const;
};

// Per-trigger selection weight tables, used to inject correlated weights
// fitted from neighbor-side distributions. Vectors are label-indexed
// (size M+1) like MutationRule::w.
using WeightTable = std::map<int, std::vector<double>>;

struct ModelPreset {
  std::string name;
  SpeciesConfig species;
  std::map<int, MutationRule> rules;  // keyed by trigger, kInteriorTrigger = 0
  WeightMode weight_mode = WeightMode::Uncorrelated;
  EdgeDeletion edge_deletion;
  // True when species labels are grain side counts (defect/area semantics and
  // the topological flux path apply).
  bool sides_semantics = false;

  const MutationRule* rule_for(int trigger) const {
    auto it = rules.find(trigger);
    return it == rules.end() ? nullptr : &it->second;
  }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

// Grain-coarsening preset: species 2..M with velocities (pi/3)(s-6),
// boundary rules for l = 2..5, an interior rule with K = 4, and side-count
// proportional selection weights (zeroed where a mutation would create a
// 1-sided or (M+1)-sided grain). Correlated mode replaces the weight vectors
// with the injected table, re-zeroing the closure-forbidden labels.
// Requires M >= 7.
ModelPreset build_grain_preset(int M, WeightMode mode, EdgeDeletion ed,
                               const WeightTable* correlated = nullptr);

// Two-species transport preset: v = (-1, 0), one boundary rule with K = 1
// mutating species 2 to species 1, weights (0, 1), no interior events. Its
// kinetic limit has a closed-form solution used by the cross-validation
// tests.
ModelPreset build_two_species_counter();

TransferCounts derive_transfer_counts(const MutationRule& rule, int M);

// Structural checks: velocity signs per group, J diagonal zero, J row sums
// equal to K exactly on positively weighted species, zero-weight/zero-row
// consistency, closure of R entries, edge-deletion parameters, presence of
// rules for every shrinking species. Empty report <=> valid.
ValidationReport validate_preset(const ModelPreset& preset);

// Field-by-field structural equality (velocities compared exactly).
bool presets_equal(const ModelPreset& a, const ModelPreset& b);

// JSON document: {"M":15,"weight_mode":"uncorrelated",
//   "edge_deletion":{"mode":"PD","beta":75072.74},
//   "correlated_weights": optional {"trigger": {"label": weight, ...}, ...}}.
// "beta" holds beta_pd in PD mode and beta_rd in RD mode (RD also carries
// "alpha"). The two-species preset serializes as {"builtin":
// "two-species-counter"}.
std::string preset_to_json(const ModelPreset& preset);
ModelPreset preset_from_json(const std::string& text);

// Accepts a builtin name (grain15-nd, grain15-pd, grain15-rd,
// two-species-counter) or a path to a JSON preset file.
ModelPreset load_preset(const std::string& path_or_builtin);

}  // namespace grainkin

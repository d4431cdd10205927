#include "grainkin/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace grainkin {

namespace {

constexpr double kPiThird = std::numbers::pi / 3.0;

std::vector<std::vector<int>> zero_rows(int M, int K) {
  return std::vector<std::vector<int>>(M + 1, std::vector<int>(K, 0));
}

// Labels an event of this trigger may never select in a grain preset:
// mutating them would create a 1-sided or (M+1)-sided grain.
bool grain_forbidden(int trigger, int k, int M) {
  switch (trigger) {
    case 2: return k <= 3;               // k-2 would be < 2
    case 3: return k <= 2;               // k-1 would be < 2
    case 4: return k <= 2;
    case 5: return k <= 2 || k >= M;     // k+1 would exceed M
    case kInteriorTrigger: return k <= 2 || k >= M;
    default: return true;
  }
}

}  // namespace

int TransferCounts::row_sum(int s) const {
  int total = 0;
  for (int sigma = 0; sigma <= M; ++sigma) total += at(s, sigma);
  return total;
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const auto& v : violations) out << v << '\n';
  return out.str();
}

ModelPreset build_grain_preset(int M, WeightMode mode, EdgeDeletion ed,
                               const WeightTable* correlated) {
  if (M < 7) throw std::invalid_argument("grain preset requires M >= 7");
  if (mode == WeightMode::Correlated && correlated == nullptr)
    throw std::invalid_argument("correlated weight mode requires a weight table");

  ModelPreset p;
  p.name = "grain";
  p.sides_semantics = true;
  p.species.M = M;
  p.species.s_min = 2;
  p.species.n_minus = 4;  // 2..5
  p.species.n_zero = 1;   // 6
  p.species.n_plus = M - 6;
  p.species.v.assign(M + 1, 0.0);
  for (int s = 2; s <= M; ++s) p.species.v[s] = kPiThird * (s - 6);

  auto make_rule = [&](int trigger, int K) {
    MutationRule r;
    r.trigger = trigger;
    r.K = K;
    r.R = zero_rows(M, K);
    r.w.assign(M + 1, 0.0);
    return r;
  };

  MutationRule r2 = make_rule(2, 2);
  for (int k = 4; k <= M; ++k) r2.R[k] = {k - 2, k - 2};

  MutationRule r3 = make_rule(3, 3);
  for (int k = 3; k <= M; ++k) r3.R[k] = {k - 1, k - 1, k - 1};

  MutationRule r4 = make_rule(4, 2);
  for (int k = 3; k <= M; ++k) r4.R[k] = {k - 1, k - 1};

  MutationRule r5 = make_rule(5, 3);
  for (int k = 3; k <= M - 1; ++k) r5.R[k] = {k - 1, k - 1, k + 1};

  MutationRule ri = make_rule(kInteriorTrigger, 4);
  for (int k = 3; k <= M - 1; ++k) ri.R[k] = {k - 1, k - 1, k + 1, k + 1};

  for (MutationRule* r : {&r2, &r3, &r4, &r5, &ri}) {
    if (mode == WeightMode::Uncorrelated) {
      for (int k = 2; k <= M; ++k)
        if (!grain_forbidden(r->trigger, k, M)) r->w[k] = static_cast<double>(k);
    } else {
      auto it = correlated->find(r->trigger);
      if (it == correlated->end())
        throw std::invalid_argument("correlated table missing trigger " +
                                    std::to_string(r->trigger));
      if (static_cast<int>(it->second.size()) != M + 1)
        throw std::invalid_argument("correlated weight vector must have size M+1");
      r->w = it->second;
      for (int k = 0; k <= M; ++k)
        if (k < 2 || grain_forbidden(r->trigger, k, M)) r->w[k] = 0.0;
      // Zero-weight labels are never selected; their rows are dead.
      for (int k = 0; k <= M; ++k)
        if (r->w[k] == 0.0) r->R[k].assign(r->K, 0);
    }
  }

  p.rules[2] = std::move(r2);
  p.rules[3] = std::move(r3);
  p.rules[4] = std::move(r4);
  p.rules[5] = std::move(r5);
  p.rules[kInteriorTrigger] = std::move(ri);
  p.weight_mode = mode;
  p.edge_deletion = ed;
  return p;
}

ModelPreset build_two_species_counter() {
  ModelPreset p;
  p.name = "two-species-counter";
  p.sides_semantics = false;
  p.species.M = 2;
  p.species.s_min = 1;
  p.species.n_minus = 1;
  p.species.n_zero = 1;
  p.species.n_plus = 0;
  p.species.v = {0.0, -1.0, 0.0};

  MutationRule r;
  r.trigger = 1;
  r.K = 1;
  r.R = zero_rows(2, 1);
  r.R[2] = {1};
  r.w = {0.0, 0.0, 1.0};
  p.rules[1] = std::move(r);
  return p;
}

TransferCounts derive_transfer_counts(const MutationRule& rule, int M) {
  TransferCounts tc;
  tc.M = M;
  tc.counts.assign((M + 1) * (M + 1), 0);
  for (int s = 0; s <= M && s < static_cast<int>(rule.R.size()); ++s)
    for (int target : rule.R[s])
      if (target > 0) ++tc.counts[s * (M + 1) + target];
  return tc;
}

ValidationReport validate_preset(const ModelPreset& preset) {
  ValidationReport rep;
  auto fail = [&](std::string msg) { rep.violations.push_back(std::move(msg)); };

  const SpeciesConfig& sp = preset.species;
  const int M = sp.M;
  if (M < sp.s_min) {
    fail("species range empty");
    return rep;
  }
  if (sp.n_minus + sp.n_zero + sp.n_plus != M - sp.s_min + 1)
    fail("species group sizes do not cover the label range");
  if (static_cast<int>(sp.v.size()) != M + 1)
    fail("velocity vector must have size M+1");
  else {
    for (int s = sp.s_min; s <= M; ++s) {
      bool minus = s < sp.s_min + sp.n_minus;
      bool zero = !minus && s < sp.s_min + sp.n_minus + sp.n_zero;
      if (minus && !(sp.v[s] < 0))
        fail("shrinking species " + std::to_string(s) + " must have v < 0");
      if (zero && sp.v[s] != 0.0)
        fail("zero-group species " + std::to_string(s) + " must have v = 0");
      if (!minus && !zero && !(sp.v[s] > 0))
        fail("growing species " + std::to_string(s) + " must have v > 0");
    }
  }

  for (int l = sp.s_min; l < sp.s_min + sp.n_minus; ++l)
    if (!preset.rule_for(l))
      fail("missing mutation rule for shrinking species " + std::to_string(l));
  if (preset.edge_deletion.mode != EdgeDeletionMode::ND &&
      !preset.rule_for(kInteriorTrigger))
    fail("edge deletion enabled but no interior rule present");

  for (const auto& [trigger, rule] : preset.rules) {
    std::string tag = "rule " + std::to_string(trigger) + ": ";
    if (rule.trigger != trigger) fail(tag + "trigger key mismatch");
    if (trigger != kInteriorTrigger && !sp.shrinking(trigger))
      fail(tag + "boundary trigger is not a shrinking species");
    if (rule.K < 1) {
      fail(tag + "K must be positive");
      continue;
    }
    if (static_cast<int>(rule.R.size()) != M + 1 ||
        static_cast<int>(rule.w.size()) != M + 1) {
      fail(tag + "R and w must be label-indexed with size M+1");
      continue;
    }
    bool any_weight = false;
    for (int s = 0; s <= M; ++s) {
      if (static_cast<int>(rule.R[s].size()) != rule.K) {
        fail(tag + "row " + std::to_string(s) + " does not have K entries");
        continue;
      }
      if (rule.w[s] < 0) fail(tag + "negative weight at " + std::to_string(s));
      if (rule.w[s] > 0 && !sp.in_range(s))
        fail(tag + "weight on out-of-range label " + std::to_string(s));
      any_weight = any_weight || rule.w[s] > 0;
      for (int target : rule.R[s]) {
        if (target != 0 && !sp.in_range(target))
          fail(tag + "target " + std::to_string(target) + " out of range in row " +
               std::to_string(s));
        if (target != 0 && target == s)
          fail(tag + "trivial mutation at (" + std::to_string(s) + "," +
               std::to_string(s) + ")");
        if (rule.w[s] > 0 && target == 0)
          fail(tag + "selectable species " + std::to_string(s) +
               " has a forbidden (0) target; closure violated");
      }
    }
    if (!any_weight) fail(tag + "all selection weights are zero");

    TransferCounts J = derive_transfer_counts(rule, M);
    for (int s = 0; s <= M; ++s) {
      if (J.at(s, s) != 0)
        fail(tag + "J diagonal nonzero at " + std::to_string(s));
      int rs = J.row_sum(s);
      if (rule.w[s] > 0 && rs != rule.K)
        fail(tag + "J row sum " + std::to_string(rs) + " != K at weighted species " +
             std::to_string(s));
      if (rule.w[s] == 0 && rs != 0)
        fail(tag + "zero-weight species " + std::to_string(s) +
             " has nonzero mutation row");
    }
  }

  const EdgeDeletion& ed = preset.edge_deletion;
  if (ed.mode == EdgeDeletionMode::PD && !(ed.beta_pd > 0))
    fail("PD mode requires beta_pd > 0");
  if (ed.mode == EdgeDeletionMode::RD && (!(ed.alpha > 0) || !(ed.beta_rd > 0)))
    fail("RD mode requires alpha > 0 and beta_rd > 0");
  return rep;
}

bool presets_equal(const ModelPreset& a, const ModelPreset& b) {
  if (a.species.M != b.species.M || a.species.s_min != b.species.s_min ||
      a.species.n_minus != b.species.n_minus || a.species.n_zero != b.species.n_zero ||
      a.species.n_plus != b.species.n_plus || a.species.v != b.species.v)
    return false;
  if (a.weight_mode != b.weight_mode || a.sides_semantics != b.sides_semantics)
    return false;
  const EdgeDeletion &ea = a.edge_deletion, &eb = b.edge_deletion;
  if (ea.mode != eb.mode || ea.beta_pd != eb.beta_pd || ea.alpha != eb.alpha ||
      ea.beta_rd != eb.beta_rd)
    return false;
  if (a.rules.size() != b.rules.size()) return false;
  for (const auto& [trigger, ra] : a.rules) {
    const MutationRule* rb = b.rule_for(trigger);
    if (!rb || ra.K != rb->K || ra.R != rb->R || ra.w != rb->w) return false;
  }
  return true;
}

namespace {

using nlohmann::json;

json edge_deletion_to_json(const EdgeDeletion& ed) {
  json j;
  switch (ed.mode) {
    case EdgeDeletionMode::ND: j["mode"] = "ND"; break;
    case EdgeDeletionMode::PD:
      j["mode"] = "PD";
      j["beta"] = ed.beta_pd;
      break;
    case EdgeDeletionMode::RD:
      j["mode"] = "RD";
      j["alpha"] = ed.alpha;
      j["beta"] = ed.beta_rd;
      break;
  }
  return j;
}

EdgeDeletion edge_deletion_from_json(const json& j) {
  EdgeDeletion ed;
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "ND") {
    ed.mode = EdgeDeletionMode::ND;
  } else if (mode == "PD") {
    ed.mode = EdgeDeletionMode::PD;
    ed.beta_pd = j.at("beta").get<double>();
  } else if (mode == "RD") {
    ed.mode = EdgeDeletionMode::RD;
    ed.alpha = j.at("alpha").get<double>();
    ed.beta_rd = j.at("beta").get<double>();
  } else {
    throw std::invalid_argument("unknown edge_deletion mode: " + mode);
  }
  return ed;
}

}  // namespace

std::string preset_to_json(const ModelPreset& preset) {
  json j;
  if (preset.name == "two-species-counter") {
    j["builtin"] = "two-species-counter";
    return j.dump(2);
  }
  if (!preset.sides_semantics)
    throw std::invalid_argument("only grain presets and builtins serialize to JSON");
  j["M"] = preset.species.M;
  j["weight_mode"] =
      preset.weight_mode == WeightMode::Uncorrelated ? "uncorrelated" : "correlated";
  j["edge_deletion"] = edge_deletion_to_json(preset.edge_deletion);
  if (preset.weight_mode == WeightMode::Correlated) {
    json table = json::object();
    for (const auto& [trigger, rule] : preset.rules) {
      json row = json::object();
      for (int k = 0; k <= preset.species.M; ++k)
        if (rule.w[k] != 0.0) row[std::to_string(k)] = rule.w[k];
      table[std::to_string(trigger)] = row;
    }
    j["correlated_weights"] = table;
  }
  return j.dump(2);
}

ModelPreset preset_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.contains("builtin")) {
    std::string name = j["builtin"].get<std::string>();
    if (name == "two-species-counter") return build_two_species_counter();
    throw std::invalid_argument("unknown builtin preset: " + name);
  }
  int M = j.at("M").get<int>();
  std::string wm = j.value("weight_mode", std::string("uncorrelated"));
  EdgeDeletion ed;
  if (j.contains("edge_deletion")) ed = edge_deletion_from_json(j["edge_deletion"]);
  if (wm == "uncorrelated")
    return build_grain_preset(M, WeightMode::Uncorrelated, ed);
  if (wm != "correlated")
    throw std::invalid_argument("unknown weight_mode: " + wm);
  if (!j.contains("correlated_weights"))
    throw std::invalid_argument("correlated weight_mode requires correlated_weights");
  WeightTable table;
  for (const auto& [trig_key, row] : j["correlated_weights"].items()) {
    std::vector<double> w(M + 1, 0.0);
    for (const auto& [label, value] : row.items()) {
      int k = std::stoi(label);
      if (k < 0 || k > M)
        throw std::invalid_argument("correlated weight label out of range: " + label);
      w[k] = value.get<double>();
    }
    table[std::stoi(trig_key)] = std::move(w);
  }
  return build_grain_preset(M, WeightMode::Correlated, ed, &table);
}

ModelPreset load_preset(const std::string& path_or_builtin) {
  if (path_or_builtin == "grain15-nd")
    return build_grain_preset(15, WeightMode::Uncorrelated, EdgeDeletion{});
  if (path_or_builtin == "grain15-pd") {
    EdgeDeletion ed;
    ed.mode = EdgeDeletionMode::PD;
    ed.beta_pd = 75072.74;
    return build_grain_preset(15, WeightMode::Uncorrelated, ed);
  }
  if (path_or_builtin == "grain15-rd") {
    EdgeDeletion ed;
    ed.mode = EdgeDeletionMode::RD;
    ed.alpha = 1.27;
    ed.beta_rd = 2.02;
    return build_grain_preset(15, WeightMode::Uncorrelated, ed);
  }
  if (path_or_builtin == "two-species-counter") return build_two_species_counter();

  std::ifstream in(path_or_builtin);
  if (!in)
    throw std::invalid_argument("cannot open preset file: " + path_or_builtin);
  std::ostringstream buf;
  buf << in.rdbuf();
  return preset_from_json(buf.str());
}

}  // namespace grainkin

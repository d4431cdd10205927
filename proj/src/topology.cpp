#include "grainkin/topology.hpp"

#include <algorithm>
#include <stdexcept>

namespace grainkin {

int RootedTree::internal_vertices() const {
  return static_cast<int>(std::count(encoding.begin(), encoding.end(), '('));
}

std::uint64_t count_trees(int k) {
  if (k < 2) throw std::domain_error("count_trees requires k >= 2");
  if (k > 35) throw std::domain_error("count_trees overflows 64 bits beyond k = 35");
  // c[m] = C_{m+2}; convolution form of the recursion.
  std::vector<std::uint64_t> c(static_cast<std::size_t>(k - 1), 0);
  c[0] = 1;
  for (int m = 1; m <= k - 2; ++m) {
    unsigned __int128 total = 0;
    for (int i = 0; i < m; ++i)
      total += static_cast<unsigned __int128>(c[i]) * c[m - 1 - i];
    c[m] = static_cast<std::uint64_t>(total);
  }
  return c[k - 2];
}

namespace {

// All nested-parenthesis encodings of ordered binary trees with n leaves,
// in deterministic (left-subtree-size ascending) order.
std::vector<std::string> binary_encodings(int n) {
  if (n == 1) return {"."};
  std::vector<std::string> out;
  for (int i = 1; i < n; ++i) {
    auto lefts = binary_encodings(i);
    auto rights = binary_encodings(n - i);
    for (const auto& l : lefts)
      for (const auto& r : rights) out.push_back("(" + l + r + ")");
  }
  return out;
}

}  // namespace

std::vector<RootedTree> enumerate_trees(int k) {
  if (k < 2 || k > 12) throw std::domain_error("enumerate_trees requires 2 <= k <= 12");
  std::vector<RootedTree> out;
  for (auto& enc : binary_encodings(k - 1)) out.push_back({k, std::move(enc)});
  return out;
}

CoarseningRule coarsening_rule(int trigger) {
  switch (trigger) {
    case 2: return {2, {-2, -2}};
    case 3: return {3, {-1, -1, -1}};
    case 4: return {4, {-1, -1, 0, 0}};
    case 5: return {5, {-1, -1, +1, 0, 0}};
    case kInteriorTrigger: return {kInteriorTrigger, {-1, -1, +1, +1}};
    default:
      throw std::domain_error("no coarsening rule for trigger " +
                              std::to_string(trigger));
  }
}

ValidationReport check_matrices_against_rules(const ModelPreset& preset) {
  ValidationReport rep;
  auto fail = [&](std::string msg) { rep.violations.push_back(std::move(msg)); };
  const int M = preset.species.M;

  for (const auto& [trigger, rule] : preset.rules) {
    std::string tag = "trigger " + std::to_string(trigger) + ": ";
    CoarseningRule cr;
    try {
      cr = coarsening_rule(trigger);
    } catch (const std::domain_error&) {
      fail(tag + "no coarsening rule defined");
      continue;
    }

    std::vector<int> expected;
    for (int d : cr.side_deltas)
      if (d != 0) expected.push_back(d);
    std::sort(expected.begin(), expected.end());

    if (rule.K != static_cast<int>(expected.size())) {
      fail(tag + "K = " + std::to_string(rule.K) + ", coarsening rule mutates " +
           std::to_string(expected.size()) + " neighbors");
      continue;
    }

    std::vector<int> column_deltas;
    bool columns_ok = true;
    for (int j = 0; j < rule.K; ++j) {
      bool have = false;
      int delta = 0;
      for (int s = 0; s <= M && s < static_cast<int>(rule.R.size()); ++s) {
        int target = rule.R[s][j];
        if (target == 0) continue;
        int d = target - s;
        if (!have) {
          delta = d;
          have = true;
        } else if (d != delta) {
          fail(tag + "column " + std::to_string(j + 1) +
               " implies inconsistent side deltas (" + std::to_string(delta) +
               " vs " + std::to_string(d) + ")");
          columns_ok = false;
          break;
        }
      }
      if (!have) {
        fail(tag + "column " + std::to_string(j + 1) + " selects no species");
        columns_ok = false;
      }
      if (!columns_ok) break;
      column_deltas.push_back(delta);
    }
    if (!columns_ok) continue;

    std::sort(column_deltas.begin(), column_deltas.end());
    if (column_deltas != expected) {
      std::string got, want;
      for (int d : column_deltas) got += std::to_string(d) + " ";
      for (int d : expected) want += std::to_string(d) + " ";
      fail(tag + "column deltas { " + got + "} do not match coarsening rule { " +
           want + "}");
    }
  }
  return rep;
}

double average_sides(double chi, double E) {
  if (!(E > 0)) throw std::domain_error("average_sides requires E > 0");
  double faces_times_3 = E + 3.0 * chi;  // 3F
  if (!(faces_times_3 > 0))
    throw std::domain_error("no trivalent map: E + 3*chi must be positive");
  return 6.0 * E / faces_times_3;
}

}  // namespace grainkin

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grainkin/model.hpp"

namespace grainkin {

// Planar rooted trivalent tree with k cyclically labeled boundary leaves,
// rooted at leaf 1. Walking in from the root leaf, every internal vertex has
// two ordered children, so the tree is stored as the nested-parenthesis
// encoding of that binary tree: "." is one of the remaining k-1 leaves
// (labels 2..k read left to right), "(LR)" an internal vertex. Rotating the
// boundary labels yields a different encoding, matching the labeled count.
struct RootedTree {
  int k = 0;
  std::string encoding;

  int leaves() const { return k; }
  // Internal (degree-3) vertices; equals k-2.
  int internal_vertices() const;
};

// Number of attachment trees with k boundary leaves: the recursion
// C_k = sum_{i+j=k-1, i,j>=1} C_{i+1} C_{j+1}, C_2 = 1, i.e. Catalan(k-2).
// Requires 2 <= k <= 35 (64-bit range).
std::uint64_t count_trees(int k);

// All distinct canonical encodings, deterministic order; length equals
// count_trees(k). Requires 2 <= k <= 12 (practical cap).
std::vector<RootedTree> enumerate_trees(int k);

// Net side-count changes applied to the affected neighbors when a k-gon
// (trigger in 2..5) or an edge (kInteriorTrigger) vanishes. Zero entries are
// neighbors that keep their side count and are never selected as mutation
// targets.
struct CoarseningRule {
  int trigger = 0;
  std::vector<int> side_deltas;
};
CoarseningRule coarsening_rule(int trigger);

// Checks that every mutation rule of the preset realizes its coarsening
// rule: within each column j of R the implied delta R[s][j] - s is the same
// for all selectable s, and the multiset of column deltas equals the nonzero
// entries of coarsening_rule(trigger).
ValidationReport check_matrices_against_rules(const ModelPreset& preset);

// Average number of sides of a face of a trivalent map with Euler
// characteristic chi and E edges. With 3V = 2E and V - E + F = chi the face
// count is F = chi + E/3, giving 2E/F = 6E/(E + 3 chi). Satisfies
// average_sides * F = 2E; equals 6 exactly when chi = 0. Requires E > 0 and
// E + 3 chi > 0 (the map has at least one face).
double average_sides(double chi, double E);

}  // namespace grainkin

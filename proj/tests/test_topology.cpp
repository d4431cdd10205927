#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "grainkin/topology.hpp"

using namespace grainkin;

TEST_CASE("attachment tree counts follow the Catalan recursion") {
  CHECK(count_trees(2) == 1);
  CHECK(count_trees(3) == 1);
  CHECK(count_trees(4) == 2);
  CHECK(count_trees(5) == 5);
  CHECK(count_trees(6) == 14);
  CHECK(count_trees(7) == 42);
  CHECK(count_trees(12) == 16796);
  // Largest supported argument stays in 64-bit range.
  CHECK(count_trees(35) == 212336130412243110ULL);
  CHECK_THROWS(count_trees(1));
  CHECK_THROWS(count_trees(36));
}

TEST_CASE("enumeration is exhaustive, canonical, and duplicate free") {
  for (int k = 2; k <= 10; ++k) {
    const std::vector<RootedTree> trees = enumerate_trees(k);
    CHECK(trees.size() == count_trees(k));
    std::set<std::string> seen;
    for (const RootedTree& t : trees) {
      CHECK(t.k == k);
      CHECK(t.leaves() == k);
      CHECK(t.internal_vertices() == k - 2);
      // k-1 leaf marks and k-3 internal vertices beyond the first: the
      // encoding spends one "(LR)" pair per internal vertex.
      CHECK(std::count(t.encoding.begin(), t.encoding.end(), '.') == k - 1);
      CHECK(std::count(t.encoding.begin(), t.encoding.end(), '(') == k - 2);
      seen.insert(t.encoding);
    }
    CHECK(seen.size() == trees.size());
  }
  CHECK(enumerate_trees(2).front().encoding == ".");
  CHECK(enumerate_trees(3).front().encoding == "(..)");
  CHECK_THROWS(enumerate_trees(13));
}

TEST_CASE("coarsening rules list the neighbor side deltas") {
  CHECK(coarsening_rule(2).side_deltas == std::vector<int>{-2, -2});
  CHECK(coarsening_rule(3).side_deltas == std::vector<int>{-1, -1, -1});
  CHECK(coarsening_rule(4).side_deltas == std::vector<int>{-1, -1, 0, 0});
  CHECK(coarsening_rule(5).side_deltas == std::vector<int>{-1, -1, 1, 0, 0});
  CHECK(coarsening_rule(kInteriorTrigger).side_deltas ==
        std::vector<int>{-1, -1, 1, 1});
  CHECK_THROWS(coarsening_rule(6));

  // Defect conservation: removing an l-gon removes defect l - 6, so the
  // neighbor deltas must sum to l - 6; an edge deletion must sum to zero.
  for (int trig : {2, 3, 4, 5}) {
    int sum = 0;
    for (int d : coarsening_rule(trig).side_deltas) sum += d;
    CHECK(sum == trig - 6);
  }
  int sum = 0;
  for (int d : coarsening_rule(kInteriorTrigger).side_deltas) sum += d;
  CHECK(sum == 0);
}

TEST_CASE("mutation matrices realize the coarsening rules") {
  for (const char* name : {"grain15-nd", "grain15-pd", "grain15-rd"}) {
    const ValidationReport rep =
        check_matrices_against_rules(load_preset(name));
    INFO(name, ": ", rep.to_string());
    CHECK(rep.ok());
  }

  SUBCASE("a column with inconsistent deltas is flagged") {
    ModelPreset p = load_preset("grain15-nd");
    p.rules[3].R[9] = {8, 9, 8};  // column 2 now implies delta 0, not -1
    CHECK_FALSE(check_matrices_against_rules(p).ok());
  }
  SUBCASE("a wrong delta multiset is flagged") {
    ModelPreset p = load_preset("grain15-nd");
    MutationRule& r = p.rules[5];
    for (int k = 3; k <= 14; ++k) r.R[k] = {k - 1, k - 1, k - 1};
    CHECK_FALSE(check_matrices_against_rules(p).ok());
  }
}

TEST_CASE("average sides of a trivalent map") {
  // Flat maps average exactly six sides regardless of size.
  CHECK(average_sides(0.0, 7.0) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(average_sides(0.0, 1e6) == doctest::Approx(6.0).epsilon(1e-15));
  // The cube: chi = 2, E = 12, F = 6 squares.
  CHECK(average_sides(2.0, 12.0) == doctest::Approx(4.0).epsilon(1e-15));
  // Identity average * F = 2E with F = chi + E/3.
  for (double chi : {-2.0, 0.0, 2.0}) {
    const double E = 30.0;
    const double F = chi + E / 3.0;
    CHECK(average_sides(chi, E) * F == doctest::Approx(2.0 * E).epsilon(1e-12));
  }
  CHECK_THROWS(average_sides(2.0, 0.0));
  CHECK_THROWS(average_sides(-2.0, 3.0));  // E + 3 chi <= 0: no faces
}

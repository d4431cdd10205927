#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "grainkin/graintrack.hpp"
#include "grainkin/model.hpp"
#include "grainkin/pdmp.hpp"
#include "grainkin/rng.hpp"

using namespace grainkin;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<ParticleInit> random_grains(long n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ParticleInit> init;
  for (long i = 0; i < n; ++i)
    init.push_back({2 + static_cast<int>(rng.uniform_index(9)),
                    0.5 + rng.uniform()});
  return init;
}
}  // namespace

TEST_CASE("boundary hit times are exact") {
  // A 2-sided grain of size 1 shrinks at 4*pi/3 and exits at 3/(4*pi).
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 1.0;
  cfg.seed = 1;
  cfg.enforce_zero_defect = false;
  const RunResult r = run(p, {{2, 1.0}, {8, 5.0}, {9, 5.0}}, cfg);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].boundary);
  CHECK(r.events[0].trigger == 2);
  CHECK(r.events[0].time ==
        doctest::Approx(3.0 / (4.0 * kPi)).epsilon(1e-12));
  CHECK(r.events[0].muts.size() == 2);
  // Both targets drop two sides: 8 -> 6 and 9 -> 7.
  const auto& counts = r.snapshots.back().counts;
  CHECK(counts[6] == 1);
  CHECK(counts[7] == 1);
  CHECK(r.snapshots.back().alive == 2);
}

TEST_CASE("a vanishing 3-gon decrements three neighbors") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 1.0;
  cfg.seed = 7;
  cfg.enforce_zero_defect = false;
  const RunResult r = run(p, {{3, 0.5}, {7, 2.0}, {8, 2.0}, {9, 2.0}}, cfg);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].time == doctest::Approx(0.5 / kPi).epsilon(1e-12));
  const auto& counts = r.snapshots.back().counts;
  CHECK(counts[6] == 1);
  CHECK(counts[7] == 1);
  CHECK(counts[8] == 1);
  for (const Mutation& m : r.events[0].muts) CHECK(m.to == m.from - 1);
}

TEST_CASE("a vanishing 5-gon takes one side from two neighbors, gives one") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 2.0;
  cfg.seed = 3;
  cfg.enforce_zero_defect = false;
  const RunResult r =
      run(p, {{5, 0.5}, {7, 2.0}, {7, 2.0}, {7, 2.0}}, cfg);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].time == doctest::Approx(1.5 / kPi).epsilon(1e-12));
  const auto& counts = r.snapshots.back().counts;
  CHECK(counts[6] == 2);
  CHECK(counts[8] == 1);
}

TEST_CASE("an interior event mutates four targets, two down and two up") {
  ModelPreset p = load_preset("grain15-pd");
  ParticleSystem sys(p, {{7, 5.0}, {7, 5.0}, {7, 5.0}, {7, 5.0}}, false);
  Rng rng(42);
  const SimEvent ev = sys.apply_interior_event(rng);
  CHECK_FALSE(ev.boundary);
  CHECK(ev.trigger == kInteriorTrigger);
  CHECK(ev.vanished == -1);
  CHECK(ev.muts.size() == 4);
  CHECK(sys.alive() == 4);
  CHECK(sys.counts()[6] == 2);
  CHECK(sys.counts()[8] == 2);
  CHECK(sys.defect() == 4);  // unchanged by the event
}

TEST_CASE("interior rate follows the edge-deletion mode") {
  const std::vector<ParticleInit> init = {{7, 1.0}, {8, 1.0}, {9, 1.0}};
  {
    ParticleSystem sys(load_preset("grain15-nd"), init, false);
    CHECK(sys.interior_rate() == 0.0);
  }
  {
    ModelPreset p = load_preset("grain15-pd");
    p.edge_deletion.beta_pd = 4.0;
    ParticleSystem sys(p, init, false);
    CHECK(sys.interior_rate() == doctest::Approx(12.0).epsilon(1e-15));
  }
  {
    ModelPreset p = load_preset("grain15-rd");
    p.edge_deletion.alpha = 0.5;
    p.edge_deletion.beta_rd = 2.0;
    ParticleSystem sys(p, init, false);
    CHECK(sys.interior_rate() == doctest::Approx(9.0).epsilon(1e-15));
  }
}

TEST_CASE("selection exhaustion ends the run at the event time") {
  // K = 3 targets demanded with only two eligible grains present.
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 2.0;
  cfg.seed = 5;
  cfg.enforce_zero_defect = false;
  const RunResult r = run(p, {{5, 0.5}, {7, 2.0}, {7, 2.0}}, cfg);
  REQUIRE(r.exhausted_at.has_value());
  CHECK(*r.exhausted_at == doctest::Approx(1.5 / kPi).epsilon(1e-12));
  // The failed event left the population unchanged.
  CHECK(r.snapshots.back().alive == 3);
}

TEST_CASE("select_targets honors weights, exclusion, and restores state") {
  const ModelPreset p = load_preset("two-species-counter");
  ParticleSystem sys(p, {{1, 0.5}, {2, 1.0}, {2, 2.0}}, false);
  const MutationRule& rule = *p.rule_for(1);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<int> t = sys.select_targets(rule, 1, rng);
    REQUIRE(t.size() == 1);
    CHECK(t[0] == 2);  // id 1 excluded, species 1 carries zero weight
  }
  CHECK(sys.alive() == 3);
}

TEST_CASE("selection frequencies match weighted proportions") {
  // First-draw species tally against w_s * N_s over 13 eligible labels;
  // chi-squared with 12 degrees of freedom, 1% critical value 26.25.
  const ModelPreset p = load_preset("grain15-nd");
  std::vector<ParticleInit> init;
  for (int s = 3; s <= 15; ++s)
    for (int i = 0; i < 10 + s; ++i) init.push_back({s, 5.0});
  ParticleSystem sys(p, init, false);
  const MutationRule& rule = *p.rule_for(3);
  Rng rng(11);
  const int n = 20000;
  std::vector<int> obs(16, 0);
  for (int i = 0; i < n; ++i)
    ++obs[sys.species_of(sys.select_targets(rule, -1, rng)[0])];
  double total = 0.0;
  for (int s = 3; s <= 15; ++s) total += rule.w[s] * (10.0 + s);
  double chi2 = 0.0;
  for (int s = 3; s <= 15; ++s) {
    const double e = n * rule.w[s] * (10.0 + s) / total;
    chi2 += (obs[s] - e) * (obs[s] - e) / e;
  }
  CHECK(chi2 < 26.25);
}

TEST_CASE("zero-defect adjuster") {
  const ModelPreset p = load_preset("grain15-nd");
  {
    ParticleSystem sys(p, {{7, 1.0}, {7, 1.0}}, true);
    CHECK(sys.defect() == 0);
    CHECK(sys.adjustments_made() == 2);
    CHECK(sys.counts()[6] == 2);
  }
  {
    ParticleSystem sys(p, {{5, 1.0}, {7, 1.0}}, true);
    CHECK(sys.defect() == 0);
    CHECK(sys.adjustments_made() == 0);
    CHECK(sys.counts()[5] == 1);
    CHECK(sys.counts()[7] == 1);
  }
}

TEST_CASE("advance guards against crossing the origin") {
  const ModelPreset p = load_preset("grain15-nd");
  ParticleSystem sys(p, {{2, 0.1}, {8, 1.0}, {9, 1.0}}, false);
  CHECK_THROWS_AS(sys.advance(1.0), std::logic_error);
}

TEST_CASE("snapshot cadence and final time") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 1.0;
  cfg.snapshot_dt = 0.25;
  cfg.seed = 1;
  cfg.enforce_zero_defect = false;
  const RunResult r = run(p, {{6, 1.0}, {8, 1.0}, {9, 1.0}}, cfg);
  REQUIRE(r.snapshots.size() == 5);
  for (std::size_t k = 0; k < 5; ++k)
    CHECK(r.snapshots[k].time == doctest::Approx(0.25 * k).epsilon(1e-12));
  CHECK(r.t_final == 1.0);
  CHECK(r.n_boundary_events == 0);
}

TEST_CASE("histogram recording") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 0.01;
  cfg.record_histograms = true;
  cfg.seed = 1;
  const RunResult r = run(p, random_grains(2000, 77), cfg);
  const SpeciesSnapshot& s = r.snapshots.front();
  REQUIRE(s.hist.size() == 16);
  CHECK(s.hist_x_max >= 0.5);
  for (int sp = 2; sp <= 15; ++sp) {
    std::int64_t total = 0;
    for (std::int64_t c : s.hist[sp]) total += c;
    CHECK(total == s.counts[sp]);
    if (s.counts[sp] > 0) CHECK(s.hist[sp].size() == 100);
  }
}

TEST_CASE("stop_alive halts exactly at the threshold") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 1e9;
  cfg.stop_alive = 900;
  cfg.log_events = false;
  cfg.seed = 21;
  const RunResult r = run(p, random_grains(1000, 55), cfg);
  // Boundary events remove exactly one grain each, so the stop lands on
  // the threshold itself.
  CHECK(r.snapshots.back().alive == 900);
  CHECK(r.t_final < 1e9);
  CHECK_FALSE(r.exhausted_at.has_value());
}

TEST_CASE("conservation laws on a mixed run") {
  ModelPreset p = load_preset("grain15-pd");
  p.edge_deletion.beta_pd = 30.0;
  SimConfig cfg;
  cfg.t_end = 1e9;
  cfg.stop_alive = 1500;
  cfg.snapshot_dt = 0.02;
  cfg.log_events = false;
  cfg.seed = 8;
  const RunResult r = run(p, random_grains(2000, 12345), cfg);
  REQUIRE(r.snapshots.size() > 5);
  const double a0 = r.snapshots.front().total_area;
  for (const SpeciesSnapshot& s : r.snapshots) {
    CHECK(s.defect == 0);
    CHECK(std::abs(s.total_area - a0) / a0 < 1e-9);
  }
  CHECK(r.n_interior_events > 0);
}

TEST_CASE("identical seeds reproduce the run, different seeds do not") {
  const ModelPreset p = load_preset("grain15-nd");
  const std::vector<ParticleInit> init = random_grains(500, 31);
  SimConfig cfg;
  cfg.t_end = 1e9;
  cfg.stop_alive = 350;
  cfg.graintrack_dt = 0.01;
  cfg.seed = 13;
  const RunResult a = run(p, init, cfg);
  const RunResult b = run(p, init, cfg);
  CHECK(a.events.size() == b.events.size());
  CHECK(a.t_final == b.t_final);
  CHECK(datasets_equal(a.track, b.track));

  cfg.seed = 14;
  const RunResult c = run(p, init, cfg);
  CHECK_FALSE(datasets_equal(a.track, c.track));
}

TEST_CASE("grain track steps are uniform and id-sorted") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 0.2;
  cfg.graintrack_dt = 0.01;
  cfg.log_events = false;
  cfg.seed = 2;
  const RunResult r = run(p, random_grains(500, 63), cfg);
  const GrainTrackDataset& ds = r.track;
  REQUIRE(ds.n_steps() == 21);
  CHECK(ds.count_at(0) == 500);
  for (std::size_t k = 0; k < ds.n_steps(); ++k) {
    CHECK(ds.times[k] == doctest::Approx(0.01 * k).epsilon(1e-12));
    for (std::size_t i = 1; i < ds.steps[k].size(); ++i)
      CHECK(ds.steps[k][i - 1].id < ds.steps[k][i].id);
    if (k > 0) CHECK(ds.count_at(k) <= ds.count_at(k - 1));
  }
}

TEST_CASE("run rejects a nonpositive horizon") {
  const ModelPreset p = load_preset("grain15-nd");
  SimConfig cfg;
  cfg.t_end = 0.0;
  CHECK_THROWS_AS(run(p, {{7, 1.0}}, cfg), std::invalid_argument);
}

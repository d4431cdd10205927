#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grainkin/graintrack.hpp"
#include "grainkin/model.hpp"
#include "grainkin/rng.hpp"

namespace grainkin {

// Raised when the weighted population available to an event is exhausted
// before all K targets are drawn: the finite-system analog of the kinetic
// blow-up time.
struct SelectionExhausted : std::runtime_error {
  double time;
  explicit SelectionExhausted(double t)
      : std::runtime_error("selection weights exhausted at t = " +
                           std::to_string(t)),
        time(t) {}
};

struct ParticleInit {
  int species = 0;
  double size = 0.0;
};

struct Mutation {
  std::int32_t id = -1;
  std::int16_t from = 0;
  std::int16_t to = 0;
};

struct SimEvent {
  double time = 0.0;
  bool boundary = false;
  std::int16_t trigger = 0;    // vanishing species, or 0 for interior
  std::int32_t vanished = -1;  // particle id, -1 for interior events
  std::vector<Mutation> muts;  // length K of the applied rule
};

struct SpeciesSnapshot {
  double time = 0.0;
  std::vector<std::int64_t> counts;  // by species label, size M+1
  std::int64_t alive = 0;
  std::int64_t defect = 0;           // sum of (s_i - zero_label)
  double total_area = 0.0;
  // Per-species size histograms, filled only on request: 100 uniform bins
  // over [0, hist_x_max] where hist_x_max is the largest live size.
  std::vector<std::vector<std::int64_t>> hist;
  double hist_x_max = 0.0;
};

struct SimConfig {
  double t_end = 0.0;
  double snapshot_dt = 0.0;    // 0: record initial and final state only
  double graintrack_dt = 0.0;  // 0: no per-grain tracking
  bool log_events = true;
  bool record_histograms = false;
  bool enforce_zero_defect = true;  // honored only for side-count presets
  std::uint64_t seed = 1;
  // When positive, the run also stops once the live count drops to this
  // value (checked after each boundary event), whichever comes first with
  // t_end. The final snapshot is still recorded.
  std::int64_t stop_alive = 0;
};

// The particle population with event bookkeeping. Positions are stored as
// (x0, t0) pairs with x(t) = x0 + v*(t - t0), so drift costs nothing and
// boundary-hit times are exact; a particle's pair is rebased only when its
// species changes. Shrinking particles sit in an indexed min-heap keyed by
// (exit time, species, id); per-species buckets give O(1) uniform draws.
class ParticleSystem {
 public:
  // Builds the population at t = 0. With enforce_zero_defect set (and a
  // side-count preset), particles are greedily adjusted by +-1 label within
  // [s_min, M], in index order, until the polyhedral defect is zero; the
  // number of adjustments equals the initial |defect| when reachable.
  ParticleSystem(const ModelPreset& preset, const std::vector<ParticleInit>& init,
                 bool enforce_zero_defect);

  const ModelPreset& preset() const { return *preset_; }
  double time() const { return t_; }
  std::int64_t alive() const { return alive_; }
  std::int64_t n0() const { return n0_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t defect() const { return defect_; }
  double total_area() const;
  int adjustments_made() const { return adjustments_; }
  double boundary_tolerance() const { return tol_; }

  bool is_alive(int id) const { return alive_flag_[id] != 0; }
  int species_of(int id) const { return species_[id]; }
  double size_of(int id) const;

  struct NextBoundary {
    double dt = std::numeric_limits<double>::infinity();
    double time = std::numeric_limits<double>::infinity();
    int id = -1;
    int species = 0;
  };
  // Earliest boundary hit among shrinking particles; ties resolve by species
  // ascending, then id ascending. dt is infinite when nothing shrinks.
  NextBoundary next_boundary_event() const;

  // Moves time forward. Fails hard if a shrinking particle would cross the
  // origin by more than the boundary tolerance (scheduling bug).
  void advance(double dt) { advance_to(t_ + dt); }
  void advance_to(double t);

  // Draws K targets sequentially: species sigma with probability
  // w_sigma*N_sigma / sum_n w_n*N_n over currently eligible particles, then
  // uniformly within the species. `exclude` and already-drawn particles are
  // ineligible. Throws SelectionExhausted when the eligible weighted
  // population hits zero before K draws. Leaves the population unchanged.
  std::vector<int> select_targets(const MutationRule& rule, int exclude, Rng& rng);

  // The particle of species l at the origin (within tolerance) vanishes and
  // K^(l) targets mutate. Selection happens before any state change, so a
  // SelectionExhausted propagates with the system intact.
  SimEvent apply_boundary_event(int l, Rng& rng);
  SimEvent apply_interior_event(Rng& rng);

  // Total interior event rate for the preset's edge-deletion mode.
  double interior_rate() const;

  void append_track_step(GrainTrackDataset& ds) const;
  void snapshot(SpeciesSnapshot& out, bool with_histograms) const;

 private:
  void mutate(int id, int to_species);
  void remove(int id);
  void bucket_insert(int id);
  void bucket_erase(int id);
  double exit_time_of(int id) const;

  // Indexed binary min-heap over all particles; non-shrinking particles
  // carry an infinite key.
  bool heap_less(int a, int b) const;
  void heap_sift_up(int pos);
  void heap_sift_down(int pos);
  void heap_update(int id);

  const ModelPreset* preset_;
  double t_ = 0.0;
  std::int64_t n0_ = 0;
  std::int64_t alive_ = 0;
  std::int64_t defect_ = 0;
  int adjustments_ = 0;
  double tol_ = 0.0;

  std::vector<double> x0_, t0_;
  std::vector<std::int16_t> species_;
  std::vector<std::uint8_t> alive_flag_;
  std::vector<double> exit_time_;

  std::vector<std::int64_t> counts_;
  std::vector<std::vector<std::int32_t>> buckets_;  // by species label
  std::vector<std::int32_t> bucket_pos_;
  std::vector<std::int32_t> hidden_;  // per-species tail counts during selection

  std::vector<std::int32_t> heap_;
  std::vector<std::int32_t> heap_pos_;
};

struct RunResult {
  std::vector<SpeciesSnapshot> snapshots;
  std::vector<SimEvent> events;  // empty unless config.log_events
  GrainTrackDataset track;       // filled when config.graintrack_dt > 0
  std::optional<double> exhausted_at;  // finite-N T*
  double t_final = 0.0;
  std::int64_t n_boundary_events = 0;
  std::int64_t n_interior_events = 0;
};

// Event loop: repeatedly advance to the earlier of the next boundary hit and
// the next interior clock ring, apply the event, and resample the interior
// clock (its rate is constant between boundary events, so exponential
// sampling is exact). Snapshots and grain-track rows are recorded on their
// own schedules without touching the random stream. Terminates at t_end,
// population zero, or SelectionExhausted (recorded, not thrown).
RunResult run(const ModelPreset& preset, const std::vector<ParticleInit>& init,
              const SimConfig& config);

}  // namespace grainkin

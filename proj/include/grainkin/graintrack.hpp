#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grainkin {

struct GrainRecord {
  std::int32_t id = 0;
  std::int32_t sides = 0;
  double area = 0.0;
};

// Uniform-step per-grain history: one row per live grain per step. Rows are
// sorted by id within a step, ids are stable across mutations, and a grain
// present at step k but absent at k+1 vanished in [t_k, t_{k+1}).
struct GrainTrackDataset {
  std::vector<double> times;                    // time of each step
  std::vector<std::vector<GrainRecord>> steps;  // rows sorted by id

  std::size_t n_steps() const { return steps.size(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  std::size_t count_at(std::size_t step) const { return steps[step].size(); }
  double mean_area_at(std::size_t step) const;
  // Index of the step whose time is nearest to t.
  std::size_t step_nearest(double t) const;
};

// CSV with exact header "step,time,grain_id,sides,area", UTF-8, LF line
// endings, decimal points, 17 significant digits (round-trip exact for
// doubles). Reading is streaming (line at a time); malformed input raises
// std::runtime_error naming the line number. Steps must be contiguous and
// nondecreasing.
void write_graintrack(const GrainTrackDataset& ds, const std::string& path);
GrainTrackDataset read_graintrack(const std::string& path);

bool datasets_equal(const GrainTrackDataset& a, const GrainTrackDataset& b);

}  // namespace grainkin

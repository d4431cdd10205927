#include "grainkin/graintrack.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>

namespace grainkin {

double GrainTrackDataset::mean_area_at(std::size_t step) const {
  const auto& rows = steps[step];
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const GrainRecord& r : rows) sum += r.area;
  return sum / static_cast<double>(rows.size());
}

std::size_t GrainTrackDataset::step_nearest(double t) const {
  std::size_t best = 0;
  double best_d = std::abs(times[0] - t);
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double d = std::abs(times[k] - t);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

constexpr char kHeader[] = "step,time,grain_id,sides,area";

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("graintrack csv, line " + std::to_string(line_no) +
                           ": " + what);
}

// Comma-splits a line into exactly 5 fields, in place.
bool split5(const std::string& line, std::string_view out[5]) {
  std::size_t start = 0;
  int field = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (field == 5) return false;
      out[field++] = std::string_view(line).substr(start, i - start);
      start = i + 1;
    }
  }
  return field == 5;
}

template <typename T>
bool parse_num(std::string_view s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

void write_graintrack(const GrainTrackDataset& ds, const std::string& path) {
  if (ds.times.size() != ds.steps.size())
    throw std::invalid_argument("write_graintrack: times/steps length mismatch");
  std::ofstream out(path, std::ios::binary);  // binary: LF on every platform
  if (!out) throw std::runtime_error("write_graintrack: cannot open " + path);
  out << kHeader << '\n';
  char buf[64];
  for (std::size_t k = 0; k < ds.steps.size(); ++k) {
    for (const GrainRecord& r : ds.steps[k]) {
      out << k << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", ds.times[k]);
      out << buf << ',' << r.id << ',' << r.sides << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", r.area);
      out << buf << '\n';
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("write_graintrack: write failed: " + path);
}

GrainTrackDataset read_graintrack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_graintrack: cannot open " + path);
  GrainTrackDataset ds;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) fail(line_no, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    fail(line_no, "expected header \"" + std::string(kHeader) + "\"");

  std::int64_t prev_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view f[5];
    if (!split5(line, f)) fail(line_no, "expected 5 comma-separated fields");
    std::uint64_t step = 0;
    double time = 0.0;
    GrainRecord rec;
    if (!parse_num(f[0], step)) fail(line_no, "bad step");
    if (!parse_num(f[1], time)) fail(line_no, "bad time");
    if (!parse_num(f[2], rec.id)) fail(line_no, "bad grain_id");
    if (!parse_num(f[3], rec.sides)) fail(line_no, "bad sides");
    if (!parse_num(f[4], rec.area)) fail(line_no, "bad area");

    if (step == ds.steps.size()) {
      if (!ds.times.empty() && time <= ds.times.back())
        fail(line_no, "time must increase across steps");
      ds.steps.emplace_back();
      ds.times.push_back(time);
      prev_id = -1;
    } else if (step + 1 == ds.steps.size()) {
      if (time != ds.times.back()) fail(line_no, "time changed within a step");
    } else {
      fail(line_no, "steps must be contiguous and nondecreasing");
    }
    if (rec.id <= prev_id) fail(line_no, "grain ids must increase within a step");
    prev_id = rec.id;
    ds.steps.back().push_back(rec);
  }
  if (ds.steps.empty()) fail(line_no, "no data rows");
  return ds;
}

bool datasets_equal(const GrainTrackDataset& a, const GrainTrackDataset& b) {
  if (a.times != b.times || a.steps.size() != b.steps.size()) return false;
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    if (a.steps[k].size() != b.steps[k].size()) return false;
    for (std::size_t i = 0; i < a.steps[k].size(); ++i) {
      const GrainRecord& ra = a.steps[k][i];
      const GrainRecord& rb = b.steps[k][i];
      if (ra.id != rb.id || ra.sides != rb.sides || ra.area != rb.area)
        return false;
    }
  }
  return true;
}

}  // namespace grainkin

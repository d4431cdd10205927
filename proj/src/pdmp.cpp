#include "grainkin/pdmp.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace grainkin {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ParticleSystem::ParticleSystem(const ModelPreset& preset,
                               const std::vector<ParticleInit>& init,
                               bool enforce_zero_defect)
    : preset_(&preset) {
  if (init.empty()) throw std::invalid_argument("init_system: empty sample list");
  const SpeciesConfig& sc = preset.species;
  const std::size_t n = init.size();
  n0_ = static_cast<std::int64_t>(n);
  alive_ = n0_;
  x0_.resize(n);
  t0_.assign(n, 0.0);
  species_.resize(n);
  alive_flag_.assign(n, 1);
  exit_time_.resize(n);
  counts_.assign(static_cast<std::size_t>(sc.M) + 1, 0);
  buckets_.assign(static_cast<std::size_t>(sc.M) + 1, {});
  bucket_pos_.resize(n);
  hidden_.assign(static_cast<std::size_t>(sc.M) + 1, 0);
  heap_.resize(n);
  heap_pos_.resize(n);

  const int zero = sc.zero_label();
  double size_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!sc.in_range(init[i].species))
      throw std::invalid_argument("init_system: species out of range");
    if (!(init[i].size > 0.0))
      throw std::invalid_argument("init_system: nonpositive particle size");
    species_[i] = static_cast<std::int16_t>(init[i].species);
    x0_[i] = init[i].size;
    size_sum += init[i].size;
    defect_ += init[i].species - zero;
  }
  tol_ = 1e-12 * (size_sum / static_cast<double>(n));

  if (enforce_zero_defect && defect_ != 0) {
    // Each adjustment moves one particle by one side toward zero defect, so
    // the adjustment count equals the initial |defect| when reachable. A full
    // pass with no progress means every particle is pinned at a range end.
    while (defect_ != 0) {
      bool progressed = false;
      for (std::size_t i = 0; i < n && defect_ != 0; ++i) {
        if (defect_ > 0 && species_[i] > sc.s_min) {
          species_[i] -= 1;
          --defect_;
          ++adjustments_;
          progressed = true;
        } else if (defect_ < 0 && species_[i] < sc.M) {
          species_[i] += 1;
          ++defect_;
          ++adjustments_;
          progressed = true;
        }
      }
      if (!progressed)
        throw std::invalid_argument("init_system: zero defect unreachable");
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const int s = species_[i];
    ++counts_[s];
    bucket_pos_[i] = static_cast<std::int32_t>(buckets_[s].size());
    buckets_[s].push_back(static_cast<std::int32_t>(i));
    exit_time_[i] = exit_time_of(static_cast<int>(i));
    heap_[i] = static_cast<std::int32_t>(i);
    heap_pos_[i] = static_cast<std::int32_t>(i);
  }
  for (std::size_t i = n / 2; i-- > 0;)
    heap_sift_down(static_cast<int>(i));
}

double ParticleSystem::exit_time_of(int id) const {
  const double v = preset_->species.v[species_[id]];
  if (v >= 0.0) return kInf;
  return t0_[id] + x0_[id] / (-v);
}

double ParticleSystem::size_of(int id) const {
  const double x =
      x0_[id] + preset_->species.v[species_[id]] * (t_ - t0_[id]);
  return x > 0.0 ? x : 0.0;
}

double ParticleSystem::total_area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < alive_flag_.size(); ++i)
    if (alive_flag_[i]) a += size_of(static_cast<int>(i));
  return a;
}

ParticleSystem::NextBoundary ParticleSystem::next_boundary_event() const {
  NextBoundary nb;
  if (heap_.empty()) return nb;
  const int top = heap_[0];
  if (!std::isfinite(exit_time_[top])) return nb;
  nb.id = top;
  nb.species = species_[top];
  nb.time = exit_time_[top];
  nb.dt = std::max(0.0, nb.time - t_);
  return nb;
}

void ParticleSystem::advance_to(double t) {
  if (t < t_) throw std::logic_error("advance_to: time moves backward");
  if (!heap_.empty()) {
    const int top = heap_[0];
    if (exit_time_[top] < t) {
      const double speed = -preset_->species.v[species_[top]];
      if (speed * (t - exit_time_[top]) > tol_)
        throw std::logic_error(
            "advance_to: shrinking particle crossed the origin "
            "(scheduling bug)");
    }
  }
  t_ = t;
}

std::vector<int> ParticleSystem::select_targets(const MutationRule& rule,
                                                int exclude, Rng& rng) {
  const SpeciesConfig& sc = preset_->species;
  auto hide = [&](int id) {
    const int s = species_[id];
    auto& b = buckets_[s];
    const int tail = static_cast<int>(b.size()) - 1 - hidden_[s];
    const int pos = bucket_pos_[id];
    std::swap(b[pos], b[tail]);
    bucket_pos_[b[pos]] = pos;
    bucket_pos_[b[tail]] = tail;
    ++hidden_[s];
  };
  auto restore = [&] { std::fill(hidden_.begin(), hidden_.end(), 0); };

  if (exclude >= 0) hide(exclude);
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(rule.K));
  for (int j = 0; j < rule.K; ++j) {
    double total = 0.0;
    for (int s = sc.s_min; s <= sc.M; ++s)
      total += rule.w[s] *
               static_cast<double>(static_cast<std::int64_t>(buckets_[s].size()) -
                                   hidden_[s]);
    if (!(total > 0.0)) {
      restore();
      throw SelectionExhausted(t_);
    }
    double u = rng.uniform() * total;
    int sigma = sc.s_min;
    for (int s = sc.s_min; s <= sc.M; ++s) {
      const double mass =
          rule.w[s] *
          static_cast<double>(static_cast<std::int64_t>(buckets_[s].size()) -
                              hidden_[s]);
      if (mass <= 0.0) continue;
      sigma = s;  // the last positive-mass species absorbs rounding slack
      if (u < mass) break;
      u -= mass;
    }
    const auto& b = buckets_[sigma];
    const std::size_t eff = b.size() - static_cast<std::size_t>(hidden_[sigma]);
    const int id = b[rng.uniform_index(eff)];
    hide(id);
    picked.push_back(id);
  }
  restore();
  return picked;
}

SimEvent ParticleSystem::apply_boundary_event(int l, Rng& rng) {
  const NextBoundary nb = next_boundary_event();
  if (nb.id < 0 || nb.species != l)
    throw std::logic_error("apply_boundary_event: no species-" +
                           std::to_string(l) + " particle is due");
  if (size_of(nb.id) > tol_)
    throw std::logic_error("apply_boundary_event: particle not at the origin");
  const MutationRule* rp = preset_->rule_for(l);
  if (rp == nullptr)
    throw std::logic_error("apply_boundary_event: preset has no rule for trigger " +
                           std::to_string(l));
  const MutationRule& rule = *rp;
  // Select before touching any state so SelectionExhausted leaves the
  // population intact at the event time.
  const std::vector<int> targets = select_targets(rule, nb.id, rng);

  SimEvent ev;
  ev.time = t_;
  ev.boundary = true;
  ev.trigger = static_cast<std::int16_t>(l);
  ev.vanished = nb.id;
  ev.muts.reserve(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const int id = targets[j];
    const int from = species_[id];
    ev.muts.push_back({id, static_cast<std::int16_t>(from),
                       static_cast<std::int16_t>(rule.R[from][j])});
  }
  for (const Mutation& m : ev.muts) mutate(m.id, m.to);
  remove(nb.id);
  return ev;
}

SimEvent ParticleSystem::apply_interior_event(Rng& rng) {
  const MutationRule* rp = preset_->rule_for(kInteriorTrigger);
  if (rp == nullptr)
    throw std::logic_error("apply_interior_event: preset has no interior rule");
  const MutationRule& rule = *rp;
  const std::vector<int> targets = select_targets(rule, -1, rng);

  SimEvent ev;
  ev.time = t_;
  ev.boundary = false;
  ev.trigger = kInteriorTrigger;
  ev.muts.reserve(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const int id = targets[j];
    const int from = species_[id];
    ev.muts.push_back({id, static_cast<std::int16_t>(from),
                       static_cast<std::int16_t>(rule.R[from][j])});
  }
  for (const Mutation& m : ev.muts) mutate(m.id, m.to);
  return ev;
}

double ParticleSystem::interior_rate() const {
  const EdgeDeletion& ed = preset_->edge_deletion;
  const double n = static_cast<double>(alive_);
  switch (ed.mode) {
    case EdgeDeletionMode::ND:
      return 0.0;
    case EdgeDeletionMode::PD:
      return ed.beta_pd * n;
    case EdgeDeletionMode::RD:
      return ed.alpha * ed.beta_rd * n * n;
  }
  return 0.0;
}

void ParticleSystem::mutate(int id, int to_species) {
  const int from = species_[id];
  if (from == to_species) return;
  const double x = size_of(id);
  bucket_erase(id);
  --counts_[from];
  species_[id] = static_cast<std::int16_t>(to_species);
  ++counts_[to_species];
  bucket_insert(id);
  defect_ += to_species - from;
  x0_[id] = x;
  t0_[id] = t_;
  exit_time_[id] = exit_time_of(id);
  heap_update(id);
}

void ParticleSystem::remove(int id) {
  bucket_erase(id);
  --counts_[species_[id]];
  defect_ -= species_[id] - preset_->species.zero_label();
  alive_flag_[id] = 0;
  --alive_;
  const int pos = heap_pos_[id];
  const int last = static_cast<int>(heap_.size()) - 1;
  if (pos != last) {
    heap_[pos] = heap_[last];
    heap_pos_[heap_[pos]] = pos;
  }
  heap_.pop_back();
  heap_pos_[id] = -1;
  if (pos < static_cast<int>(heap_.size())) heap_update(heap_[pos]);
}

void ParticleSystem::bucket_insert(int id) {
  auto& b = buckets_[species_[id]];
  bucket_pos_[id] = static_cast<std::int32_t>(b.size());
  b.push_back(id);
}

void ParticleSystem::bucket_erase(int id) {
  auto& b = buckets_[species_[id]];
  const int pos = bucket_pos_[id];
  const int last = static_cast<int>(b.size()) - 1;
  if (pos != last) {
    b[pos] = b[last];
    bucket_pos_[b[pos]] = pos;
  }
  b.pop_back();
  bucket_pos_[id] = -1;
}

bool ParticleSystem::heap_less(int a, int b) const {
  if (exit_time_[a] != exit_time_[b]) return exit_time_[a] < exit_time_[b];
  if (species_[a] != species_[b]) return species_[a] < species_[b];
  return a < b;
}

void ParticleSystem::heap_sift_up(int pos) {
  const int id = heap_[pos];
  while (pos > 0) {
    const int parent = (pos - 1) / 2;
    if (!heap_less(id, heap_[parent])) break;
    heap_[pos] = heap_[parent];
    heap_pos_[heap_[pos]] = pos;
    pos = parent;
  }
  heap_[pos] = id;
  heap_pos_[id] = pos;
}

void ParticleSystem::heap_sift_down(int pos) {
  const int n = static_cast<int>(heap_.size());
  const int id = heap_[pos];
  for (;;) {
    int child = 2 * pos + 1;
    if (child >= n) break;
    if (child + 1 < n && heap_less(heap_[child + 1], heap_[child])) ++child;
    if (!heap_less(heap_[child], id)) break;
    heap_[pos] = heap_[child];
    heap_pos_[heap_[pos]] = pos;
    pos = child;
  }
  heap_[pos] = id;
  heap_pos_[id] = pos;
}

void ParticleSystem::heap_update(int id) {
  heap_sift_up(heap_pos_[id]);
  heap_sift_down(heap_pos_[id]);
}

void ParticleSystem::append_track_step(GrainTrackDataset& ds) const {
  ds.times.push_back(t_);
  auto& rows = ds.steps.emplace_back();
  rows.reserve(static_cast<std::size_t>(alive_));
  for (std::size_t i = 0; i < alive_flag_.size(); ++i)
    if (alive_flag_[i])
      rows.push_back({static_cast<std::int32_t>(i), species_[i],
                      size_of(static_cast<int>(i))});
}

void ParticleSystem::snapshot(SpeciesSnapshot& out, bool with_histograms) const {
  out.time = t_;
  out.counts = counts_;
  out.alive = alive_;
  out.defect = defect_;
  out.total_area = total_area();
  out.hist.clear();
  out.hist_x_max = 0.0;
  if (!with_histograms || alive_ == 0) return;
  double xmax = 0.0;
  for (std::size_t i = 0; i < alive_flag_.size(); ++i)
    if (alive_flag_[i]) xmax = std::max(xmax, size_of(static_cast<int>(i)));
  if (xmax <= 0.0) xmax = 1.0;
  out.hist_x_max = xmax;
  out.hist.assign(counts_.size(), std::vector<std::int64_t>(100, 0));
  for (std::size_t i = 0; i < alive_flag_.size(); ++i) {
    if (!alive_flag_[i]) continue;
    const double x = size_of(static_cast<int>(i));
    const int b =
        std::min(99, static_cast<int>(x / xmax * 100.0));
    ++out.hist[species_[i]][b];
  }
}

RunResult run(const ModelPreset& preset, const std::vector<ParticleInit>& init,
              const SimConfig& config) {
  if (!(config.t_end > 0.0))
    throw std::invalid_argument("run: t_end must be positive");
  ParticleSystem sys(preset, init,
                     config.enforce_zero_defect && preset.sides_semantics);
  Rng rng(config.seed);
  RunResult out;

  auto take_snapshot = [&] {
    if (!out.snapshots.empty() && out.snapshots.back().time == sys.time())
      return;
    SpeciesSnapshot snap;
    sys.snapshot(snap, config.record_histograms);
    out.snapshots.push_back(std::move(snap));
  };

  take_snapshot();
  if (config.graintrack_dt > 0.0) sys.append_track_step(out.track);
  std::int64_t snap_k = 1;
  std::int64_t track_k = 1;

  double t_interior = kInf;
  auto resample_clock = [&] {
    const double rate = sys.interior_rate();
    t_interior = rate > 0.0 ? sys.time() + rng.exponential(rate) : kInf;
  };
  resample_clock();

  // Tie order at equal times: boundary, interior, track, snapshot, end.
  // Snapshot and track recording never touch the random stream, and the
  // interior clock is resampled only after events (exact: its rate is
  // constant in between).
  try {
    while (sys.alive() > 0) {
      const auto nb = sys.next_boundary_event();
      const double t_snap =
          config.snapshot_dt > 0.0
              ? static_cast<double>(snap_k) * config.snapshot_dt
              : kInf;
      const double t_track =
          config.graintrack_dt > 0.0
              ? static_cast<double>(track_k) * config.graintrack_dt
              : kInf;
      const double t_next =
          std::min({nb.time, t_interior, t_track, t_snap, config.t_end});
      sys.advance_to(t_next);
      if (nb.time <= t_next) {
        SimEvent ev = sys.apply_boundary_event(nb.species, rng);
        ++out.n_boundary_events;
        if (config.log_events) out.events.push_back(std::move(ev));
        if (config.stop_alive > 0 && sys.alive() <= config.stop_alive) break;
        resample_clock();
        continue;
      }
      if (t_interior <= t_next) {
        SimEvent ev = sys.apply_interior_event(rng);
        ++out.n_interior_events;
        if (config.log_events) out.events.push_back(std::move(ev));
        resample_clock();
        continue;
      }
      if (t_track <= t_next) {
        sys.append_track_step(out.track);
        ++track_k;
        continue;
      }
      if (t_snap <= t_next) {
        take_snapshot();
        ++snap_k;
        continue;
      }
      break;  // reached t_end
    }
  } catch (const SelectionExhausted& e) {
    out.exhausted_at = e.time;
  }
  take_snapshot();
  out.t_final = sys.time();
  return out;
}

}  // namespace grainkin

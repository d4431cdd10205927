// grainkin command-line tool: simulate | solve | fit | compare | topology |
// gen-data | validate-preset | gen-weights.
//
// Exit codes: 0 success; 2 usage/input error; 3 model event (blow-up or
// selection exhaustion) with the event time printed. All randomness derives
// from --seed; data outputs are byte-identical across reruns with the same
// flags (run.log carries the wall clock and is excluded from that contract).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grainkin/fitting.hpp"
#include "grainkin/graintrack.hpp"
#include "grainkin/kinetic.hpp"
#include "grainkin/model.hpp"
#include "grainkin/pdmp.hpp"
#include "grainkin/rng.hpp"
#include "grainkin/stats.hpp"
#include "grainkin/topology.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace grainkin;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Relative output paths resolve under $GRAINKIN_OUT_ROOT when it is set.
fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("GRAINKIN_OUT_ROOT"))
    if (*root) return fs::path(root) / p;
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << text;
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string wall_clock_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// manifest.json is deterministic (reproducibility contract); the wall clock
// lives in run.log instead.
void write_manifest(const fs::path& dir, const std::string& subcommand,
                    const ojson& config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  ojson m;
  m["subcommand"] = subcommand;
  m["tool_version"] = kToolVersion;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void write_run_log(const fs::path& dir, const std::string& started,
                   const std::string& summary) {
  std::ostringstream os;
  os << "started " << started << "\n"
     << "finished " << wall_clock_utc() << "\n"
     << summary << "\n";
  write_text(dir / "run.log", os.str());
}

std::vector<double> parse_double_list(const std::string& csv,
                                      const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad value '" + tok + "' in " + what);
    }
  }
  if (out.empty()) throw std::invalid_argument(what + " is empty");
  return out;
}

// ---------------------------------------------------------------------------
// simulate / gen-data
// ---------------------------------------------------------------------------

struct InitSpec {
  double size_lo = 0.5;
  double size_hi = 1.5;
  std::string species_weights;  // "label:weight,..." or empty for uniform
};

std::vector<ParticleInit> make_initial_population(const ModelPreset& preset,
                                                  std::int64_t n0,
                                                  const InitSpec& spec,
                                                  std::uint64_t seed) {
  const SpeciesConfig& sc = preset.species;
  std::vector<double> w(sc.M + 1, 0.0);
  if (spec.species_weights.empty()) {
    for (int s = sc.s_min; s <= sc.M; ++s) w[s] = 1.0;
  } else {
    std::stringstream ss(spec.species_weights);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("bad species weight entry: " + tok);
      const int label = std::stoi(tok.substr(0, colon));
      const double weight = std::stod(tok.substr(colon + 1));
      if (label < sc.s_min || label > sc.M)
        throw std::invalid_argument("species weight label out of range: " + tok);
      if (weight < 0.0)
        throw std::invalid_argument("negative species weight: " + tok);
      w[label] = weight;
    }
  }
  double total = 0.0;
  for (double v : w) total += v;
  if (total <= 0.0) throw std::invalid_argument("species weights sum to zero");
  if (spec.size_lo <= 0.0 || spec.size_hi < spec.size_lo)
    throw std::invalid_argument("initial size range must satisfy 0 < lo <= hi");

  // Initial-state sampling uses a stream decoupled from the event stream.
  Rng rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<ParticleInit> init;
  init.reserve(static_cast<std::size_t>(n0));
  for (std::int64_t i = 0; i < n0; ++i) {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int label = sc.M;
    for (int s = sc.s_min; s <= sc.M; ++s) {
      acc += w[s];
      if (u < acc) {
        label = s;
        break;
      }
    }
    const double x =
        spec.size_lo + (spec.size_hi - spec.size_lo) * rng.uniform();
    init.push_back({label, x});
  }
  return init;
}

ojson snapshot_to_json(const ModelPreset& preset, const SpeciesSnapshot& snap,
                       bool with_histograms) {
  const SpeciesConfig& sc = preset.species;
  ojson j;
  j["t"] = snap.time;
  j["alive"] = snap.alive;
  j["defect"] = snap.defect;
  j["total_area"] = snap.total_area;
  ojson counts;
  for (int s = sc.s_min; s <= sc.M; ++s)
    counts[std::to_string(s)] = snap.counts[s];
  j["counts"] = counts;
  if (with_histograms && !snap.hist.empty()) {
    ojson hists;
    for (int s = sc.s_min; s <= sc.M; ++s) {
      if (snap.counts[s] == 0) continue;
      ojson h;
      h["x_max"] = snap.hist_x_max;
      h["counts"] = snap.hist[s];
      hists[std::to_string(s)] = h;
    }
    j["histograms"] = hists;
    j["histogram_x_max"] = snap.hist_x_max;
  }
  return j;
}

void write_snapshots_json(const fs::path& dir, const std::string& preset_name,
                          std::uint64_t seed, const SimConfig& cfg,
                          const ModelPreset& preset, const RunResult& res) {
  ojson j;
  j["preset"] = preset_name;
  j["n0"] = res.snapshots.empty() ? 0 : res.snapshots.front().alive;
  j["seed"] = seed;
  j["t_end"] = cfg.t_end;
  j["t_final"] = res.t_final;
  if (res.exhausted_at)
    j["exhausted_at"] = *res.exhausted_at;
  else
    j["exhausted_at"] = nullptr;
  j["n_boundary_events"] = res.n_boundary_events;
  j["n_interior_events"] = res.n_interior_events;
  ojson snaps = ojson::array();
  for (const SpeciesSnapshot& s : res.snapshots)
    snaps.push_back(snapshot_to_json(preset, s, cfg.record_histograms));
  j["snapshots"] = snaps;
  write_text(dir / "snapshots.json", j.dump(2) + "\n");
}

void write_events_csv(const fs::path& dir, const RunResult& res) {
  std::ostringstream os;
  os << "time,kind,trigger,vanished,mutations\n";
  for (const SimEvent& ev : res.events) {
    os << fmt17(ev.time) << ',' << (ev.boundary ? "boundary" : "interior")
       << ',' << ev.trigger << ',' << ev.vanished << ',';
    for (std::size_t i = 0; i < ev.muts.size(); ++i) {
      if (i) os << ';';
      os << ev.muts[i].id << ':' << ev.muts[i].from << ':' << ev.muts[i].to;
    }
    os << '\n';
  }
  write_text(dir / "events.csv", os.str());
}

struct SimulateArgs {
  std::string preset_arg = "grain15-nd";
  std::int64_t n0 = 1000;
  std::uint64_t seed = 1;
  double t_end = 0.0;
  double snapshot_dt = 0.0;
  double graintrack_dt = 0.0;
  int ensemble = 1;
  bool histograms = true;
  bool log_events = true;
  bool zero_defect = true;
  InitSpec init;
  std::string edge_mode;  // "", "nd", "pd", "rd"
  double beta_pd = -1.0, alpha = -1.0, beta_rd = -1.0;
  std::string out = "simulate-out";
};

ModelPreset preset_with_overrides(const SimulateArgs& a) {
  ModelPreset preset = load_preset(a.preset_arg);
  EdgeDeletion ed = preset.edge_deletion;
  if (!a.edge_mode.empty()) {
    if (a.edge_mode == "nd")
      ed.mode = EdgeDeletionMode::ND;
    else if (a.edge_mode == "pd")
      ed.mode = EdgeDeletionMode::PD;
    else if (a.edge_mode == "rd")
      ed.mode = EdgeDeletionMode::RD;
    else
      throw std::invalid_argument("--edge-mode must be nd, pd or rd");
  }
  if (a.beta_pd >= 0.0) ed.beta_pd = a.beta_pd;
  if (a.alpha >= 0.0) ed.alpha = a.alpha;
  if (a.beta_rd >= 0.0) ed.beta_rd = a.beta_rd;
  preset.edge_deletion = ed;
  return preset;
}

// Runs one replica and writes its output directory; returns the result.
RunResult simulate_one(const ModelPreset& preset, const SimulateArgs& a,
                       std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  const std::vector<ParticleInit> init =
      make_initial_population(preset, a.n0, a.init, seed);
  SimConfig cfg;
  cfg.t_end = a.t_end;
  cfg.snapshot_dt = a.snapshot_dt;
  cfg.graintrack_dt = a.graintrack_dt;
  cfg.log_events = a.log_events;
  cfg.record_histograms = a.histograms;
  cfg.enforce_zero_defect = a.zero_defect && preset.sides_semantics;
  cfg.seed = seed;
  RunResult res = run(preset, init, cfg);
  write_snapshots_json(dir, a.preset_arg, seed, cfg, preset, res);
  if (a.log_events) write_events_csv(dir, res);
  if (a.graintrack_dt > 0.0) write_graintrack(res.track, (dir / "graintrack.csv").string());
  return res;
}

ojson simulate_config_json(const SimulateArgs& a) {
  ojson c;
  c["preset"] = a.preset_arg;
  c["n0"] = a.n0;
  c["seed"] = a.seed;
  c["t_end"] = a.t_end;
  c["snapshot_dt"] = a.snapshot_dt;
  c["graintrack_dt"] = a.graintrack_dt;
  c["ensemble"] = a.ensemble;
  c["histograms"] = a.histograms;
  c["log_events"] = a.log_events;
  c["zero_defect"] = a.zero_defect;
  c["init_size_lo"] = a.init.size_lo;
  c["init_size_hi"] = a.init.size_hi;
  c["init_species_weights"] = a.init.species_weights;
  c["edge_mode_override"] = a.edge_mode;
  c["beta_pd_override"] = a.beta_pd;
  c["alpha_override"] = a.alpha;
  c["beta_rd_override"] = a.beta_rd;
  return c;
}

int cmd_simulate(const SimulateArgs& a) {
  const std::string started = wall_clock_utc();
  const ModelPreset preset = preset_with_overrides(a);
  const fs::path out = resolve_out(a.out);
  fs::create_directories(out);

  std::vector<std::string> outputs = {"snapshots.json"};
  if (a.log_events) outputs.push_back("events.csv");
  if (a.graintrack_dt > 0.0) outputs.push_back("graintrack.csv");

  if (a.ensemble <= 1) {
    RunResult res = simulate_one(preset, a, a.seed, out);
    write_manifest(out, "simulate", simulate_config_json(a), {}, outputs);
    std::ostringstream sum;
    sum << "alive_final " << (res.snapshots.empty() ? 0 : res.snapshots.back().alive)
        << " boundary_events " << res.n_boundary_events << " interior_events "
        << res.n_interior_events;
    write_run_log(out, started, sum.str());
    if (res.exhausted_at) {
      std::cout << "model error: selection exhausted at t = "
                << fmt17(*res.exhausted_at) << "\n";
      return 3;
    }
    std::cout << "simulate: wrote " << out.string() << "\n";
    return 0;
  }

  // Ensemble mode: independent replicas, one thread each (batched), each
  // writing replica-XXX/; directories are distinct so the writes are safe.
  const int K = a.ensemble;
  std::vector<RunResult> results(K);
  std::vector<std::string> errors(K);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  for (int base = 0; base < K; base += static_cast<int>(hw)) {
    std::vector<std::thread> pool;
    for (int i = base; i < std::min(K, base + static_cast<int>(hw)); ++i) {
      pool.emplace_back([&, i]() {
        char name[32];
        std::snprintf(name, sizeof(name), "replica-%03d", i);
        try {
          results[i] = simulate_one(preset, a, a.seed + static_cast<std::uint64_t>(i),
                                    out / name);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (int i = 0; i < K; ++i)
    if (!errors[i].empty())
      throw std::runtime_error("replica " + std::to_string(i) + ": " + errors[i]);

  ojson agg;
  agg["replicas"] = K;
  agg["seed_base"] = a.seed;
  ojson rows = ojson::array();
  double mean_alive = 0.0;
  for (int i = 0; i < K; ++i) {
    const RunResult& r = results[i];
    ojson row;
    row["replica"] = i;
    row["seed"] = a.seed + static_cast<std::uint64_t>(i);
    row["alive_final"] = r.snapshots.empty() ? 0 : r.snapshots.back().alive;
    row["t_final"] = r.t_final;
    if (r.exhausted_at)
      row["exhausted_at"] = *r.exhausted_at;
    else
      row["exhausted_at"] = nullptr;
    rows.push_back(row);
    mean_alive += r.snapshots.empty()
                      ? 0.0
                      : static_cast<double>(r.snapshots.back().alive);
  }
  agg["rows"] = rows;
  agg["mean_alive_final"] = mean_alive / K;
  write_text(out / "aggregate.json", agg.dump(2) + "\n");
  write_manifest(out, "simulate", simulate_config_json(a), {},
                 {"aggregate.json", "replica-*/"});
  write_run_log(out, started, "replicas " + std::to_string(K));
  std::cout << "simulate: wrote " << K << " replicas under " << out.string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

std::vector<DensitySpec> load_density_specs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open density spec: " + path);
  ojson j = ojson::parse(is);
  if (!j.is_array())
    throw std::invalid_argument("density spec must be a JSON list");
  std::vector<DensitySpec> specs;
  for (const auto& e : j) {
    DensitySpec d;
    d.species = e.at("species").get<int>();
    const std::string shape = e.at("shape").get<std::string>();
    if (shape == "uniform")
      d.shape = DensityShape::Uniform;
    else if (shape == "triangle")
      d.shape = DensityShape::Triangle;
    else
      throw std::invalid_argument("unknown density shape: " + shape);
    const auto& sup = e.at("support");
    if (!sup.is_array() || sup.size() != 2)
      throw std::invalid_argument("density support must be [a, b]");
    d.a = sup[0].get<double>();
    d.b = sup[1].get<double>();
    d.mass = e.at("mass").get<double>();
    specs.push_back(d);
  }
  return specs;
}

std::vector<DensitySpec> default_two_species_init() {
  return {{1, DensityShape::Uniform, 0.0, 1.0, 0.5},
          {2, DensityShape::Uniform, 2.0, 3.0, 0.5}};
}

void write_density_csv(const fs::path& path, const ModelPreset& preset,
                       const DensityField& field) {
  const SpeciesConfig& sc = preset.species;
  const std::size_t G = field.n_nodes();
  std::ostringstream os;
  os << "x";
  for (std::size_t g = 0; g < G; ++g) os << ',' << fmt17(field.node_x(g));
  os << '\n';
  for (int s = sc.s_min; s <= sc.M; ++s) {
    os << 'f' << s;
    for (std::size_t g = 0; g < G; ++g) os << ',' << fmt17(field.f[s][g]);
    os << '\n';
  }
  write_text(path, os.str());
}

void write_trajectory_csv(const fs::path& path, const ModelPreset& preset,
                          const SolveResult& res) {
  const SpeciesConfig& sc = preset.species;
  std::vector<int> loss_labels;
  for (int l = sc.s_min; l <= sc.M; ++l)
    if (sc.v[l] < 0.0) loss_labels.push_back(l);
  std::ostringstream os;
  os << "t";
  for (int s = sc.s_min; s <= sc.M; ++s) os << ",F_" << s;
  os << ",A,P";
  for (int l : loss_labels) os << ",L_" << l;
  os << '\n';
  for (const TrajectoryRow& row : res.rows) {
    os << fmt17(row.t);
    for (int s = sc.s_min; s <= sc.M; ++s) os << ',' << fmt17(row.F[s]);
    os << ',' << fmt17(row.area) << ',' << fmt17(row.defect);
    for (int l : loss_labels) os << ',' << fmt17(row.L[l]);
    os << '\n';
  }
  write_text(path, os.str());
}

struct SolveArgs {
  std::string preset_arg;
  std::string init_path;
  double dx = 0.0;
  double dt = 0.0;
  double x_max = 0.0;
  double t_end = 0.0;
  std::string flux_path = "generic";
  int record_every = 1;
  int density_every = 0;
  double eps_scale = 1e-6;
  double rd_n_ref = 1.0;
  bool allow_fractional = false;
  std::string out = "solve-out";
};

int cmd_solve(const SolveArgs& a) {
  const std::string started = wall_clock_utc();
  const ModelPreset preset = load_preset(a.preset_arg);
  const SpeciesConfig& sc = preset.species;

  std::vector<DensitySpec> specs;
  if (!a.init_path.empty())
    specs = load_density_specs(a.init_path);
  else if (preset.name == "two-species-counter")
    specs = default_two_species_init();
  else
    throw std::invalid_argument("--init is required for this preset");

  SolverConfig cfg;
  cfg.dt = a.dt;
  if (cfg.dt <= 0.0) throw std::invalid_argument("--dt must be positive");
  double vmax = 0.0;
  for (int s = sc.s_min; s <= sc.M; ++s) vmax = std::max(vmax, std::abs(sc.v[s]));
  cfg.dx = a.dx > 0.0 ? a.dx : vmax * cfg.dt;
  if (cfg.dx <= 0.0) throw std::invalid_argument("--dx must be positive");
  if (a.x_max > 0.0) {
    cfg.x_max = a.x_max;
  } else {
    double support_max = 0.0;
    for (const DensitySpec& d : specs) support_max = std::max(support_max, d.b);
    double vplus = 0.0;
    for (int s = sc.s_min; s <= sc.M; ++s) vplus = std::max(vplus, sc.v[s]);
    const double need = support_max + vplus * a.t_end;
    cfg.x_max = cfg.dx * std::ceil(need / cfg.dx + 2.0);
  }
  cfg.t_end = a.t_end;
  if (cfg.t_end <= 0.0) throw std::invalid_argument("--t-end must be positive");
  cfg.eps_scale = a.eps_scale;
  cfg.record_every = a.record_every;
  cfg.allow_fractional_shift = a.allow_fractional;
  cfg.rd_n_ref = a.rd_n_ref;
  if (a.flux_path == "generic")
    cfg.path = FluxPath::Generic;
  else if (a.flux_path == "topological")
    cfg.path = FluxPath::Topological;
  else if (a.flux_path == "both")
    cfg.path = FluxPath::Both;
  else
    throw std::invalid_argument("--flux-path must be generic, topological or both");

  const DensityField init = sample_density(preset, specs, cfg.dx, cfg.x_max);
  const fs::path out = resolve_out(a.out);
  fs::create_directories(out);
  write_density_csv(out / "density_initial.csv", preset, init);

  KineticSolver solver(preset, init, cfg);
  SolveResult res;
  if (a.density_every > 0) {
    // Step manually so intermediate density matrices can be captured.
    const long n_steps = std::lround(cfg.t_end / cfg.dt);
    res.F0 = solver.initial_total();
    long k = 0;
    bool blown = false;
    for (; k < n_steps; ++k) {
      if (!solver.step()) {
        blown = true;
        break;
      }
      if ((k + 1) % a.density_every == 0) {
        char name[48];
        std::snprintf(name, sizeof(name), "density_step_%06ld.csv", k + 1);
        write_density_csv(out / name, preset, solver.field());
      }
    }
    res.t_star = solver.t_star();
    res.t_star_trigger = solver.t_star_trigger();
    res.final_field = solver.field();
    res.max_flux_identity_rel = solver.max_flux_identity_rel();
    res.max_path_rel_diff = solver.max_path_rel_diff();
    // Trajectory rows were not accumulated on this path; record the final
    // state only.
    TrajectoryRow row;
    row.t = solver.field().t;
    row.F = compute_totals(solver.field(), &row.F_total);
    row.area = total_area(solver.field());
    row.defect = polyhedral_defect(preset, row.F);
    row.L = solver.cumulative_loss();
    double Lsum = 0.0;
    for (double v : row.L) Lsum += v;
    row.conservation_error = std::abs(row.F_total + Lsum - res.F0);
    res.rows.push_back(row);
    (void)blown;
  } else {
    res = solver.solve();
  }

  write_trajectory_csv(out / "trajectory.csv", preset, res);
  write_density_csv(out / "density_final.csv", preset, res.final_field);

  ojson config;
  config["preset"] = a.preset_arg;
  config["init"] = a.init_path.empty() ? std::string("<builtin default>") : a.init_path;
  config["dx"] = cfg.dx;
  config["dt"] = cfg.dt;
  config["x_max"] = cfg.x_max;
  config["t_end"] = cfg.t_end;
  config["flux_path"] = a.flux_path;
  config["record_every"] = cfg.record_every;
  config["density_every"] = a.density_every;
  config["eps_scale"] = cfg.eps_scale;
  config["rd_n_ref"] = cfg.rd_n_ref;
  config["allow_fractional_shift"] = cfg.allow_fractional_shift;
  std::vector<std::string> inputs;
  if (!a.init_path.empty()) inputs.push_back(a.init_path);
  write_manifest(out, "solve", config, inputs,
                 {"trajectory.csv", "density_initial.csv", "density_final.csv"});
  std::ostringstream sum;
  sum << "steps " << solver.steps_taken() << " flux_identity_rel "
      << fmt17(res.max_flux_identity_rel);
  write_run_log(out, started, sum.str());

  if (res.t_star) {
    std::cout << "model error: blow-up (trigger " << res.t_star_trigger
              << ") at t = " << fmt17(*res.t_star) << "\n";
    return 3;
  }
  std::cout << "solve: wrote " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const std::string& graintrack, double burn_in,
            const std::string& out_arg) {
  const std::string started = wall_clock_utc();
  const GrainTrackDataset ds = read_graintrack(graintrack);
  FitOptions opt;
  opt.burn_in = burn_in;
  const FitResult fr = fit_dataset(ds, opt);

  ojson j;
  j["input"] = graintrack;
  j["burn_in"] = fr.burn_in;
  ojson co;
  co["alpha"] = fr.coarsening.alpha;
  co["pearson_R"] = fr.coarsening.pearson_R;
  co["degenerate"] = fr.coarsening.degenerate;
  j["coarsening"] = co;
  ojson pd;
  pd["value"] = fr.beta_pd.beta;
  pd["degenerate"] = fr.beta_pd.degenerate;
  j["beta_pd"] = pd;
  ojson rd;
  rd["value"] = fr.beta_rd.beta;
  rd["degenerate"] = fr.beta_rd.degenerate;
  j["beta_rd"] = rd;
  ojson series;
  series["n_steps"] = ds.n_steps();
  series["n_intervals"] = fr.series.dS.size();
  series["S_final"] = fr.series.S.empty() ? 0.0 : fr.series.S.back();
  series["floored_mass"] = fr.series.floored_mass;
  series["N_first"] = fr.series.N.empty() ? 0 : fr.series.N.front();
  series["N_last"] = fr.series.N.empty() ? 0 : fr.series.N.back();
  j["series"] = series;

  fs::path out = resolve_out(out_arg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, j.dump(2) + "\n");
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  ojson config;
  config["graintrack"] = graintrack;
  config["burn_in"] = burn_in;
  write_manifest(dir, "fit", config, {graintrack}, {out.filename().string()});
  write_run_log(dir, started, "fit " + out.filename().string());
  std::cout << "fit: wrote " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

void write_coarsening_csv(const fs::path& path, const GrainTrackDataset& ds) {
  std::ostringstream os;
  os << "t,n_grains,mean_area\n";
  for (std::size_t k = 0; k < ds.n_steps(); ++k)
    os << fmt17(ds.times[k]) << ',' << ds.count_at(k) << ','
       << fmt17(ds.mean_area_at(k)) << '\n';
  write_text(path, os.str());
}

void write_topofreq_csv(const fs::path& path, const GrainTrackDataset& ds,
                        const std::vector<double>& times) {
  std::ostringstream os;
  os << "t,side,frequency\n";
  for (double t : times) {
    const std::vector<double> p = topology_frequencies(ds, t);
    for (std::size_t s = 0; s < p.size(); ++s)
      if (p[s] > 0.0) os << fmt17(t) << ',' << s << ',' << fmt17(p[s]) << '\n';
  }
  write_text(path, os.str());
}

void write_area_hist_csv(const fs::path& path, const GrainTrackDataset& ds,
                         double t, int species, int bins) {
  const std::size_t k = ds.step_nearest(t);
  std::vector<double> samples;
  for (const GrainRecord& g : ds.steps[k])
    if (g.sides == species) samples.push_back(g.area);
  std::ostringstream os;
  os << "bin_lo,bin_hi,count\n";
  if (!samples.empty()) {
    const Histogram h = make_histogram(samples, bins, species);
    const double w = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      os << fmt17(h.lo + w * static_cast<double>(b)) << ','
         << fmt17(h.lo + w * static_cast<double>(b + 1)) << ',' << h.counts[b]
         << '\n';
  }
  write_text(path, os.str());
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& times_csv, const std::string& ks_csv,
                int bins, const std::string& out_arg) {
  const std::string started = wall_clock_utc();
  const GrainTrackDataset a = read_graintrack(a_path);
  const GrainTrackDataset b = read_graintrack(b_path);
  const std::vector<double> times = parse_double_list(times_csv, "--times");
  std::vector<int> ks_species;
  for (double v : parse_double_list(ks_csv, "--ks-species"))
    ks_species.push_back(static_cast<int>(v));

  const CompareReport rep = compare_runs(a, b, times, ks_species);

  const fs::path out = resolve_out(out_arg);
  fs::create_directories(out);

  ojson j;
  j["a"] = a_path;
  j["b"] = b_path;
  j["ks_species"] = rep.ks_species;
  ojson rows = ojson::array();
  for (const CompareRow& r : rep.rows) {
    ojson row;
    row["t"] = r.t;
    row["t_a"] = r.t_a;
    row["t_b"] = r.t_b;
    row["tv"] = r.tv;
    ojson ks;
    for (const auto& [sp, d] : r.ks) ks[std::to_string(sp)] = d;
    row["ks"] = ks;
    row["n_a"] = r.n_a;
    row["n_b"] = r.n_b;
    rows.push_back(row);
  }
  j["rows"] = rows;
  write_text(out / "metrics.json", j.dump(2) + "\n");

  write_coarsening_csv(out / "coarsening_a.csv", a);
  write_coarsening_csv(out / "coarsening_b.csv", b);
  write_topofreq_csv(out / "topofreq_a.csv", a, times);
  write_topofreq_csv(out / "topofreq_b.csv", b, times);
  std::vector<std::string> outputs = {"metrics.json", "coarsening_a.csv",
                                      "coarsening_b.csv", "topofreq_a.csv",
                                      "topofreq_b.csv"};
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (int sp : ks_species) {
      char name[64];
      std::snprintf(name, sizeof(name), "areahist_s%d_a_t%02zu.csv", sp, i);
      write_area_hist_csv(out / name, a, times[i], sp, bins);
      outputs.push_back(name);
      std::snprintf(name, sizeof(name), "areahist_s%d_b_t%02zu.csv", sp, i);
      write_area_hist_csv(out / name, b, times[i], sp, bins);
      outputs.push_back(name);
    }
  }

  ojson config;
  config["a"] = a_path;
  config["b"] = b_path;
  config["times"] = times;
  config["ks_species"] = ks_species;
  config["bins"] = bins;
  write_manifest(out, "compare", config, {a_path, b_path}, outputs);
  write_run_log(out, started, "compare rows " + std::to_string(rep.rows.size()));
  std::cout << "compare: wrote " << (out / "metrics.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// topology / validate-preset / gen-weights
// ---------------------------------------------------------------------------

int cmd_topology(int count_k, int enum_k, const std::string& check_preset,
                 const std::string& out_path) {
  ojson j;
  std::string plain;
  if (count_k > 0) {
    const std::uint64_t n = count_trees(count_k);
    j["k"] = count_k;
    j["count"] = n;
    plain = std::to_string(n);
  } else if (enum_k > 0) {
    const std::vector<RootedTree> trees = enumerate_trees(enum_k);
    j["k"] = enum_k;
    j["count"] = trees.size();
    ojson enc = ojson::array();
    for (const RootedTree& t : trees) enc.push_back(t.encoding);
    j["encodings"] = enc;
  } else if (!check_preset.empty()) {
    const ModelPreset preset = load_preset(check_preset);
    const ValidationReport rep = check_matrices_against_rules(preset);
    j["preset"] = check_preset;
    j["ok"] = rep.ok();
    j["violations"] = rep.violations;
  } else {
    throw CLI::ValidationError(
        "topology", "one of --count, --enumerate or --check-preset is required");
  }
  if (!out_path.empty()) {
    fs::path out = resolve_out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, j.dump(2) + "\n");
    std::cout << "topology: wrote " << out.string() << "\n";
  } else if (!plain.empty()) {
    std::cout << plain << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  if (!check_preset.empty() && !j["ok"].get<bool>()) return 3;
  return 0;
}

int cmd_validate_preset(const std::string& preset_arg) {
  const ModelPreset preset = load_preset(preset_arg);
  const ValidationReport rep = validate_preset(preset);
  if (rep.ok()) {
    std::cout << "ok: " << preset_arg << "\n";
    return 0;
  }
  std::cout << rep.to_string();
  return 3;
}

// p file: "label,value" rows; c file: "trigger,label,value" rows. Lines
// starting with '#' and a leading header row are skipped.
std::vector<std::vector<std::string>> read_csv_rows(const std::string& path,
                                                    std::size_t n_fields) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    if (fields.size() != n_fields)
      throw std::invalid_argument(path + ": expected " +
                                  std::to_string(n_fields) + " fields: " + line);
    if (first) {
      first = false;
      try {
        (void)std::stod(fields.back());
      } catch (const std::exception&) {
        continue;  // header row
      }
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no data rows");
  return rows;
}

int cmd_gen_weights(const std::string& p_path, const std::string& c_path,
                    const std::string& donor_arg, int M,
                    const std::string& out_path) {
  std::vector<double> p(static_cast<std::size_t>(M) + 1, 0.0);
  for (const auto& row : read_csv_rows(p_path, 2)) {
    const int label = std::stoi(row[0]);
    if (label < 0 || label > M)
      throw std::invalid_argument("p label out of range: " + row[0]);
    p[label] = std::stod(row[1]);
  }
  std::map<int, std::vector<double>> c_by_trigger;
  for (const auto& row : read_csv_rows(c_path, 3)) {
    const int trigger = std::stoi(row[0]);
    const int label = std::stoi(row[1]);
    if (label < 0 || label > M)
      throw std::invalid_argument("c label out of range: " + row[1]);
    auto& c = c_by_trigger[trigger];
    if (c.empty()) c.assign(static_cast<std::size_t>(M) + 1, 0.0);
    c[label] = std::stod(row[2]);
  }
  std::map<int, int> donor;
  if (!donor_arg.empty()) {
    std::stringstream ss(donor_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("bad donor entry (want l=k): " + tok);
      donor[std::stoi(tok.substr(0, eq))] = std::stoi(tok.substr(eq + 1));
    }
  }
  const WeightTable table = build_correlated_table(p, c_by_trigger, donor);
  ojson weights;
  for (const auto& [trigger, w] : table) {
    ojson row;
    for (int k = 0; k <= M; ++k)
      if (w[k] != 0.0) row[std::to_string(k)] = w[k];
    weights[std::to_string(trigger)] = row;
  }
  ojson j;
  j["M"] = M;
  j["correlated_weights"] = weights;
  const std::string text = j.dump(2) + "\n";
  if (!out_path.empty()) {
    fs::path out = resolve_out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, text);
    std::cout << "gen-weights: wrote " << out.string() << "\n";
  } else {
    std::cout << text;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const SimulateArgs& a, int steps) {
  const std::string started = wall_clock_utc();
  if (steps <= 0) throw std::invalid_argument("--steps must be positive");
  SimulateArgs local = a;
  local.graintrack_dt = a.t_end / static_cast<double>(steps);
  local.log_events = false;
  local.histograms = false;
  const ModelPreset preset = preset_with_overrides(local);
  const fs::path out = resolve_out(local.out);
  fs::create_directories(out);
  const std::vector<ParticleInit> init =
      make_initial_population(preset, local.n0, local.init, local.seed);
  SimConfig cfg;
  cfg.t_end = local.t_end;
  cfg.snapshot_dt = 0.0;
  cfg.graintrack_dt = local.graintrack_dt;
  cfg.log_events = false;
  cfg.record_histograms = false;
  cfg.enforce_zero_defect = local.zero_defect && preset.sides_semantics;
  cfg.seed = local.seed;
  const RunResult res = run(preset, init, cfg);
  write_graintrack(res.track, (out / "graintrack.csv").string());
  ojson config = simulate_config_json(local);
  config["steps"] = steps;
  write_manifest(out, "gen-data", config, {}, {"graintrack.csv"});
  std::ostringstream sum;
  sum << "track_steps " << res.track.n_steps() << " interior_events "
      << res.n_interior_events;
  write_run_log(out, started, sum.str());
  if (res.exhausted_at) {
    std::cout << "model error: selection exhausted at t = "
              << fmt17(*res.exhausted_at) << "\n";
    return 3;
  }
  std::cout << "gen-data: wrote " << (out / "graintrack.csv").string() << "\n";
  return 0;
}

void add_simulate_flags(CLI::App* cmd, SimulateArgs& a, bool with_snapshots) {
  cmd->add_option("--preset", a.preset_arg,
                  "Builtin name (grain15-nd, grain15-pd, grain15-rd, "
                  "two-species-counter) or preset JSON path");
  cmd->add_option("--n0", a.n0, "Initial particle count")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "RNG seed");
  cmd->add_option("--t-end", a.t_end, "End time")->required()->check(CLI::PositiveNumber);
  if (with_snapshots) {
    cmd->add_option("--snapshot-dt", a.snapshot_dt,
                    "Snapshot cadence (0 = initial and final only)");
    cmd->add_option("--graintrack-dt", a.graintrack_dt,
                    "Per-grain tracking cadence (0 = off)");
    cmd->add_option("--ensemble", a.ensemble, "Number of independent replicas")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--histograms,!--no-histograms", a.histograms,
                  "Record per-species size histograms in snapshots");
    cmd->add_flag("--log-events,!--no-log-events", a.log_events,
                  "Write events.csv");
  }
  cmd->add_flag("--zero-defect,!--no-zero-defect", a.zero_defect,
                "Adjust the initial labels to zero total defect");
  cmd->add_option("--init-size-lo", a.init.size_lo, "Initial size lower bound");
  cmd->add_option("--init-size-hi", a.init.size_hi, "Initial size upper bound");
  cmd->add_option("--init-species-weights", a.init.species_weights,
                  "Species sampling weights as label:weight,... (default uniform)");
  cmd->add_option("--edge-mode", a.edge_mode,
                  "Override the preset edge-deletion mode (nd|pd|rd)");
  cmd->add_option("--beta-pd", a.beta_pd, "Override beta_PD");
  cmd->add_option("--alpha", a.alpha, "Override alpha (RD)");
  cmd->add_option("--beta-rd", a.beta_rd, "Override beta_RD");
  cmd->add_option("--out", a.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grainkin: grain-coarsening particle simulator, kinetic solver "
               "and fitting toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read defaults from a config file (flags win)");
  app.set_version_flag("--version", kToolVersion);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Run the particle simulator");
  add_simulate_flags(sim, sim_args, true);

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "Run the kinetic PDE solver");
  solve->add_option("--preset", solve_args.preset_arg, "Preset name or JSON path")
      ->required();
  solve->add_option("--init", solve_args.init_path,
                    "Density spec JSON: list of {species, shape, support, mass}");
  solve->add_option("--dx", solve_args.dx, "Grid spacing (default max|v| * dt)");
  solve->add_option("--dt", solve_args.dt, "Time step")->required();
  solve->add_option("--x-max", solve_args.x_max,
                    "Grid extent (default fits the initial support plus growth)");
  solve->add_option("--t-end", solve_args.t_end, "End time")->required();
  solve->add_option("--flux-path", solve_args.flux_path,
                    "generic | topological | both");
  solve->add_option("--record-every", solve_args.record_every,
                    "Trajectory row cadence in steps");
  solve->add_option("--density-every", solve_args.density_every,
                    "Write density matrices every N steps (0 = initial/final only)");
  solve->add_option("--eps-scale", solve_args.eps_scale,
                    "Blow-up detection threshold scale");
  solve->add_option("--rd-n-ref", solve_args.rd_n_ref,
                    "RD grain-count scale (experimental)");
  solve->add_flag("--allow-fractional-shift", solve_args.allow_fractional,
                  "Permit non-integer cell shifts via linear interpolation");
  solve->add_option("--out", solve_args.out, "Output directory");

  std::string fit_graintrack, fit_out = "fit.json";
  double fit_burn_in = 0.10;
  CLI::App* fit = app.add_subcommand("fit", "Fit model parameters to a grain track");
  fit->add_option("--graintrack", fit_graintrack, "graintrack.csv path")->required();
  fit->add_option("--burn-in", fit_burn_in, "Leading fraction of steps to discard")
      ->check(CLI::Range(0.0, 0.49));
  fit->add_option("--out", fit_out, "Output fit.json path");

  std::string cmp_a, cmp_b, cmp_times, cmp_ks = "5,6,7", cmp_out = "compare-out";
  int cmp_bins = 100;
  CLI::App* cmp = app.add_subcommand("compare", "Compare two grain-track runs");
  cmp->add_option("--a", cmp_a, "First graintrack.csv")->required();
  cmp->add_option("--b", cmp_b, "Second graintrack.csv")->required();
  cmp->add_option("--times", cmp_times, "Comma-separated comparison times")->required();
  cmp->add_option("--ks-species", cmp_ks, "Side counts for the KS columns");
  cmp->add_option("--bins", cmp_bins, "Histogram bin count")->check(CLI::PositiveNumber);
  cmp->add_option("--out", cmp_out, "Output directory");

  int topo_count = 0, topo_enum = 0;
  std::string topo_check, topo_out;
  CLI::App* topo = app.add_subcommand("topology", "Tree counts and rule checks");
  topo->add_option("--count", topo_count, "Print the rooted-tree count for k sides");
  topo->add_option("--enumerate", topo_enum, "Enumerate tree encodings for k sides");
  topo->add_option("--check-preset", topo_check,
                   "Check preset matrices against the coarsening rules");
  topo->add_option("--out", topo_out, "Write the JSON report here instead of stdout");

  SimulateArgs gen_args;
  gen_args.out = "gen-data-out";
  int gen_steps = 200;
  CLI::App* gen = app.add_subcommand("gen-data",
                                     "Generate a synthetic graintrack dataset");
  add_simulate_flags(gen, gen_args, false);
  gen->add_option("--steps", gen_steps, "Number of tracking intervals")
      ->check(CLI::PositiveNumber);

  std::string vp_preset;
  CLI::App* vp = app.add_subcommand("validate-preset", "Validate a model preset");
  vp->add_option("--preset", vp_preset, "Preset name or JSON path")->required();

  std::string gw_p, gw_c, gw_donor, gw_out;
  int gw_M = 15;
  CLI::App* gw = app.add_subcommand("gen-weights",
                                    "Solve correlated selection weights");
  gw->add_option("--p", gw_p, "Topology frequencies CSV (label,value)")->required();
  gw->add_option("--c", gw_c, "Neighbor distributions CSV (trigger,label,value)")
      ->required();
  gw->add_option("--donor", gw_donor, "Donor rows for sparse triggers, e.g. 2=4,3=4");
  gw->add_option("--M", gw_M, "Largest side count")->check(CLI::PositiveNumber);
  gw->add_option("--out", gw_out, "Output weights JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (solve->parsed()) return cmd_solve(solve_args);
    if (fit->parsed()) return cmd_fit(fit_graintrack, fit_burn_in, fit_out);
    if (cmp->parsed())
      return cmd_compare(cmp_a, cmp_b, cmp_times, cmp_ks, cmp_bins, cmp_out);
    if (topo->parsed()) return cmd_topology(topo_count, topo_enum, topo_check, topo_out);
    if (gen->parsed()) return cmd_gen_data(gen_args, gen_steps);
    if (vp->parsed()) return cmd_validate_preset(vp_preset);
    if (gw->parsed()) return cmd_gen_weights(gw_p, gw_c, gw_donor, gw_M, gw_out);
  } catch (const BlowUp& e) {
    std::cout << "model error: blow-up (trigger " << e.trigger
              << ") at t = " << fmt17(e.t_star) << "\n";
    return 3;
  } catch (const SelectionExhausted& e) {
    std::cout << "model error: selection exhausted at t = " << fmt17(e.time)
              << "\n";
    return 3;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

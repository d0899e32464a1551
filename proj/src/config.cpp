#include "rmkv/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmkv/randomize.hpp"
#include "rmkv/rng.hpp"
#include "rmkv/rsde.hpp"
#include "rmkv/sampling.hpp"
#include "rmkv/util.hpp"

namespace rmkv::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kModes = {"rsde", "mkv-direct", "mkv-picard", "randomize", "diagnose", "sweep"};

bool is_mode(const std::string& m) {
  for (const auto& k : kModes)
    if (k == m) return true;
  return false;
}

double jnum(const Json& j, const char* key, double fallback) {
  if (j.contains(key) && j[key].is_number()) return j[key].get<double>();
  return fallback;
}

std::vector<double> jvec(const Json& j, const char* key, std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (j[key].is_number()) return {j[key].get<double>()};
  if (j[key].is_array()) {
    std::vector<double> v;
    for (const auto& x : j[key]) v.push_back(x.get<double>());
    return v;
  }
  return fallback;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << content;
}

}  // namespace

Validation validate(const Json& doc) {
  Validation v;
  auto err = [&](const std::string& m) { v.errors.push_back(m); };
  auto warn = [&](const std::string& m) { v.warnings.push_back(m); };

  if (!doc.is_object()) {
    err("document: must be a JSON object");
    return v;
  }

  ScenarioConfig c;
  Json n;  // normalized

  // mode
  c.mode = doc.value("mode", std::string{});
  if (!is_mode(c.mode)) err("mode: must be one of rsde|mkv-direct|mkv-picard|randomize|diagnose|sweep");
  n["mode"] = c.mode;

  // seed: mandatory, no wall-clock default
  if (!doc.contains("seed") || !doc["seed"].is_number_integer()) {
    err("seed: required integer (runs must be replayable)");
  } else {
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  n["seed"] = c.seed;

  const Json dims = doc.value("dims", Json::object());
  c.d = static_cast<int>(jnum(dims, "d", 1));
  c.e = static_cast<int>(jnum(dims, "e", 1));
  c.eb = static_cast<int>(jnum(dims, "eb", 1));
  if (c.d < 1) err("dims.d: must be >= 1");
  if (c.e < 1) err("dims.e: must be >= 1");
  if (c.eb < 1) err("dims.eb: must be >= 1");
  n["dims"] = {{"d", c.d}, {"e", c.e}, {"eb", c.eb}};

  const Json grid = doc.value("grid", Json::object());
  c.T = jnum(grid, "T", 1.0);
  c.K = static_cast<int>(jnum(grid, "K", 0));
  if (!(c.T > 0.0)) err("grid.T: must be > 0");
  if (c.K < 1) err("grid.K must be ≥ 1");
  n["grid"] = {{"T", c.T}, {"K", c.K}};

  const Json particles = doc.value("particles", Json::object());
  c.N = static_cast<int>(jnum(particles, "N", 1));
  if (c.N < 1) err("particles.N: must be >= 1");
  c.init = particles.value("init", Json{{"kind", "point"}, {"value", 0.0}});
  const std::string init_kind = c.init.value("kind", std::string("point"));
  if (init_kind != "point" && init_kind != "equispaced" && init_kind != "gaussian" && init_kind != "uniform")
    err("particles.init.kind: must be point|equispaced|gaussian|uniform");
  n["particles"] = {{"N", c.N}, {"init", c.init}};

  // kernels: fprime defaults to the zero kernel
  c.kernels = doc.value("kernels", Json::object());
  for (const char* slot : {"b", "sigma", "f", "fprime"}) {
    if (!c.kernels.contains(slot)) c.kernels[slot] = Json{{"id", "zero"}};
    const std::string id = c.kernels[slot].value("id", std::string("zero"));
    bool known = false;
    for (const auto& k : coeffs::kernel_library_ids()) known = known || (k == id);
    if (!known) err(std::string("kernels.") + slot + ".id: unknown kernel '" + id + "'");
    if (!c.kernels[slot].contains("scale")) c.kernels[slot]["scale"] = 1.0;
  }
  n["kernels"] = c.kernels;

  // driver
  c.driver = doc.value("driver", Json::object());
  const std::string dkind = c.driver.value("kind", std::string("ito"));
  if (dkind != "ito" && dkind != "smooth") err("driver.kind: must be ito|smooth");
  if (!c.driver.contains("kind")) c.driver["kind"] = dkind;
  if (!c.driver.contains("sub_resolution")) c.driver["sub_resolution"] = 64;  // default R
  if (c.driver["sub_resolution"].get<int>() < 1) err("driver.sub_resolution: must be >= 1");
  if (dkind == "smooth" && !c.driver.contains("smooth")) c.driver["smooth"] = "sin";
  if (dkind == "smooth") {
    const std::string s = c.driver.value("smooth", std::string("sin"));
    if (s != "sin" && s != "linear" && s != "poly2") err("driver.smooth: must be sin|linear|poly2");
  }
  if (!c.driver.contains("amplitude")) c.driver["amplitude"] = 1.0;
  if (!c.driver.contains("frequency")) c.driver["frequency"] = 1.0;
  n["driver"] = c.driver;

  // analysis parameters; range checks outside the hard domain are warnings
  c.params = doc.value("params", Json::object());
  const double alpha = jnum(c.params, "alpha", 0.45);
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    err("params.alpha: must be in (0,1]");
  } else if (!(alpha > 1.0 / 3.0 && alpha <= 0.5)) {
    warn("params.alpha: outside (1/3, 1/2], diagnostics only");
  }
  const double m = jnum(c.params, "m", 2.0);
  const double p = jnum(c.params, "p", 2.0);
  const std::vector<double> qs = jvec(c.params, "q", {2.0});
  for (double q : qs)
    if (q < 0.0) err("params.q: entries must be >= 0");
  if (m < 2.0) warn("params.m: the analysis assumes m >= 2");
  for (double q : qs)
    if (m < std::max(q, 1.0)) warn("params.m: the analysis assumes m >= q v 1");
  if (p < 1.0 || p > m) warn("params.p: the analysis assumes 1 v q <= p <= m");
  const double gamma = jnum(c.params, "gamma", 3.0);
  if (alpha > 0 && (gamma <= 1.0 / alpha || gamma > 3.0)) warn("params.gamma: the analysis assumes 1/alpha < gamma <= 3");
  c.params["alpha"] = alpha;
  c.params["beta"] = jnum(c.params, "beta", 0.5 * alpha);
  c.params["beta_prime"] = jnum(c.params, "beta_prime", 0.5 * alpha);
  c.params["gamma"] = gamma;
  c.params["m"] = m;
  c.params["p"] = p;
  c.params["q"] = qs;
  n["params"] = c.params;

  c.picard = doc.value("picard", Json::object());
  if (!c.picard.contains("tol")) c.picard["tol"] = 1e-8;
  if (!c.picard.contains("max_iter")) c.picard["max_iter"] = 25;
  if (!c.picard.contains("init")) c.picard["init"] = "frozen-initial";
  if (!(c.picard["tol"].get<double>() > 0.0)) err("picard.tol: must be > 0");
  {
    const std::string pi = c.picard.value("init", std::string("frozen-initial"));
    if (pi != "frozen-initial" && pi != "direct") err("picard.init: must be frozen-initial|direct");
  }
  n["picard"] = c.picard;

  c.randomize = doc.value("randomize", Json::object());
  if (!c.randomize.contains("samples")) c.randomize["samples"] = 8;
  if (!c.randomize.contains("rough_resolution")) c.randomize["rough_resolution"] = 64;
  if (!c.randomize.contains("classical_resolution")) c.randomize["classical_resolution"] = 64;
  if (!c.randomize.contains("r_fine")) c.randomize["r_fine"] = 0;
  if (!c.randomize.contains("phi")) c.randomize["phi"] = Json::array({"tanh_first"});
  if (!c.randomize.contains("time_index")) c.randomize["time_index"] = -1;  // -1: final time
  for (const auto& phi : c.randomize["phi"]) {
    bool known = false;
    for (const auto& k : rnd::test_function_ids()) known = known || (k == phi.get<std::string>());
    if (!known) err("randomize.phi: unknown test function '" + phi.get<std::string>() + "'");
  }
  n["randomize"] = c.randomize;

  c.sweep = doc.value("sweep", Json::object());
  if (c.mode == "sweep") {
    const std::string axis = c.sweep.value("axis", std::string{});
    if (axis != "h" && axis != "eps_xi" && axis != "N") err("sweep.axis: must be h|eps_xi|N");
    if (!c.sweep.contains("values") || !c.sweep["values"].is_array() || c.sweep["values"].empty())
      err("sweep.values: non-empty list required");
    if (!c.sweep.contains("base_mode")) c.sweep["base_mode"] = "mkv-direct";
    if (!c.sweep.contains("analytic")) c.sweep["analytic"] = false;
  }
  n["sweep"] = c.sweep;

  c.probes = doc.value("probes", Json::object());
  if (!c.probes.contains("lo")) c.probes["lo"] = -2.0;
  if (!c.probes.contains("hi")) c.probes["hi"] = 2.0;
  if (!c.probes.contains("resolution")) c.probes["resolution"] = 9;
  if (!c.probes.contains("time_stride")) c.probes["time_stride"] = 8;
  if (!c.probes.contains("atom_stride")) c.probes["atom_stride"] = 16;
  n["probes"] = c.probes;

  c.threads = static_cast<int>(jnum(doc, "threads", 1.0));
  if (const char* env = std::getenv("RMKV_THREADS")) {
    // env var may only cap, never raise
    const int cap = std::atoi(env);
    if (cap >= 1) c.threads = std::min(c.threads, cap);
  }
  if (c.threads < 1) err("threads: must be >= 1");
  n["threads"] = c.threads;

  c.output = doc.value("output", Json::object());
  if (!c.output.contains("dir")) c.output["dir"] = "out";
  if (!c.output.contains("atoms")) c.output["atoms"] = true;
  if (!c.output.contains("trajectories")) c.output["trajectories"] = false;
  if (!c.output.contains("remainders")) c.output["remainders"] = false;
  n["output"] = c.output;

  c.normalized = n;
  v.ok = v.errors.empty();
  if (v.ok) v.config = std::move(c);
  return v;
}

Validation validate_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    Validation v;
    v.errors.push_back("config: cannot open " + path);
    return v;
  }
  Json doc;
  try {
    is >> doc;
  } catch (const std::exception& ex) {
    Validation v;
    v.errors.push_back(std::string("config: JSON parse error: ") + ex.what());
    return v;
  }
  return validate(doc);
}

std::string emit(const ScenarioConfig& cfg) { return cfg.normalized.dump(2) + "\n"; }

std::uint64_t config_hash(const ScenarioConfig& cfg) { return fnv1a64(cfg.normalized.dump()); }

coeffs::CoefficientSet build_coefficients(const ScenarioConfig& cfg) {
  coeffs::CoefficientSet cs;
  cs.d = cfg.d;
  cs.e = cfg.e;
  cs.eb = cfg.eb;
  auto mk = [&](const char* slot, int value_size) {
    const Json& k = cfg.kernels.at(slot);
    return coeffs::make_kernel(k.value("id", std::string("zero")), cfg.d, value_size, k.value("scale", 1.0),
                               jvec(k, "value", {}));
  };
  cs.b = mk("b", cfg.d);
  cs.sigma = mk("sigma", cfg.d * cfg.eb);
  cs.f = mk("f", cfg.d * cfg.e);
  cs.fprime = mk("fprime", cfg.d * cfg.e * cfg.e);
  cs.validate();
  return cs;
}

Mat build_initial_atoms(const ScenarioConfig& cfg) {
  Mat atoms(cfg.N, cfg.d);
  const std::string kind = cfg.init.value("kind", std::string("point"));
  if (kind == "point") {
    const std::vector<double> v = jvec(cfg.init, "value", {0.0});
    for (int j = 0; j < cfg.N; ++j)
      for (int c = 0; c < cfg.d; ++c) atoms(j, c) = v[std::min<std::size_t>(c, v.size() - 1)];
  } else if (kind == "equispaced") {
    const double lo = jnum(cfg.init, "lo", -1.0);
    const double hi = jnum(cfg.init, "hi", 1.0);
    for (int j = 0; j < cfg.N; ++j) {
      const double x = (cfg.N == 1) ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(j) / (cfg.N - 1);
      for (int c = 0; c < cfg.d; ++c) atoms(j, c) = x;
    }
  } else if (kind == "gaussian") {
    const double mean = jnum(cfg.init, "mean", 0.0);
    const double sd = jnum(cfg.init, "sd", 1.0);
    RngStream rng(cfg.seed, StreamKind::initial, 0);
    for (int j = 0; j < cfg.N; ++j)
      for (int c = 0; c < cfg.d; ++c) atoms(j, c) = mean + rng.normal(sd);
  } else if (kind == "uniform") {
    const double lo = jnum(cfg.init, "lo", -1.0);
    const double hi = jnum(cfg.init, "hi", 1.0);
    RngStream rng(cfg.seed, StreamKind::initial, 0);
    for (int j = 0; j < cfg.N; ++j)
      for (int c = 0; c < cfg.d; ++c) atoms(j, c) = lo + (hi - lo) * rng.uniform();
  } else {
    throw std::invalid_argument("unknown init kind: " + kind);
  }
  return atoms;
}

rough::GridRoughPath build_driver(const ScenarioConfig& cfg) {
  const TimeGrid grid = uniform_grid(cfg.T, cfg.K);
  const int R = cfg.driver.value("sub_resolution", 64);
  const double alpha = cfg.params.value("alpha", 0.45);
  const std::vector<double> drift = jvec(cfg.driver, "drift", std::vector<double>(cfg.e, 0.0));

  if (cfg.driver.value("kind", std::string("ito")) == "smooth") {
    const std::string s = cfg.driver.value("smooth", std::string("sin"));
    const double amp = cfg.driver.value("amplitude", 1.0);
    const double freq = cfg.driver.value("frequency", 1.0);
    rough::PathSampler sampler;
    if (s == "sin") {
      sampler = [amp, freq, drift](double t, std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c)
          out[c] = amp * std::sin(freq * t + 0.7 * static_cast<double>(c)) + drift[c] * t;
      };
    } else if (s == "linear") {
      sampler = [amp, drift](double t, std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = amp * static_cast<double>(c + 1) * t + drift[c] * t;
      };
    } else {  // poly2: components t, t^2, ...
      sampler = [amp, drift](double t, std::span<double> out) {
        double pw = t;
        for (std::size_t c = 0; c < out.size(); ++c) {
          out[c] = amp * pw + drift[c] * t;
          pw *= t;
        }
      };
    }
    return rough::lift_smooth(sampler, grid, cfg.e, R, alpha);
  }

  // Ito lift of a Brownian driver (plus optional smooth drift, applied to the
  // sub-increments so the lift sees the shifted path).
  rnd::CommonNoiseTape tape = rnd::sample_common_tape(grid, cfg.e, cfg.seed, 0, R);
  bool has_drift = false;
  for (double v : drift) has_drift = has_drift || v != 0.0;
  if (has_drift) {
    const int K = grid.intervals();
    for (int i = 0; i < K; ++i) {
      const double dsub = grid.dt(i) / R;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < cfg.e; ++c) tape.fine[(static_cast<std::size_t>(i) * R + r) * cfg.e + c] += drift[c] * dsub;
    }
  }
  return rnd::sample_common_lift(tape, R, alpha);
}

diag::StabilityParams build_stability_params(const ScenarioConfig& cfg) {
  diag::StabilityParams sp;
  sp.alpha = cfg.params.value("alpha", 0.45);
  sp.beta = cfg.params.value("beta", 0.225);
  sp.beta_prime = cfg.params.value("beta_prime", 0.225);
  sp.m = cfg.params.value("m", 2.0);
  sp.p = cfg.params.value("p", 2.0);
  sp.probes.lo = cfg.probes.value("lo", -2.0);
  sp.probes.hi = cfg.probes.value("hi", 2.0);
  sp.probes.resolution = cfg.probes.value("resolution", 9);
  sp.probes.time_stride = cfg.probes.value("time_stride", 8);
  sp.probes.atom_stride = cfg.probes.value("atom_stride", 16);
  return sp;
}

namespace {

std::string snapshot_line(double t, const mkv::SnapshotMoments& mom, std::span<const double> qs, const Mat* atoms) {
  std::ostringstream os;
  os << "{\"t\":" << fmt17(t) << ",\"mean\":[" << join17(mom.mean, ",") << "]";
  os << ",\"cov\":[" << join17(mom.covariance.a, ",") << "]";
  os << ",\"moments\":{";
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (i) os << ',';
    os << "\"q=" << fmt17(qs[i]) << "\":" << fmt17(mom.q_moments[i]);
  }
  os << "}";
  if (atoms != nullptr) {
    os << ",\"atoms\":[";
    for (int j = 0; j < atoms->rows; ++j) {
      if (j) os << ',';
      os << '[' << join17(atoms->row(j), ",") << ']';
    }
    os << ']';
  }
  os << "}";
  return os.str();
}

void write_snapshots(const mkv::MkvRun& run, std::span<const double> qs, bool with_atoms, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (int i = 0; i < run.grid.points(); ++i) {
    const mkv::SnapshotMoments mom = mkv::snapshot_moments(run.history[i], qs);
    os << snapshot_line(run.grid.t(i), mom, qs, with_atoms ? &run.history[i] : nullptr) << '\n';
  }
}

void write_particle_trajectories(const mkv::MkvRun& run, const std::string& dir) {
  for (int j = 0; j < run.particles(); ++j) {
    char name[64];
    std::snprintf(name, sizeof(name), "particle_%05d.csv", j);
    std::ofstream os(fs::path(dir) / name, std::ios::binary);
    os << "t";
    for (int c = 0; c < run.d(); ++c) os << ",Y_" << (c + 1);
    os << '\n';
    for (int i = 0; i < run.grid.points(); ++i) {
      os << fmt17(run.grid.t(i));
      for (int c = 0; c < run.d(); ++c) os << ',' << fmt17(run.history[i](j, c));
      os << '\n';
    }
  }
}

mkv::MkvProblem build_problem(const ScenarioConfig& cfg) {
  mkv::MkvProblem prob;
  prob.cs = build_coefficients(cfg);
  prob.rp = build_driver(cfg);
  prob.initial = build_initial_atoms(cfg);
  prob.db = make_brownian_tapes(prob.rp.grid, cfg.eb, cfg.seed, 0, cfg.N);
  prob.threads = cfg.threads;
  return prob;
}

int run_sweep(const ScenarioConfig& cfg, const std::string& dir);

}  // namespace

int run(const ScenarioConfig& cfg, std::string out_dir) {
  if (out_dir.empty()) out_dir = cfg.output.value("dir", std::string("out"));
  fs::create_directories(out_dir);
  const auto t_start = std::chrono::steady_clock::now();

  Json manifest;
  manifest["mode"] = cfg.mode;
  manifest["seed"] = cfg.seed;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  manifest["config_hash"] = hash_hex;
  manifest["version"] = "rmkv 1.0";
  Json outputs = Json::array();
  std::string status = "ok";

  write_file((fs::path(out_dir) / "config.json").string(), emit(cfg));
  outputs.push_back("config.json");

  const std::vector<double> qs = [&] {
    std::vector<double> v;
    for (const auto& q : cfg.params["q"]) v.push_back(q.get<double>());
    return v;
  }();

  int code = 0;
  try {
    if (cfg.mode == "sweep") {
      code = run_sweep(cfg, out_dir);
      outputs.push_back("sweep.csv");
    } else if (cfg.mode == "randomize") {
      const coeffs::CoefficientSet cs = build_coefficients(cfg);
      const Mat initial = build_initial_atoms(cfg);
      const TimeGrid grid = uniform_grid(cfg.T, cfg.K);
      rnd::RandomizationConfig rc;
      rc.samples = cfg.randomize.value("samples", 8);
      rc.rough_resolution = cfg.randomize.value("rough_resolution", 64);
      rc.classical_resolution = cfg.randomize.value("classical_resolution", 64);
      rc.r_fine = cfg.randomize.value("r_fine", 0);
      rc.master_seed = cfg.seed;
      const rnd::RandomizationRun rr = rnd::run_randomization(cs, initial, grid, rc, cfg.threads);

      int ti = cfg.randomize.value("time_index", -1);
      if (ti < 0) ti = cfg.K;
      std::ofstream os(fs::path(out_dir) / "law_compare.jsonl", std::ios::binary);
      std::ostringstream summary;
      summary << "{\n";
      bool first_phi = true;
      for (const auto& phi_id : cfg.randomize["phi"]) {
        const rnd::TestFunction phi = rnd::make_test_function(phi_id.get<std::string>());
        const rnd::LawComparison lc = rnd::conditional_law_compare(rr.rough_runs, rr.classical_runs, phi, ti);
        for (const auto& s : lc.samples) {
          os << "{\"sample\":" << s.sample << ",\"t\":" << fmt17(grid.t(ti)) << ",\"phi_id\":\""
             << phi_id.get<std::string>() << "\",\"rough_mean\":" << fmt17(s.rough_mean)
             << ",\"classical_mean\":" << fmt17(s.classical_mean) << ",\"delta\":" << fmt17(s.delta) << "}\n";
        }
        if (!first_phi) summary << ",\n";
        first_phi = false;
        summary << "  \"" << phi_id.get<std::string>() << "\": {\"max_delta\": " << fmt17(lc.max_delta)
                << ", \"mean_delta\": " << fmt17(lc.mean_delta) << "}";
      }
      summary << "\n}\n";
      write_file((fs::path(out_dir) / "summary.json").string(), summary.str());
      outputs.push_back("law_compare.jsonl");
      outputs.push_back("summary.json");
    } else if (cfg.mode == "rsde") {
      // Frozen-law solve: the measure argument stays at the initial cloud,
      // the per-particle equations decouple.
      mkv::MkvProblem prob = build_problem(cfg);
      rough::save_text(prob.rp, (fs::path(out_dir) / "roughpath.txt").string());
      outputs.push_back("roughpath.txt");
      coeffs::EmpiricalMeasure law(prob.initial);
      Mat states = prob.initial;
      mkv::MkvRun run_out;
      run_out.grid = prob.rp.grid;
      run_out.driver = prob.rp;
      run_out.history.push_back(states);
      for (int i = 0; i < cfg.K; ++i) {
        mkv::step_particles(states, law, prob, i);
        run_out.history.push_back(states);
      }
      write_snapshots(run_out, qs, cfg.output.value("atoms", true), (fs::path(out_dir) / "snapshots.jsonl").string());
      outputs.push_back("snapshots.jsonl");
      if (cfg.output.value("trajectories", false)) {
        write_particle_trajectories(run_out, out_dir);
        outputs.push_back("particle_*.csv");
      }
      if (cfg.output.value("remainders", false)) {
        // pairwise controlled-path remainders R_{i,j} = dY_{i,j} - f(Y_i) dX_{i,j}
        std::ofstream ros(fs::path(out_dir) / "remainders.jsonl", std::ios::binary);
        std::vector<double> fv(static_cast<std::size_t>(cfg.d) * cfg.e);
        for (int p = 0; p < cfg.N; ++p) {
          for (int i = 0; i <= cfg.K; ++i) {
            coeffs::eval_field(prob.cs.f, run_out.grid.t(i), run_out.history[i].row(p), law, fv);
            for (int j = i + 1; j <= cfg.K; ++j) {
              const std::vector<double> dx = prob.rp.increment(i, j);
              std::vector<double> r(cfg.d);
              for (int c = 0; c < cfg.d; ++c) {
                r[c] = run_out.history[j](p, c) - run_out.history[i](p, c);
                for (int a = 0; a < cfg.e; ++a) r[c] -= fv[static_cast<std::size_t>(c) * cfg.e + a] * dx[a];
              }
              ros << "{\"particle\":" << p << ",\"i\":" << i << ",\"j\":" << j << ",\"s\":" << fmt17(run_out.grid.t(i))
                  << ",\"t\":" << fmt17(run_out.grid.t(j)) << ",\"r\":[" << join17(r, ",") << "]}\n";
            }
          }
        }
        outputs.push_back("remainders.jsonl");
      }
    } else {  // mkv-direct | mkv-picard | diagnose
      mkv::MkvProblem prob = build_problem(cfg);
      rough::save_text(prob.rp, (fs::path(out_dir) / "roughpath.txt").string());
      outputs.push_back("roughpath.txt");

      mkv::MkvRun run_out;
      if (cfg.mode == "mkv-picard") {
        const auto init = cfg.picard.value("init", std::string("frozen-initial")) == "direct"
                              ? mkv::PicardInit::direct
                              : mkv::PicardInit::frozen_initial;
        auto [r, st] = mkv::simulate_picard(prob, cfg.picard.value("tol", 1e-8), cfg.picard.value("max_iter", 25), init);
        run_out = std::move(r);
        std::ostringstream pj;
        pj << "{\n  \"iterations\": " << st.iterations << ",\n  \"converged\": "
           << (st.converged ? "true" : "false") << ",\n  \"distances\": [" << join17(st.distances, ", ")
           << "],\n  \"ratios\": [" << join17(st.ratios, ", ") << "]\n}\n";
        write_file((fs::path(out_dir) / "picard.json").string(), pj.str());
        outputs.push_back("picard.json");
        if (!st.converged) status = "picard_not_converged";
      } else {
        run_out = mkv::simulate_direct(prob);
      }

      write_snapshots(run_out, qs, cfg.output.value("atoms", true), (fs::path(out_dir) / "snapshots.jsonl").string());
      outputs.push_back("snapshots.jsonl");
      if (cfg.output.value("trajectories", false)) {
        write_particle_trajectories(run_out, out_dir);
        outputs.push_back("particle_*.csv");
      }
      if (cfg.mode == "diagnose") {
        const diag::RunDiagnostics dg =
            diag::diagnose_run(run_out, prob.cs, cfg.params.value("alpha", 0.45), cfg.params.value("beta", 0.225),
                               cfg.params.value("m", 2.0), qs);
        write_file((fs::path(out_dir) / "diagnostics.json").string(), dg.to_json());
        outputs.push_back("diagnostics.json");
      }
    }
  } catch (const rsde::BlowupError& ex) {
    status = std::string("numerical_abort: ") + ex.what();
    code = 3;
  }

  const auto t_end = std::chrono::steady_clock::now();
  manifest["wall_time_s"] = std::chrono::duration<double>(t_end - t_start).count();
  manifest["outputs"] = outputs;
  manifest["status"] = status;
  manifest["partial"] = (code != 0);
  write_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return code;
}

namespace {

// Closed-form reference for the sweep's analytic mode: the linear scalar
// equation dY = Y dX with geometric driver has Y_T = Y_0 exp(dX_{0,T}).
double linear_rde_error(const ScenarioConfig& cfg, int K) {
  ScenarioConfig c = cfg;
  c.K = K;
  rough::GridRoughPath rp = build_driver(c);
  rsde::FrozenFields fields;
  fields.d = 1;
  fields.e = 1;
  fields.eb = 1;
  fields.b = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  fields.sigma = fields.b;
  fields.f = [](double, std::span<const double> y, std::span<double> out) { out[0] = y[0]; };
  fields.g = fields.f;
  Mat db(K, 1);
  const std::vector<double> y0 = {1.0};
  const rsde::Trajectory traj = rsde::solve_rsde(fields, y0, rp, db);
  const double exact = std::exp(rp.x(K, 0) - rp.x(0, 0));
  return std::abs(traj.states(K, 0) - exact);
}

int run_sweep(const ScenarioConfig& cfg, const std::string& dir) {
  const std::string axis = cfg.sweep.value("axis", std::string("h"));
  std::ofstream os(fs::path(dir) / "sweep.csv", std::ios::binary);

  if (axis == "h") {
    const bool analytic = cfg.sweep.value("analytic", false);
    os << "K,h,error\n";
    std::vector<int> ks;
    for (const auto& v : cfg.sweep["values"]) ks.push_back(v.get<int>());
    if (analytic) {
      for (int K : ks) os << K << ',' << fmt17(cfg.T / K) << ',' << fmt17(linear_rde_error(cfg, K)) << '\n';
    } else {
      // self-convergence against the finest level at the final time
      std::vector<Mat> finals;
      int k_max = 0;
      for (int K : ks) k_max = std::max(k_max, K);
      auto run_at = [&](int K) {
        ScenarioConfig c = cfg;
        c.K = K;
        c.normalized["grid"]["K"] = K;
        mkv::MkvProblem prob = build_problem(c);
        return mkv::simulate_direct(prob).history.back();
      };
      const Mat ref = run_at(k_max);
      for (int K : ks) {
        const Mat fin = run_at(K);
        double err = 0.0;
        for (int j = 0; j < fin.rows; ++j) err = std::max(err, dist2(fin.row(j), ref.row(j)));
        os << K << ',' << fmt17(cfg.T / K) << ',' << fmt17(err) << '\n';
      }
    }
    return 0;
  }

  if (axis == "eps_xi") {
    // Coupled initial-condition perturbation sweep; one stability row per eps.
    os << "eps";
    bool header_done = false;
    const diag::StabilityParams sp = build_stability_params(cfg);
    mkv::MkvProblem base = build_problem(cfg);
    const mkv::MkvRun run_a = mkv::simulate_direct(base);
    const coeffs::CoefficientSet cs = base.cs;
    for (const auto& v : cfg.sweep["values"]) {
      const double eps = v.get<double>();
      mkv::MkvProblem pert = base;
      for (int j = 0; j < pert.initial.rows; ++j) pert.initial(j, 0) += eps;
      const mkv::MkvRun run_b = mkv::simulate_direct(pert);
      const diag::StabilityReport rep = diag::stability_report(run_a, cs, run_b, cs, sp);
      if (!header_done) {
        for (const auto& [key, val] : rep.as_map()) {
          (void)val;
          os << ',' << key;
        }
        os << '\n';
        header_done = true;
      }
      os << fmt17(eps);
      for (const auto& [key, val] : rep.as_map()) {
        (void)key;
        os << ',' << fmt17(val);
      }
      os << '\n';
    }
    return 0;
  }

  // axis == "N": final-time summary per particle count
  os << "N,mean_1,q2_norm\n";
  for (const auto& v : cfg.sweep["values"]) {
    ScenarioConfig c = cfg;
    c.N = v.get<int>();
    c.normalized["particles"]["N"] = c.N;
    mkv::MkvProblem prob = build_problem(c);
    const mkv::MkvRun r = mkv::simulate_direct(prob);
    const std::vector<double> q2 = {2.0};
    const mkv::SnapshotMoments mom = mkv::snapshot_moments(r.history.back(), q2);
    os << c.N << ',' << fmt17(mom.mean[0]) << ',' << fmt17(mom.q_moments[0]) << '\n';
  }
  return 0;
}

}  // namespace

diag::StabilityReport compare_runs(const std::string& dir_a, const std::string& dir_b,
                                   const diag::StabilityParams& params) {
  auto load_run = [](const std::string& dir) {
    Validation v = validate_file((fs::path(dir) / "config.json").string());
    if (!v.ok) throw std::runtime_error("compare: invalid config in " + dir);
    mkv::MkvRun run;
    run.driver = rough::load_text((fs::path(dir) / "roughpath.txt").string());
    run.grid = run.driver.grid;

    std::ifstream is(fs::path(dir) / "snapshots.jsonl");
    if (!is) throw std::runtime_error("compare: missing snapshots.jsonl in " + dir);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const Json snap = Json::parse(line);
      if (!snap.contains("atoms")) throw std::runtime_error("compare: snapshots lack atoms (set output.atoms=true)");
      const auto& atoms = snap["atoms"];
      Mat m(static_cast<int>(atoms.size()), static_cast<int>(atoms[0].size()));
      for (int j = 0; j < m.rows; ++j)
        for (int c = 0; c < m.cols; ++c) m(j, c) = atoms[j][c].get<double>();
      run.history.push_back(std::move(m));
    }
    if (static_cast<int>(run.history.size()) != run.grid.points())
      throw std::runtime_error("compare: snapshot count does not match grid in " + dir);
    return std::pair{std::move(run), build_coefficients(v.config)};
  };

  auto [run_a, cs_a] = load_run(dir_a);
  auto [run_b, cs_b] = load_run(dir_b);
  return diag::stability_report(run_a, cs_a, run_b, cs_b, params);
}

}  // namespace rmkv::cli

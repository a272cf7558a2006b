#include "relaxlab/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace relaxlab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --- configuration ----------------------------------------------------------

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw ConfigError("field '" + field + "': " + what);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) bad(join(path, key), "unknown key");
  }
}

double number(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) bad(join(path, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad(join(path, key), "must be finite");
  return x;
}

double positive(const json& j, const std::string& path, const char* key, double fallback) {
  const double x = number(j, path, key, fallback);
  if (!(x > 0.0)) bad(join(path, key), "must be positive");
  return x;
}

long integer(const json& j, const std::string& path, const char* key, long fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) bad(join(path, key), "expected an integer");
  return v.get<long>();
}

bool boolean(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) bad(join(path, key), "expected true or false");
  return v.get<bool>();
}

std::string string(const json& j, const std::string& path, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) bad(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::vector<double> numbers(const json& v, const std::string& field) {
  if (!v.is_array()) bad(field, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) bad(field, "expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Point point(const json& v, const std::string& field, int n) {
  const auto xs = numbers(v, field);
  if (static_cast<int>(xs.size()) != n) bad(field, "expected " + std::to_string(n) + " coordinates");
  Point p(n);
  for (int d = 0; d < n; ++d) p[d] = xs[d];
  return p;
}

Vec vec(const json& v, const std::string& field) {
  const auto xs = numbers(v, field);
  if (xs.empty() || static_cast<int>(xs.size()) > kMaxTarget) bad(field, "expected 1 to 5 components");
  Vec out(static_cast<int>(xs.size()));
  for (std::size_t c = 0; c < xs.size(); ++c) out[static_cast<int>(c)] = xs[c];
  return out;
}

SolverConfig parse_solver(const json& j, const std::string& path, SolverConfig s) {
  check_object(j, path, {"method", "max_iters", "grad_tol", "min_step", "max_step"});
  const std::string method = string(j, path, "method", "barzilai_borwein");
  if (method == "barzilai_borwein")
    s.method = DescentMethod::barzilai_borwein;
  else if (method == "preconditioned")
    s.method = DescentMethod::preconditioned;
  else
    bad(join(path, "method"), "expected 'barzilai_borwein' or 'preconditioned'");
  const long iters = integer(j, path, "max_iters", s.max_iters);
  if (iters < 1 || iters > 100000000) bad(join(path, "max_iters"), "must be between 1 and 1e8");
  s.max_iters = static_cast<int>(iters);
  s.grad_tol = positive(j, path, "grad_tol", s.grad_tol);
  s.min_step = positive(j, path, "min_step", s.min_step);
  s.max_step = positive(j, path, "max_step", s.max_step);
  if (!(s.max_step > s.min_step)) bad(join(path, "max_step"), "must exceed min_step");
  return s;
}

}  // namespace

RunConfig parse_config(const json& root) {
  check_object(root, "", {"potential", "domain", "boundary", "schedule", "solver", "limit", "diagnostics", "fast",
                          "time_budget_s", "output_dir", "seed", "description"});
  RunConfig cfg;
  for (const char* key : {"potential", "domain", "boundary", "schedule"})
    if (!root.contains(key)) bad(key, "missing");

  const json& pj = root.at("potential");
  check_object(pj, "potential", {"name", "k", "a", "b2", "c2"});
  cfg.potential.name = string(pj, "potential", "name", "");
  if (cfg.potential.name == "ginzburg_landau") {
    const long k = integer(pj, "potential", "k", 3);
    if (k < 1 || k > kMaxTarget) bad("potential.k", "must be between 1 and 5");
    cfg.potential.k = static_cast<int>(k);
  } else if (cfg.potential.name == "landau_de_gennes") {
    cfg.potential.k = 5;
    cfg.potential.a = number(pj, "potential", "a", cfg.potential.a);
    cfg.potential.b2 = number(pj, "potential", "b2", cfg.potential.b2);
    cfg.potential.c2 = number(pj, "potential", "c2", cfg.potential.c2);
    if (cfg.potential.a > 0.0) bad("potential.a", "must be <= 0");
    if (!(cfg.potential.b2 > 0.0)) bad("potential.b2", "must be positive");
    if (!(cfg.potential.c2 > 0.0)) bad("potential.c2", "must be positive");
  } else {
    bad("potential.name", "expected 'ginzburg_landau' or 'landau_de_gennes'");
  }

  const json& dj = root.at("domain");
  check_object(dj, "domain", {"kind", "dimension", "center", "radius", "lo", "hi", "h", "signed_distance"});
  DomainConfig& d = cfg.domain;
  d.kind = string(dj, "domain", "kind", "ball");
  const long dim = integer(dj, "domain", "dimension", 3);
  if (dim != 2 && dim != 3) bad("domain.dimension", "must be 2 or 3");
  d.dimension = static_cast<int>(dim);
  d.h = positive(dj, "domain", "h", d.h);
  if (d.kind == "ball") {
    d.center = dj.contains("center") ? point(dj.at("center"), "domain.center", d.dimension) : Point(Point::Zero(d.dimension));
    d.radius = positive(dj, "domain", "radius", 1.0);
  } else if (d.kind == "box" || d.kind == "mask") {
    if (!dj.contains("lo") || !dj.contains("hi")) bad("domain", "box and mask domains need 'lo' and 'hi'");
    d.lo = point(dj.at("lo"), "domain.lo", d.dimension);
    d.hi = point(dj.at("hi"), "domain.hi", d.dimension);
    for (int a = 0; a < d.dimension; ++a)
      if (!(d.hi[a] > d.lo[a])) bad("domain.hi", "must exceed 'lo' on every axis");
    d.center = 0.5 * (d.lo + d.hi);
    d.radius = 0.5 * (d.hi - d.lo).minCoeff();
    if (d.kind == "mask") {
      if (!dj.contains("signed_distance")) bad("domain.signed_distance", "missing for a mask domain");
      d.signed_distance = numbers(dj.at("signed_distance"), "domain.signed_distance");
    }
  } else {
    bad("domain.kind", "expected 'ball', 'box' or 'mask'");
  }
  if (d.kind != "mask" && dj.contains("signed_distance")) bad("domain.signed_distance", "only valid for mask domains");

  const json& bj = root.at("boundary");
  check_object(bj, "boundary", {"name", "value", "points", "values"});
  cfg.boundary.name = string(bj, "boundary", "name", "");
  if (cfg.boundary.name == "equator-constant") {
    if (bj.contains("value")) {
      cfg.boundary.value = vec(bj.at("value"), "boundary.value");
      if (cfg.boundary.value.size() != cfg.potential.k) bad("boundary.value", "length must equal the target dimension");
    }
  } else if (cfg.boundary.name == "table") {
    if (!bj.contains("points") || !bj.contains("values")) bad("boundary", "table data needs 'points' and 'values'");
    if (!bj.at("points").is_array() || !bj.at("values").is_array() || bj.at("points").size() != bj.at("values").size() ||
        bj.at("points").empty())
      bad("boundary.points", "'points' and 'values' must be nonempty arrays of equal length");
    for (std::size_t i = 0; i < bj.at("points").size(); ++i) {
      const std::string at = "[" + std::to_string(i) + "]";
      cfg.boundary.points.push_back(point(bj.at("points")[i], "boundary.points" + at, d.dimension));
      cfg.boundary.values.push_back(vec(bj.at("values")[i], "boundary.values" + at));
      if (cfg.boundary.values.back().size() != cfg.potential.k)
        bad("boundary.values" + at, "length must equal the target dimension");
    }
  } else if (cfg.boundary.name != "hedgehog") {
    bad("boundary.name", "expected 'hedgehog', 'equator-constant' or 'table'");
  }

  const json& sj = root.at("schedule");
  check_object(sj, "schedule", {"eps", "warm_start"});
  if (!sj.contains("eps")) bad("schedule.eps", "missing");
  cfg.schedule.eps = numbers(sj.at("eps"), "schedule.eps");
  cfg.schedule.warm_start = boolean(sj, "schedule", "warm_start", true);
  try {
    cfg.schedule.validate();
  } catch (const ConfigError& e) {
    bad("schedule.eps", e.what());
  }

  if (root.contains("solver")) cfg.solver = parse_solver(root.at("solver"), "solver", cfg.solver);
  if (root.contains("limit")) cfg.limit = parse_solver(root.at("limit"), "limit", cfg.limit);
  cfg.limit.record_trace = false;

  if (root.contains("diagnostics")) {
    const json& g = root.at("diagnostics");
    const std::string p = "diagnostics";
    check_object(g, p,
                 {"centers", "rho_max", "k_grid", "tolerance", "compact", "singular", "bochner_delta", "lemma_alpha",
                  "witness", "refinement", "stress_sweep", "restart_probes", "replay_check", "gradient_samples",
                  "hypothesis_samples"});
    DiagnosticsConfig& dc = cfg.diagnostics;
    if (g.contains("centers")) {
      const json& c = g.at("centers");
      if (c.is_string()) {
        if (c.get<std::string>() != "auto") bad("diagnostics.centers", "expected 'auto' or a list of points");
      } else {
        if (!c.is_array() || c.empty()) bad("diagnostics.centers", "expected 'auto' or a nonempty list of points");
        std::vector<Point> pts;
        for (std::size_t i = 0; i < c.size(); ++i)
          pts.push_back(point(c[i], "diagnostics.centers[" + std::to_string(i) + "]", d.dimension));
        dc.centers = std::move(pts);
      }
    }
    dc.rho_max = positive(g, p, "rho_max", dc.rho_max);
    if (g.contains("k_grid")) {
      const json& k = g.at("k_grid");
      check_object(k, "diagnostics.k_grid", {"min", "ratio", "max"});
      dc.k_grid.min = positive(k, "diagnostics.k_grid", "min", dc.k_grid.min);
      dc.k_grid.ratio = positive(k, "diagnostics.k_grid", "ratio", dc.k_grid.ratio);
      dc.k_grid.max = positive(k, "diagnostics.k_grid", "max", dc.k_grid.max);
      if (!(dc.k_grid.ratio > 1.0)) bad("diagnostics.k_grid.ratio", "must exceed 1");
      if (!(dc.k_grid.max >= dc.k_grid.min)) bad("diagnostics.k_grid.max", "must be at least 'min'");
    }
    dc.tolerance = positive(g, p, "tolerance", dc.tolerance);
    if (g.contains("compact")) {
      const json& c = g.at("compact");
      check_object(c, "diagnostics.compact", {"inner", "outer"});
      dc.compact_inner = number(c, "diagnostics.compact", "inner", dc.compact_inner);
      dc.compact_outer = positive(c, "diagnostics.compact", "outer", dc.compact_outer);
      if (dc.compact_inner < 0.0 || !(dc.compact_outer > dc.compact_inner))
        bad("diagnostics.compact", "need 0 <= inner < outer");
    }
    if (g.contains("singular")) {
      const json& s = g.at("singular");
      check_object(s, "diagnostics.singular", {"theta", "scale"});
      dc.singular_theta = positive(s, "diagnostics.singular", "theta", dc.singular_theta);
      dc.singular_scale = positive(s, "diagnostics.singular", "scale", dc.singular_scale);
    }
    if (g.contains("bochner_delta")) dc.bochner_delta = positive(g, p, "bochner_delta", 0.5);
    dc.lemma_alpha = positive(g, p, "lemma_alpha", dc.lemma_alpha);
    if (g.contains("witness")) {
      const json& w = g.at("witness");
      check_object(w, "diagnostics.witness", {"radius", "spacing", "percentile"});
      dc.witness_radius = positive(w, "diagnostics.witness", "radius", dc.witness_radius);
      dc.witness_spacing = positive(w, "diagnostics.witness", "spacing", dc.witness_spacing);
      dc.witness_percentile = positive(w, "diagnostics.witness", "percentile", dc.witness_percentile);
      if (dc.witness_percentile > 1.0) bad("diagnostics.witness.percentile", "must lie in (0, 1]");
    }
    dc.refinement = boolean(g, p, "refinement", dc.refinement);
    if (g.contains("stress_sweep")) {
      dc.stress_sweep = numbers(g.at("stress_sweep"), "diagnostics.stress_sweep");
      if (dc.stress_sweep.size() < 2) bad("diagnostics.stress_sweep", "needs at least two tolerances");
      for (std::size_t i = 0; i < dc.stress_sweep.size(); ++i)
        if (!(dc.stress_sweep[i] > 0.0) || (i > 0 && !(dc.stress_sweep[i] < dc.stress_sweep[i - 1])))
          bad("diagnostics.stress_sweep", "must be positive and strictly decreasing");
    }
    const long probes = integer(g, p, "restart_probes", dc.restart_probes);
    if (probes < 0 || probes > 100) bad("diagnostics.restart_probes", "must be between 0 and 100");
    dc.restart_probes = static_cast<int>(probes);
    dc.replay_check = boolean(g, p, "replay_check", dc.replay_check);
    const long gs = integer(g, p, "gradient_samples", dc.gradient_samples);
    if (gs < 1) bad("diagnostics.gradient_samples", "must be >= 1");
    dc.gradient_samples = static_cast<int>(gs);
    const long hs = integer(g, p, "hypothesis_samples", dc.hypothesis_samples);
    if (hs < 100) bad("diagnostics.hypothesis_samples", "must be >= 100");
    dc.hypothesis_samples = static_cast<int>(hs);
  }

  if (root.contains("fast")) {
    const json& f = root.at("fast");
    check_object(f, "fast", {"h", "time_budget_s"});
    cfg.fast_h = positive(f, "fast", "h", cfg.fast_h);
    cfg.fast_time_budget = positive(f, "fast", "time_budget_s", cfg.fast_time_budget);
  }
  cfg.time_budget = positive(root, "", "time_budget_s", cfg.time_budget);
  cfg.output_dir = string(root, "", "output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) bad("output_dir", "must not be empty");
  const long seed = integer(root, "", "seed", 0);
  if (seed < 0) bad("seed", "must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.solver.seed = cfg.seed;
  cfg.limit.seed = cfg.seed;
  if (root.contains("description") && !root.at("description").is_string()) bad("description", "expected a string");
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line and column
    const std::size_t at = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n');
    const auto nl = text.rfind('\n', at == 0 ? 0 : at - 1);
    const auto col = at - (nl == std::string::npos ? 0 : nl + 1) + 1;
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
  return parse_config(j);
}

std::shared_ptr<const Potential> build_potential(const PotentialConfig& cfg) {
  if (cfg.name == "ginzburg_landau") return make_ginzburg_landau(cfg.k);
  if (cfg.name == "landau_de_gennes") return make_landau_de_gennes(cfg.a, cfg.b2, cfg.c2);
  throw ConfigError("field 'potential.name': unknown potential '" + cfg.name + "'");
}

std::shared_ptr<const DomainSpec> build_domain(const DomainConfig& cfg, double h) {
  DomainRequest req;
  if (cfg.kind == "ball") {
    req.shape = BallShape{cfg.center, cfg.radius};
    req.grid = ball_grid(cfg.center, cfg.radius, h);
  } else if (cfg.kind == "box") {
    req.shape = BoxShape{cfg.lo, cfg.hi};
    req.grid = box_grid(cfg.lo, cfg.hi, h);
  } else {
    req.grid = box_grid(cfg.lo, cfg.hi, h);
    req.shape = MaskShape{cfg.signed_distance};
  }
  return build_domain(req);
}

BoundaryData build_boundary(const BoundaryConfig& cfg, const Potential& p, const DomainConfig& dom) {
  if (cfg.name == "hedgehog") {
    if (p.manifold().tag() == "sphere" && p.dim() != dom.dimension)
      throw ConfigError("field 'boundary.name': hedgehog data needs potential.k equal to domain.dimension");
    if (p.manifold().tag() == "uniaxial" && dom.dimension != 3)
      throw ConfigError("field 'boundary.name': uniaxial hedgehog data needs a 3-dimensional domain");
    return hedgehog_boundary(p, dom.center);
  }
  if (cfg.name == "equator-constant") {
    Vec v = cfg.value;
    if (v.size() == 0) {
      Rng rng(0);
      v = p.manifold().tag() == "sphere" ? Vec(Vec::Unit(p.dim(), 0)) : p.manifold().sample(rng);
      if (p.manifold().tag() == "uniaxial")
        v = dynamic_cast<const UniaxialManifold&>(p.manifold()).uniaxial(Eigen::Vector3d(1.0, 0.0, 0.0));
    }
    return constant_boundary(p, v);
  }
  return table_boundary(p, cfg.points, cfg.values);
}

std::vector<Point> diagnostic_centers(const RunConfig& cfg, const DomainSpec& dom) {
  if (cfg.diagnostics.centers) return *cfg.diagnostics.centers;
  if (cfg.domain.kind == "ball") return default_ball_centers(cfg.domain.center, cfg.domain.radius, dom.n());
  // box or mask: centre, half-way points and face/edge points of the bounding box
  std::vector<Point> out{cfg.domain.center};
  const Point half = 0.5 * (cfg.domain.hi - cfg.domain.lo);
  for (double frac : {0.5, 1.0})
    for (int d = 0; d < dom.n(); ++d)
      for (int s : {-1, 1}) {
        Point x = cfg.domain.center;
        x[d] += s * frac * half[d];
        out.push_back(x);
      }
  for (int mask = 0; mask < (1 << dom.n()); ++mask) {
    Point x = cfg.domain.center;
    for (int d = 0; d < dom.n(); ++d) x[d] += ((mask >> d) & 1 ? 1.0 : -1.0) * half[d];
    out.push_back(x);
  }
  return out;
}

// --- run ----------------------------------------------------------------------

namespace {

class Clock {
public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

class Csv {
public:
  explicit Csv(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }
  Csv& operator<<(double v) {
    sep();
    out_ << format_number(v);
    return *this;
  }
  Csv& operator<<(Index v) {
    sep();
    out_ << v;
    return *this;
  }
  Csv& operator<<(int v) { return *this << static_cast<Index>(v); }
  void end() {
    out_ << '\n';
    fresh_ = true;
  }
  std::string str() const { return out_.str(); }
  void save(const fs::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << out_.str();
  }

private:
  void sep() {
    if (!fresh_) out_ << ',';
    fresh_ = false;
  }
  std::ostringstream out_;
  bool fresh_ = true;
};

std::string trace_csv(const ConvergenceRecord& rec) {
  Csv csv{"iter", "energy", "dirichlet_part", "potential_part", "grad_norm", "pde_residual"};
  for (const auto& r : rec.trace) {
    csv << r.iter << r.energy << r.dirichlet << r.potential << r.grad_norm << r.pde_residual;
    csv.end();
  }
  return csv.str();
}

void log(const RunOptions& opts, const std::string& msg) {
  if (!opts.quiet) std::cerr << "[relaxlab] " << msg << '\n';
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

/// Profiles of every center at one stage.
std::vector<Profile> stage_profiles(const Field& u, double eps, const Potential& p, std::span<const Point> centers,
                                    std::span<const double> rho, const DomainSpec& dom) {
  const auto cells = cell_energy_density(u, &p, eps);
  std::vector<Profile> out(centers.size());
  const Index count = static_cast<Index>(centers.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (Index c = 0; c < count; ++c) {
    Profile& pr = out[c];
    pr.center_id = static_cast<int>(c);
    pr.center = centers[c];
    pr.boundary_touching = std::abs(dom.signed_distance(centers[c])) <= 1e-9;
    pr.rho.assign(rho.begin(), rho.end());
    pr.phi = renormalized_profile(dom, cells, centers[c], rho);
  }
  return out;
}

/// Random tube points around N: base point plus a normal offset below delta.
double normal_form_defect(const Potential& p, int samples, std::uint64_t seed) {
  Rng rng(seed);
  const VacuumManifold& m = p.manifold();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec q = m.sample(rng);
    const Mat basis = m.normal_basis(q);
    Vec xi = Vec::Zero(p.dim());
    for (int c = 0; c < basis.cols(); ++c) xi += rng.normal() * basis.col(c);
    if (xi.norm() == 0.0) continue;
    const Vec z = q + (0.9 * m.tubular_radius() * rng.uniform()) * xi.normalized();
    const Vec perp = z - m.project(z);
    const double val = perp.dot(normal_form(p, z, 16) * perp);
    worst = std::max(worst, std::abs(val - p.eval(z)));
  }
  return worst;
}

struct StageDiagnostics {
  std::vector<Profile> profiles;
  BochnerReport bochner;
  StressReport stress;
  BoundaryGradientReport boundary;
  WitnessReport witness;
};

struct Relaxation {
  std::shared_ptr<const DomainSpec> dom;
  Field initial;
  std::vector<Stage> stages;
};

Relaxation relax(const RunConfig& cfg, const Potential& p, double h) {
  Relaxation r;
  r.dom = build_domain(cfg.domain, h);
  const BoundaryData bd = build_boundary(cfg.boundary, p, cfg.domain);
  r.initial = initial_guess(r.dom, bd, p);
  r.stages = continuation(cfg.schedule, r.initial, p, cfg.solver);
  return r;
}

json acceptance_json(const std::vector<Acceptance>& list) {
  json a = json::array();
  for (const auto& c : list)
    a.push_back({{"id", c.id}, {"name", c.name}, {"status", c.status}, {"detail", c.detail}, {"timing", c.timing}});
  return a;
}

std::string pass(bool ok) { return ok ? "PASS" : "FAIL"; }

Acceptance verdict(int id, std::string name, std::string status, std::string detail, std::string timing = {}) {
  return Acceptance{id, std::move(name), std::move(status), std::move(detail), std::move(timing)};
}

}  // namespace

RunOutcome run(const RunConfig& cfg, const RunOptions& opts) {
  Clock clock;
  RunOutcome out;
  const double h = opts.fast ? cfg.fast_h : cfg.domain.h;
  const double budget = opts.fast ? cfg.fast_time_budget : cfg.time_budget;
  out.dir = opts.out ? *opts.out : fs::path(cfg.output_dir);
  fs::create_directories(out.dir / "checkpoints");
  const auto& dc = cfg.diagnostics;
  json summary;
  json timing;

  // potential and hypotheses
  const auto pot = build_potential(cfg.potential);
  const Potential& p = *pot;
  const auto hyp = verify_hypotheses(p, dc.hypothesis_samples, cfg.seed);
  const double alpha0 = estimate_alpha0(p, 200, cfg.seed);
  summary["potential"] = {{"name", p.name()},
                          {"k", p.dim()},
                          {"manifold", p.manifold().tag()},
                          {"radial_growth_radius", p.radial_growth_radius()},
                          {"tubular_radius", p.manifold().tubular_radius()},
                          {"fitted_alpha0", alpha0},
                          {"hypotheses",
                           {{"ok", hyp.ok()},
                            {"growth_samples", hyp.growth_samples},
                            {"growth_violations", hyp.growth_violations.size()},
                            {"manifold_samples", hyp.manifold_samples},
                            {"nondegeneracy_violations", hyp.nondegeneracy_violations.size()},
                            {"min_normal_eigenvalue", hyp.min_normal_eigenvalue},
                            {"max_hessian_asymmetry", hyp.max_hessian_asymmetry}}}};
  if (const auto* ldg = dynamic_cast<const LandauDeGennes*>(&p)) summary["potential"]["order_parameter"] = ldg->order_parameter();

  // relaxation along the schedule
  log(opts, "relaxing on h = " + fmt(h));
  Clock solve_clock;
  Relaxation main = relax(cfg, p, h);
  timing["continuation_s"] = solve_clock.seconds();
  const DomainSpec& dom = *main.dom;
  const auto& stages = main.stages;
  summary["grid"] = {{"h", h},
                     {"preset", opts.fast ? "fast" : "full"},
                     {"interior_nodes", dom.interior().size()},
                     {"boundary_nodes", dom.boundary().size()},
                     {"measured_curvature_bound", measured_curvature_bound(dom)}};

  double ub_sup = 0.0;
  for (Index i : dom.boundary()) ub_sup = std::max(ub_sup, main.initial.value(i).norm());
  json stage_json = json::array();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const Stage& st = stages[s];
    const std::string tag = "stage_" + std::to_string(s);
    write_field(out.dir / "checkpoints" / (tag + ".field"), st.u,
                json{{"stage", s}, {"eps", st.eps}}.dump());
    std::ofstream(out.dir / ("trace_" + tag + ".csv"), std::ios::binary) << trace_csv(st.record);
    stage_json.push_back({{"eps", st.eps},
                          {"iterations", st.record.iterations},
                          {"converged", st.record.converged},
                          {"hit_max_iters", st.record.hit_max_iters},
                          {"stalled", st.record.stalled},
                          {"energy", st.record.energy.total()},
                          {"dirichlet", st.record.energy.dirichlet},
                          {"potential", st.record.energy.potential},
                          {"residual_sup", st.record.residual_sup},
                          {"residual_l2", st.record.residual_l2},
                          {"sup_norm", sup_norm(st.u)}});
  }
  summary["stages"] = stage_json;

  // limit harmonic map from the last stage
  log(opts, "computing the harmonic-map limit");
  Clock limit_clock;
  Field start = stages.back().u;
  for (Index i : dom.interior()) start.set(i, p.manifold().project_unchecked(start.value(i)));
  const MinimizeResult limit = harmonic_map_minimize(start, p.manifold(), cfg.limit);
  const Field& u_star = limit.u;
  write_field(out.dir / "checkpoints" / "u_star.field", u_star, json{{"limit", true}}.dump());
  double star_dist = 0.0;
  for (Index i : dom.interior()) star_dist = std::max(star_dist, p.manifold().distance(u_star.value(i)));
  summary["limit"] = {{"dirichlet_energy", limit.record.energy.dirichlet},
                      {"iterations", limit.record.iterations},
                      {"converged", limit.record.converged},
                      {"residual_sup", limit.record.residual_sup},
                      {"max_distance_to_N", star_dist}};
  timing["limit_s"] = limit_clock.seconds();

  // per-stage diagnostics
  log(opts, "diagnostics");
  Clock diag_clock;
  const auto centers = diagnostic_centers(cfg, dom);
  if (centers.size() < 1) throw DiagnosticsError("no diagnostic centers");
  if (!(4.0 * h <= 2.0 * dc.rho_max)) throw DiagnosticsError("rho_max is below the resolvable radius 2h");
  const auto rho = geometric_rho_grid(4.0 * h, 2.0 * dc.rho_max);
  const double delta = dc.bochner_delta.value_or(p.manifold().tubular_radius());
  const auto lattice = lattice_centers(dom, dc.witness_spacing);
  if (!(dc.witness_radius >= 4.0 * h)) throw DiagnosticsError("witness radius must be at least 4h");

  std::vector<StageDiagnostics> diag(stages.size());
  std::vector<Profile> all_profiles;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const Stage& st = stages[s];
    StageDiagnostics& d = diag[s];
    d.profiles = stage_profiles(st.u, st.eps, p, centers, rho, dom);
    all_profiles.insert(all_profiles.end(), d.profiles.begin(), d.profiles.end());
    d.bochner = bochner_residual(st.u, st.eps, p, delta);
    d.stress = stress_tensor(st.u, st.eps, &p);
    d.boundary = boundary_gradient_report(st.u, p);
    d.witness = small_energy_witness(st.u, st.eps, p, lattice, dc.witness_radius, dc.witness_percentile);
  }
  const KFit kfit = fit_K(all_profiles, dc.k_grid, dc.tolerance);

  Csv centers_csv{"center_id", "x", "y", "z", "boundary_touching"};
  for (std::size_t c = 0; c < centers.size(); ++c) {
    centers_csv << static_cast<Index>(c);
    for (int a = 0; a < 3; ++a) centers_csv << (a < dom.n() ? centers[c][a] : 0.0);
    centers_csv << static_cast<Index>(diag[0].profiles[c].boundary_touching);
    centers_csv.end();
  }
  centers_csv.save(out.dir / "centers.csv");

  Csv phi_csv{"eps", "center_id", "rho", "phi", "psi"};
  Csv mono_csv{"eps", "center_id", "rho", "margin"};
  Csv conv_csv{"eps", "sup_dist", "pde_residual", "potential_integral", "boundary_grad_sup"};
  Csv boch_csv{"eps", "fitted_C", "q50", "q90", "q99", "q100", "qualifying"};
  Csv stress_csv{"eps", "div_sup", "div_l2"};
  Csv bnd_csv{"eps", "normal_sup", "gradient_sup", "tangential_sup", "distance_sup", "first_order"};
  Csv wit_csv{"eps", "eta", "radius", "qualifying", "fitted_C"};

  const double K = kfit.found ? kfit.K : 0.0;
  std::vector<const Field*> fields;
  for (const auto& st : stages) fields.push_back(&st.u);
  const auto compact = annulus_nodes(dom, cfg.domain.center, dc.compact_inner, dc.compact_outer);
  const auto sup_dist = uniform_convergence_profile(fields, u_star, compact);
  const auto core = annulus_nodes(dom, cfg.domain.center, 0.0, 0.1);
  const auto core_dist =
      core.empty() ? std::vector<double>(stages.size(), 0.0) : uniform_convergence_profile(fields, u_star, core);

  int mono_violations = 0;
  double mono_min = std::numeric_limits<double>::infinity();
  PropagationReport prop_total;
  json stage_diag = json::array();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const Stage& st = stages[s];
    const StageDiagnostics& d = diag[s];
    for (const Profile& pr : d.profiles)
      for (std::size_t j = 0; j < pr.rho.size(); ++j) {
        phi_csv << st.eps << pr.center_id << pr.rho[j] << pr.phi[j] << 2.0 * K * pr.rho[j] + pr.phi[j];
        phi_csv.end();
      }
    const auto mono = monotonicity_check(d.profiles, K, dc.tolerance);
    for (const Margin& m : mono.margins) {
      mono_csv << st.eps << m.center_id << m.rho << m.margin;
      mono_csv.end();
    }
    mono_violations += static_cast<int>(mono.violations.size());
    mono_min = std::min(mono_min, mono.min_margin);
    const auto prop = propagation_check(d.profiles, K, dc.lemma_alpha, dc.tolerance);
    prop_total.premises += prop.premises;
    prop_total.violations += prop.violations;
    prop_total.worst_excess = s == 0 ? prop.worst_excess : std::max(prop_total.worst_excess, prop.worst_excess);

    conv_csv << st.eps << sup_dist[s] << st.record.residual_sup << st.record.energy.potential << d.boundary.gradient_sup;
    conv_csv.end();
    boch_csv << st.eps << d.bochner.fitted_C;
    for (double q : d.bochner.quantiles) boch_csv << q;
    boch_csv << d.bochner.qualifying;
    boch_csv.end();
    stress_csv << st.eps << d.stress.div_sup << d.stress.div_l2;
    stress_csv.end();
    bnd_csv << st.eps << d.boundary.normal_sup << d.boundary.gradient_sup << d.boundary.tangential_sup
            << d.boundary.distance_sup << d.boundary.first_order;
    bnd_csv.end();
    wit_csv << st.eps << d.witness.eta << d.witness.radius << d.witness.qualifying << d.witness.fitted_C;
    wit_csv.end();
    stage_diag.push_back({{"eps", st.eps},
                          {"monotonicity_min_margin", mono.min_margin},
                          {"monotonicity_violations", mono.violations.size()},
                          {"bochner_C", d.bochner.fitted_C},
                          {"bochner_qualifying", d.bochner.qualifying},
                          {"stress_div_sup", d.stress.div_sup},
                          {"sup_dist_X", sup_dist[s]},
                          {"sup_dist_core", core_dist[s]},
                          {"boundary_grad_sup", d.boundary.gradient_sup},
                          {"boundary_normal_sup", d.boundary.normal_sup},
                          {"boundary_dist_sup", d.boundary.distance_sup},
                          {"witness_eta", d.witness.eta},
                          {"witness_C", d.witness.fitted_C},
                          {"witness_qualifying", d.witness.qualifying},
                          {"propagation_premises", prop.premises},
                          {"propagation_violations", prop.violations}});
  }
  phi_csv.save(out.dir / "phi_profiles.csv");
  mono_csv.save(out.dir / "monotonicity.csv");
  conv_csv.save(out.dir / "convergence.csv");
  boch_csv.save(out.dir / "bochner.csv");
  stress_csv.save(out.dir / "stress.csv");
  bnd_csv.save(out.dir / "boundary.csv");
  wit_csv.save(out.dir / "witness.csv");
  summary["diagnostics"] = stage_diag;

  // singular set of the limit
  const SingularSet sing = singular_set_estimate(u_star, dc.singular_theta, dc.singular_scale);
  Csv sing_csv{"component", "node", "x", "y", "z"};
  json diam = json::array();
  for (std::size_t c = 0; c < sing.components.size(); ++c) {
    for (Index i : sing.components[c]) {
      const Point x = dom.coords(i);
      sing_csv << static_cast<Index>(c) << i;
      for (int a = 0; a < 3; ++a) sing_csv << (a < dom.n() ? x[a] : 0.0);
      sing_csv.end();
    }
    diam.push_back(sing.component_diameter[c]);
  }
  sing_csv.save(out.dir / "singular_set.csv");
  summary["singular_set"] = {{"theta", dc.singular_theta},
                             {"scale", dc.singular_scale},
                             {"nodes", sing.nodes.size()},
                             {"components", sing.components.size()},
                             {"diameters", diam},
                             {"max_density", sing.max_density}};

  // witness stability across eps
  double wmin = std::numeric_limits<double>::infinity(), wmax = 0.0;
  for (const auto& d : diag) {
    wmin = std::min(wmin, d.witness.fitted_C);
    wmax = std::max(wmax, d.witness.fitted_C);
  }
  const double witness_spread = wmin > 0.0 ? wmax / wmin : (wmax == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());

  double C_run = 0.0;
  for (const auto& d : diag) C_run = std::max(C_run, d.bochner.fitted_C);
  summary["fitted"] = {{"K", kfit.found ? json(kfit.K) : json("none")},
                       {"K_found", kfit.found},
                       {"K_step", kfit.step},
                       {"K_grid", {{"min", dc.k_grid.min}, {"ratio", dc.k_grid.ratio}, {"max", dc.k_grid.max}}},
                       {"monotonicity_tolerance", dc.tolerance},
                       {"monotonicity_min_margin", mono_min},
                       {"monotonicity_violations", mono_violations},
                       {"bochner_C", C_run},
                       {"bochner_delta", delta},
                       {"witness_C_spread", witness_spread},
                       {"witness_stable", witness_spread < 2.0},
                       {"propagation",
                        {{"alpha_max", dc.lemma_alpha},
                         {"premises", prop_total.premises},
                         {"violations", prop_total.violations},
                         {"worst_excess", prop_total.worst_excess}}}};
  timing["diagnostics_s"] = diag_clock.seconds();

  // restart probes on the final stage
  if (dc.restart_probes > 0) {
    Clock probe_clock;
    const auto probe = restart_probe(stages.back().u, stages.back().eps, p, cfg.solver, dc.restart_probes);
    summary["restart_probe"] = {{"probes", dc.restart_probes},
                                {"reference", probe.reference},
                                {"energies", probe.energies},
                                {"best_relative_drop", probe.best_relative_drop},
                                {"lower_energy_found", probe.lower_found}};
    timing["restart_probe_s"] = probe_clock.seconds();
  }

  // stress divergence against solver tolerance, stage 1 from the initial guess
  std::vector<double> sweep_div;
  {
    json sweep = json::array();
    SolverConfig sc = cfg.solver;
    sc.record_trace = false;
    for (double tol : dc.stress_sweep) {
      sc.grad_tol = tol;
      const auto r = minimize(main.initial, cfg.schedule.eps.front(), p, sc);
      const auto st = stress_tensor(r.u, cfg.schedule.eps.front(), &p);
      sweep_div.push_back(st.div_sup);
      sweep.push_back({{"grad_tol", tol}, {"div_sup", st.div_sup}, {"residual_sup", r.record.residual_sup}});
    }
    summary["stress_sweep"] = sweep;
  }

  // refinement study
  json refinement = nullptr;
  KFit kfit_fine;
  std::vector<double> C_fine;
  if (dc.refinement) {
    log(opts, "refinement on h = " + fmt(0.5 * h));
    Clock ref_clock;
    Relaxation fine = relax(cfg, p, 0.5 * h);
    const auto rho_fine = geometric_rho_grid(2.0 * h, 2.0 * dc.rho_max);
    std::vector<Profile> fine_profiles;
    json per_stage = json::array();
    for (const Stage& st : fine.stages) {
      auto prs = stage_profiles(st.u, st.eps, p, centers, rho_fine, *fine.dom);
      fine_profiles.insert(fine_profiles.end(), prs.begin(), prs.end());
      const auto b = bochner_residual(st.u, st.eps, p, delta);
      C_fine.push_back(b.fitted_C);
      per_stage.push_back({{"eps", st.eps}, {"bochner_C", b.fitted_C}, {"iterations", st.record.iterations}});
    }
    kfit_fine = fit_K(fine_profiles, dc.k_grid, dc.tolerance);
    refinement = {{"h", 0.5 * h},
                  {"K", kfit_fine.found ? json(kfit_fine.K) : json("none")},
                  {"K_step", kfit_fine.step},
                  {"stages", per_stage}};
    timing["refinement_s"] = ref_clock.seconds();
  }
  summary["refinement"] = refinement;

  // --- acceptance ---------------------------------------------------------
  std::vector<Acceptance> acc;
  {  // 1 gradient consistency
    Clock c;
    const auto coarse = build_domain(cfg.domain, 1.0 / 12.0);
    const BoundaryData bd = build_boundary(cfg.boundary, p, cfg.domain);
    Field u = initial_guess(coarse, bd, p);
    Rng rng(cfg.seed + 1);
    for (Index i : coarse->interior())
      for (int k = 0; k < u.k(); ++k) u.raw()[i * u.k() + k] += 0.05 * rng.normal();
    const auto gc = check_gradient(u, cfg.schedule.eps.front(), p, dc.gradient_samples, cfg.seed);
    const double t = c.seconds();
    acc.push_back(verdict(1, "gradient consistency", pass(gc.max_relative_error <= 1e-6 && t < 10.0),
                   "max relative error " + fmt(gc.max_relative_error) + " over " + std::to_string(gc.samples) +
                       " directions at h = 1/12",
                   "check took " + fmt(t) + " s"));
  }
  {  // 2 normal form
    const auto gl1 = make_ginzburg_landau(1);
    Vec z(1);
    z[0] = 1.1;
    const double a = normal_form(*gl1, z, 16)(0, 0);
    const double d3 = normal_form_defect(*make_ginzburg_landau(3), 100, cfg.seed);
    const double dl = normal_form_defect(*make_landau_de_gennes(-0.5, 1.0, 1.0), 100, cfg.seed);
    const double dr = normal_form_defect(p, 100, cfg.seed);
    const bool ok = std::abs(a - 4.41) <= 1e-8 && d3 <= 1e-8 && dl <= 1e-8 && dr <= 1e-8;
    acc.push_back(verdict(2, "normal form", pass(ok),
                   "A(1.1) = " + format_number(a) + "; max defect GL3 " + fmt(d3) + ", LdG " + fmt(dl) + ", run " + fmt(dr)));
  }
  {  // 3 hedgehog Dirichlet anchor
    Point c0 = Point::Zero(3);
    const auto ball = relaxlab::build_domain(DomainRequest{BallShape{c0, 1.0}, ball_grid(c0, 1.0, 1.0 / 32.0)});
    Field u(ball, 3);
    for (Index i = 0; i < ball->node_count(); ++i)
      if (ball->valued(i)) {
        const Point x = ball->coords(i);
        u.set(i, Vec(x / x.norm()));
      }
    const double e = kernels::energy(u, nullptr, 1.0).dirichlet;
    const double rel = e / (4.0 * std::numbers::pi) - 1.0;
    acc.push_back(verdict(3, "hedgehog Dirichlet anchor", pass(std::abs(rel) <= 0.05),
                   "1/2 int |grad(x/|x|)|^2 = " + fmt(e) + " at h = 1/32 (relative deviation from 4 pi " + fmt(rel) + ")"));
  }
  {  // 4 uniform bound
    const double bound = p.radial_growth_radius() + ub_sup + 1e-6;
    double worst = 0.0;
    for (const auto& st : stages) worst = std::max(worst, sup_norm(st.u));
    acc.push_back(verdict(4, "uniform bound", pass(worst <= bound),
                   "max ||u_eps||_inf = " + fmt(worst) + " <= R + ||u_b||_inf + 1e-6 = " + fmt(bound)));
  }
  {  // 5 vanishing potential
    bool strict = true, zero = true;
    std::string vals;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const double v = stages[s].record.energy.potential;
      zero = zero && v <= 1e-14;
      if (s > 0) strict = strict && v < stages[s - 1].record.energy.potential;
      vals += (s ? ", " : "") + fmt(v);
    }
    std::string status = stages.size() < 2 ? "SKIP" : pass(strict);
    if (zero) status = "SKIP";
    acc.push_back(verdict(5, "vanishing potential", status, "eps^-2 int f(u_eps) = [" + vals + "]"));
  }
  {  // 6 monotonicity
    bool ok = kfit.found && mono_violations == 0 && centers.size() >= 20;
    std::string detail = "K = " + (kfit.found ? fmt(kfit.K) : std::string("none")) + " (grid step " +
                         std::to_string(kfit.step) + "), min margin " + fmt(mono_min) + ", " +
                         std::to_string(centers.size()) + " centers";
    std::string status = pass(ok);
    if (dc.refinement) {
      const int diff = std::abs(kfit.step - kfit_fine.step);
      ok = ok && kfit_fine.found && diff <= 1;
      status = pass(ok);
      detail += "; K at h/2 = " + (kfit_fine.found ? fmt(kfit_fine.K) : std::string("none")) + " (step difference " +
                std::to_string(diff) + ")";
    } else {
      detail += "; refinement disabled";
      if (ok) status = "SKIP";
    }
    acc.push_back(verdict(6, "monotonicity", status, detail));
  }
  {  // 7 main theorem trend
    bool mono = true;
    std::string vals;
    for (std::size_t s = 0; s < sup_dist.size(); ++s) {
      if (s > 0) mono = mono && sup_dist[s] < sup_dist[s - 1];
      vals += (s ? ", " : "") + fmt(sup_dist[s]);
    }
    const bool zero = sup_dist.front() <= 1e-12 && sup_dist.back() <= 1e-12;
    const bool ok = mono && sup_dist.back() < 0.5 * sup_dist.front();
    acc.push_back(verdict(7, "uniform convergence on X", zero ? "SKIP" : pass(ok),
                   "sup_X |u_eps - u_*| = [" + vals + "] on " + std::to_string(compact.size()) + " nodes"));
  }
  {  // 8 Bochner
    bool finite = true;
    for (const auto& d : diag) finite = finite && std::isfinite(d.bochner.fitted_C) && !d.bochner.empty;
    std::string detail = "C per stage at h: [";
    for (std::size_t s = 0; s < diag.size(); ++s) detail += (s ? ", " : "") + fmt(diag[s].bochner.fitted_C);
    detail += "]";
    std::string status = pass(finite);
    if (dc.refinement) {
      double worst = 1.0;
      detail += ", at h/2: [";
      for (std::size_t s = 0; s < C_fine.size(); ++s) {
        const double a = diag[s].bochner.fitted_C, b = C_fine[s];
        const double ratio = (a == 0.0 && b == 0.0) ? 1.0 : std::max(a, b) / std::min(a, b);
        worst = std::max(worst, ratio);
        detail += (s ? ", " : "") + fmt(b);
      }
      detail += "], worst ratio " + fmt(worst);
      status = pass(finite && worst < 2.0);
    } else if (finite) {
      status = "SKIP";
      detail += "; refinement disabled";
    }
    acc.push_back(verdict(8, "Bochner residual", status, detail));
  }
  {  // 9 stress-energy
    Field cst(main.dom, p.dim());
    Rng rng(cfg.seed + 2);
    const Vec q = p.manifold().sample(rng);
    for (Index i = 0; i < dom.node_count(); ++i)
      if (dom.valued(i)) cst.set(i, q);
    const double zero_div = stress_tensor(cst, cfg.schedule.eps.front(), &p).div_sup;
    const bool all_zero = std::all_of(sweep_div.begin(), sweep_div.end(), [](double v) { return v <= 1e-12; });
    const bool trend = all_zero || sweep_div[1] < sweep_div[0];
    std::string vals;
    for (std::size_t s = 0; s < sweep_div.size(); ++s) vals += (s ? ", " : "") + fmt(sweep_div[s]);
    acc.push_back(verdict(9, "stress-energy divergence", pass(trend && zero_div <= 1e-12),
                   "div sup at grad_tol " + fmt(dc.stress_sweep[0]) + " ... " + fmt(dc.stress_sweep.back()) + ": [" +
                       vals + "]; constant field " + fmt(zero_div)));
  }
  {  // 10 boundary gradients
    const double first = diag.front().boundary.gradient_sup;
    bool ok = true;
    double dist = 0.0;
    std::string vals;
    for (std::size_t s = 0; s < diag.size(); ++s) {
      const double g = diag[s].boundary.gradient_sup;
      if (first > 1e-12)
        ok = ok && g <= 2.0 * first && g >= 0.5 * first;
      else
        ok = ok && g <= 1e-12;
      dist = std::max(dist, diag[s].boundary.distance_sup);
      vals += (s ? ", " : "") + fmt(g);
    }
    acc.push_back(verdict(10, "boundary gradients", pass(ok && dist <= 1e-10),
                   "sup_dOmega |grad u_eps| = [" + vals + "], sup dist(u, N) on dOmega " + fmt(dist)));
  }

  // 11 determinism and wall time
  std::string det_detail = "replay disabled", replay_note;
  bool det_ok = true;
  if (dc.replay_check) {
    const int threads = omp_get_max_threads();
    const int other = threads == 1 ? 2 : 1;
    omp_set_num_threads(other);
    const auto replay = minimize(main.initial, cfg.schedule.eps.front(), p, cfg.solver);
    omp_set_num_threads(threads);
    const bool same_trace = trace_csv(replay.record) == trace_csv(stages.front().record);
    const bool same_field = std::equal(replay.u.raw().begin(), replay.u.raw().end(), stages.front().u.raw().begin(),
                                       [](double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; });
    det_ok = same_trace && same_field;
    det_detail = std::string("stage-1 replay with a different thread count: ") + (det_ok ? "bit-identical" : "differs");
    replay_note = "replay used " + std::to_string(other) + " thread(s); ";
  }
  out.seconds = clock.seconds();
  const bool time_ok = out.seconds <= budget;
  acc.push_back(verdict(11, "determinism and runtime", pass(det_ok && time_ok), det_detail + "; budget " + fmt(budget) + " s",
                 replay_note + "wall time " + fmt(out.seconds) + " s with " + std::to_string(omp_get_max_threads()) + " thread(s)"));

  timing["total_s"] = out.seconds;
  timing["threads"] = omp_get_max_threads();
  summary["timing"] = timing;
  summary["acceptance"] = acceptance_json(acc);
  summary["seed"] = cfg.seed;
  out.acceptance = acc;
  out.summary = summary;
  std::ofstream(out.dir / "summary.json") << summary.dump(2) << '\n';
  return out;
}

int run_command(const fs::path& config, const RunOptions& opts) {
  try {
    const RunConfig cfg = load_config(config);
    const RunOutcome res = run(cfg, opts);
    for (const auto& a : res.acceptance)
      std::cout << a.status << ' ' << a.id << ' ' << a.name << ": " << a.line() << '\n';
    std::cout << "artifacts in " << res.dir.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const TubeError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const DiagnosticsError& e) {
    std::cerr << "diagnostics failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

// --- compare ------------------------------------------------------------------

namespace {

void flatten(const json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (k == "timing" || k == "output_dir") continue;
      flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", out);
  } else if (j.is_number_float()) {
    out[prefix] = format_number(j.get<double>());
  } else if (j.is_string()) {
    out[prefix] = j.get<std::string>();
  } else {
    out[prefix] = j.dump();
  }
}

json load_summary(const fs::path& dir) {
  const fs::path p = dir / "summary.json";
  std::ifstream is(p);
  if (!is) throw Error("missing summary: " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception&) {
    throw Error("unreadable summary: " + p.string());
  }
}

}  // namespace

std::vector<DiffRow> compare(const fs::path& a, const fs::path& b) {
  std::map<std::string, std::string> fa, fb;
  flatten(load_summary(a), "", fa);
  flatten(load_summary(b), "", fb);
  std::set<std::string> keys;
  for (const auto& [k, v] : fa) keys.insert(k);
  for (const auto& [k, v] : fb) keys.insert(k);
  std::vector<DiffRow> rows;
  for (const auto& k : keys) {
    const auto ia = fa.find(k), ib = fb.find(k);
    const std::string va = ia == fa.end() ? "-" : ia->second;
    const std::string vb = ib == fb.end() ? "-" : ib->second;
    if (va != vb) rows.push_back({k, va, vb});
  }
  return rows;
}

// --- plots --------------------------------------------------------------------

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

std::optional<Table> read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) return std::nullopt;
  Table t;
  std::string line;
  if (!std::getline(is, line)) return t;
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) row.push_back(std::strtod(cell.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
}

std::string dat_text(const std::string& xname, const std::string& yname, const std::vector<Series>& series) {
  std::ostringstream os;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (s > 0) os << "\n\n";
    os << "# " << series[s].label << "\n# " << xname << ' ' << yname << '\n';
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      os << format_number(series[s].x[i]) << ' ' << format_number(series[s].y[i]) << '\n';
  }
  return os.str();
}

}  // namespace

std::string render_svg(const ChartSpec& spec, const std::vector<Series>& series) {
  const double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if ((spec.log_x && !(s.x[i] > 0)) || (spec.log_y && !(s.y[i] > 0)) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 <= 0) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 <= 0) y0 -= 0.5, y1 += 0.5;
  const double padx = 0.03 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return top + ph - (ty(v) - y0) / (y1 - y0) * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << coord(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(spec.title) << "</text>\n";
  os << "<rect x=\"" << coord(left) << "\" y=\"" << coord(top) << "\" width=\"" << coord(pw) << "\" height=\""
     << coord(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
    const double sx = left + pw * t / 4.0, sy = top + ph - ph * t / 4.0;
    const double lx = spec.log_x ? std::pow(10.0, fx) : fx, ly = spec.log_y ? std::pow(10.0, fy) : fy;
    os << "<line x1=\"" << coord(sx) << "\" y1=\"" << coord(top + ph) << "\" x2=\"" << coord(sx) << "\" y2=\""
       << coord(top + ph + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << coord(sx) << "\" y=\"" << coord(top + ph + 18) << "\" text-anchor=\"middle\">"
       << tick_label(lx) << "</text>\n";
    os << "<line x1=\"" << coord(left - 5) << "\" y1=\"" << coord(sy) << "\" x2=\"" << coord(left) << "\" y2=\""
       << coord(sy) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << coord(left - 8) << "\" y=\"" << coord(sy + 4) << "\" text-anchor=\"end\">" << tick_label(ly)
       << "</text>\n";
  }
  os << "<text x=\"" << coord(left + pw / 2) << "\" y=\"" << coord(H - 10) << "\" text-anchor=\"middle\">"
     << escape(spec.x_label + (spec.log_x ? " (log)" : "")) << "</text>\n";
  os << "<text x=\"16\" y=\"" << coord(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << coord(top + ph / 2) << ")\">" << escape(spec.y_label + (spec.log_y ? " (log)" : "")) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 10];
    std::string pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      const double x = series[s].x[i], y = series[s].y[i];
      if ((spec.log_x && !(x > 0)) || (spec.log_y && !(y > 0)) || !std::isfinite(y)) continue;
      pts += (pts.empty() ? "" : " ") + coord(px(x)) + "," + coord(py(y));
      os << "<circle cx=\"" << coord(px(x)) << "\" cy=\"" << coord(py(y)) << "\" r=\"2.5\" fill=\"" << color
         << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    if (s < 12) {
      const double ly = top + 10 + 14.0 * static_cast<double>(s);
      os << "<line x1=\"" << coord(W - right + 10) << "\" y1=\"" << coord(ly) << "\" x2=\"" << coord(W - right + 28)
         << "\" y2=\"" << coord(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << coord(W - right + 32) << "\" y=\"" << coord(ly + 4) << "\">" << escape(series[s].label)
         << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

PlotOutput emit_plot_data(const fs::path& dir) {
  PlotOutput out;
  auto emit = [&](const std::string& stem, const ChartSpec& spec, const std::string& xname, const std::string& yname,
                  const std::vector<Series>& series) {
    write_text(dir / (stem + ".dat"), dat_text(xname, yname, series));
    write_text(dir / (stem + ".svg"), render_svg(spec, series));
    out.files.push_back(dir / (stem + ".dat"));
    out.files.push_back(dir / (stem + ".svg"));
  };
  auto eps_series = [&](const std::string& file, const std::string& column, const std::string& stem,
                        const std::string& title, bool log_y) {
    const auto t = read_csv(dir / file);
    if (!t) {
      out.warnings.push_back(file + " not found; skipped " + stem);
      return;
    }
    const int ce = t->column("eps"), cy = t->column(column);
    if (ce < 0 || cy < 0) {
      out.warnings.push_back(file + " lacks column '" + column + "'");
      return;
    }
    Series s{column, {}, {}};
    for (const auto& r : t->rows) {
      s.x.push_back(r[ce]);
      s.y.push_back(r[cy]);
    }
    if (s.x.empty()) {
      out.warnings.push_back(file + " has no rows; skipped " + stem);
      return;
    }
    emit(stem, {title, "eps", column, true, log_y}, "eps", column, {s});
  };
  eps_series("convergence.csv", "sup_dist", "sup_dist_vs_eps", "sup over X of |u_eps - u_*|", false);
  eps_series("convergence.csv", "potential_integral", "potential_integral_vs_eps", "eps^-2 int f(u_eps)", false);
  eps_series("convergence.csv", "boundary_grad_sup", "boundary_grad_vs_eps", "sup over boundary of |grad u_eps|", false);
  eps_series("convergence.csv", "pde_residual", "pde_residual_vs_eps", "discrete Euler-Lagrange residual", true);
  eps_series("bochner.csv", "fitted_C", "bochner_C_vs_eps", "fitted Bochner constant", false);
  eps_series("stress.csv", "div_sup", "stress_div_vs_eps", "sup |div T|", true);

  auto profile_plots = [&](const std::string& file, const std::string& column, const std::string& prefix,
                           const std::string& title) {
    const auto t = read_csv(dir / file);
    if (!t) {
      out.warnings.push_back(file + " not found; skipped " + prefix + " plots");
      return;
    }
    const int ce = t->column("eps"), cc = t->column("center_id"), cr = t->column("rho"), cy = t->column(column);
    if (ce < 0 || cc < 0 || cr < 0 || cy < 0) {
      out.warnings.push_back(file + " has unexpected columns");
      return;
    }
    if (t->rows.empty()) {
      out.warnings.push_back(file + ": empty rho grid, no " + prefix + " plots written");
      return;
    }
    std::vector<double> eps_values;
    for (const auto& r : t->rows)
      if (std::find(eps_values.begin(), eps_values.end(), r[ce]) == eps_values.end()) eps_values.push_back(r[ce]);
    for (std::size_t e = 0; e < eps_values.size(); ++e) {
      std::map<int, Series> by_center;
      for (const auto& r : t->rows) {
        if (r[ce] != eps_values[e]) continue;
        const int id = static_cast<int>(r[cc]);
        auto& s = by_center[id];
        s.label = "center " + std::to_string(id);
        s.x.push_back(r[cr]);
        s.y.push_back(r[cy]);
      }
      std::vector<Series> series;
      for (auto& [id, s] : by_center) series.push_back(std::move(s));
      emit(prefix + "_stage_" + std::to_string(e), {title + ", eps = " + format_number(eps_values[e]), "rho", column, true, false},
           "rho", column, series);
    }
  };
  profile_plots("phi_profiles.csv", "phi", "phi", "renormalized energy");
  profile_plots("monotonicity.csv", "margin", "margin", "monotonicity margin");
  return out;
}

}  // namespace relaxlab

#include "relaxlab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace relaxlab {

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
  if (!(min_step > 0.0) || !(max_step > min_step)) throw ConfigError("step bounds must satisfy 0 < min_step < max_step");
}

void EpsSchedule::validate() const {
  if (eps.empty()) throw ConfigError("eps schedule is empty");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) throw ConfigError("eps values must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) throw ConfigError("eps schedule must be strictly decreasing");
  }
}

EpsSchedule EpsSchedule::geometric(double first, double ratio, int count) {
  EpsSchedule s;
  double e = first;
  for (int i = 0; i < count; ++i, e *= ratio) s.eps.push_back(e);
  s.validate();
  return s;
}

namespace {

void check_eps(double eps) {
  if (!(eps > 0.0)) throw Error("eps must be positive");
}

/// Diagonal metric of the descent: the lumped mass, or a Jacobi estimate.
std::vector<double> descent_metric(const Field& u, double eps, const Potential* p, DescentMethod method) {
  const DomainSpec& dom = u.domain();
  std::vector<double> metric(static_cast<std::size_t>(dom.node_count()), 0.0);
  const int n = dom.n(), k = u.k();
  const double scale = std::pow(dom.h(), n - 2);
  const auto raw = u.raw();
  for (Index i : dom.interior()) {
    if (method == DescentMethod::barzilai_borwein) {
      metric[i] = dom.mass(i);
      continue;
    }
    double diag = 0.0;
    for (int d = 0; d < n; ++d) diag += dom.edge_weight(i, d) + dom.edge_weight(i - dom.stride(d), d);
    diag *= scale;
    if (p) {
      Vec z(k);
      for (int c = 0; c < k; ++c) z[c] = raw[i * k + c];
      diag += dom.mass(i) * std::max(0.0, p->hess(z).trace() / k) / (eps * eps);
    }
    metric[i] = diag;
  }
  return metric;
}

double metric_dot(const DomainSpec& dom, int k, const std::vector<double>& metric, std::span<const double> a,
                  std::span<const double> b) {
  const auto nodes = dom.interior();
  return kernels::blocked_sum(static_cast<Index>(nodes.size()), [&](Index lo, Index hi) {
    double s = 0.0;
    for (Index t = lo; t < hi; ++t) {
      const Index i = nodes[t];
      double v = 0.0;
      for (int c = 0; c < k; ++c) v += a[i * k + c] * b[i * k + c];
      s += metric[i] * v;
    }
    return s;
  });
}

Residual residual_of(const DomainSpec& dom, int k, std::span<const double> g) {
  Residual r;
  r.sup = kernels::sup_per_volume(dom, k, g);
  const auto nodes = dom.interior();
  const double num = kernels::blocked_sum(static_cast<Index>(nodes.size()), [&](Index lo, Index hi) {
    double s = 0.0;
    for (Index t = lo; t < hi; ++t) {
      const Index i = nodes[t];
      double sq = 0.0;
      for (int c = 0; c < k; ++c) sq += g[i * k + c] * g[i * k + c];
      s += sq / dom.mass(i);
    }
    return s;
  });
  r.l2 = std::sqrt(num / dom.volume());
  return r;
}

/// Largest eigenvalue scale of the preconditioned Hessian, for the first step.
double initial_step(const Field& u, double eps, const Potential* p) {
  const DomainSpec& dom = u.domain();
  const double h = dom.h();
  double stiff = 4.0 * dom.n() / (h * h);
  if (p) {
    double hmax = 0.0;
    const int k = u.k();
    const auto raw = u.raw();
    const auto nodes = dom.interior();
    const std::size_t stride = std::max<std::size_t>(1, nodes.size() / 512);
    for (std::size_t t = 0; t < nodes.size(); t += stride) {
      Vec z(k);
      for (int c = 0; c < k; ++c) z[c] = raw[nodes[t] * k + c];
      hmax = std::max(hmax, p->hess(z).norm());
    }
    stiff += hmax / (eps * eps);
  }
  return 1.0 / stiff;
}

}  // namespace

EnergyParts energy(const Field& u, double eps, const Potential& p) {
  check_eps(eps);
  return kernels::energy(u, &p, eps);
}

std::vector<double> energy_gradient(const Field& u, double eps, const Potential& p) {
  check_eps(eps);
  std::vector<double> g(u.raw().size());
  kernels::gradient(u, &p, eps, g);
  return g;
}

Residual pde_residual(const Field& u, double eps, const Potential& p) {
  const auto g = energy_gradient(u, eps, p);
  return residual_of(u.domain(), u.k(), g);
}

MinimizeResult minimize(const Field& u0, double eps, const Potential& p, const SolverConfig& cfg) {
  check_eps(eps);
  cfg.validate();
  const DomainSpec& dom = u0.domain();
  const int k = u0.k();
  const auto& interior = dom.interior();
  MinimizeResult res{u0, {}};
  Field& u = res.u;
  ConvergenceRecord& rec = res.record;

  const std::vector<double> metric = descent_metric(u, eps, &p, cfg.method);
  const std::size_t size = u.raw().size();
  std::vector<double> g(size), g_new(size), dir(size, 0.0), step(size, 0.0), y(size, 0.0);
  kernels::gradient(u, &p, eps, g);

  EnergyParts e = kernels::energy(u, &p, eps);
  if (!std::isfinite(e.total())) throw SolverError("initial energy is not finite");
  Residual r = residual_of(dom, k, g);
  auto record = [&](int it) {
    if (!cfg.record_trace) return;
    rec.trace.push_back({it, e.total(), e.dirichlet, e.potential, std::sqrt(kernels::dot(dom, k, g, g)), r.sup});
  };
  record(0);

  const double alpha0 = std::clamp(initial_step(u, eps, &p) * (cfg.method == DescentMethod::barzilai_borwein ? 1.0 : 0.0) +
                                       (cfg.method == DescentMethod::preconditioned ? 0.5 : 0.0),
                                   cfg.min_step, cfg.max_step);
  double alpha = alpha0;
  int it = 0;
  while (r.sup > cfg.grad_tol) {
    if (it >= cfg.max_iters) {
      rec.hit_max_iters = true;
      break;
    }
    ++it;
    for (Index i : interior)
      for (int c = 0; c < k; ++c) dir[i * k + c] = -g[i * k + c] / metric[i];
    const double slope = kernels::dot(dom, k, g, dir);  // < 0
    alpha = std::clamp(alpha, cfg.min_step, cfg.max_step);
    EnergyParts change;
    bool accepted = false;
    while (alpha >= cfg.min_step) {
      for (Index i : interior)
        for (int c = 0; c < k; ++c) step[i * k + c] = alpha * dir[i * k + c];
      change = kernels::energy_change(u, step, &p, eps);
      if (!std::isfinite(change.total()))
        throw SolverError("energy diverged (non-finite) at iteration " + std::to_string(it));
      if (change.total() <= 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
      ++rec.backtracks;
    }
    if (!accepted) {
      rec.stalled = true;
      --it;
      break;
    }
    auto raw = u.raw();
    for (Index i : interior)
      for (int c = 0; c < k; ++c) raw[i * k + c] += step[i * k + c];
    e.dirichlet += change.dirichlet;
    e.potential += change.potential;

    kernels::gradient(u, &p, eps, g_new);
    for (Index i : interior)
      for (int c = 0; c < k; ++c) y[i * k + c] = g_new[i * k + c] - g[i * k + c];
    const double sy = kernels::dot(dom, k, step, y);
    const double sms = metric_dot(dom, k, metric, step, step);
    if (sy > 0.0 && std::isfinite(sms / sy)) {
      alpha = sms / sy;
    } else {
      alpha = alpha0;
      ++rec.step_resets;
    }
    std::swap(g, g_new);
    r = residual_of(dom, k, g);
    record(it);
  }
  rec.iterations = it;
  rec.converged = r.sup <= cfg.grad_tol;
  rec.energy = kernels::energy(u, &p, eps);
  if (!std::isfinite(rec.energy.total())) throw SolverError("final energy is not finite");
  rec.residual_sup = r.sup;
  rec.residual_l2 = r.l2;
  return res;
}

std::vector<Stage> continuation(const EpsSchedule& schedule, const Field& initial, const Potential& p,
                                const SolverConfig& cfg) {
  schedule.validate();
  std::vector<Stage> stages;
  for (std::size_t s = 0; s < schedule.eps.size(); ++s) {
    const Field& start = (schedule.warm_start && s > 0) ? stages.back().u : initial;
    try {
      auto res = minimize(start, schedule.eps[s], p, cfg);
      stages.push_back({schedule.eps[s], std::move(res.u), std::move(res.record)});
    } catch (const SolverError& err) {
      throw SolverError("stage " + std::to_string(s) + " (eps = " + std::to_string(schedule.eps[s]) + "): " + err.what());
    }
  }
  return stages;
}

Field harmonic_extension(const Field& u, double tol, int max_iters) {
  // conjugate gradients on the Dirichlet energy, Jacobi preconditioned
  const DomainSpec& dom = u.domain();
  const int k = u.k();
  const auto& interior = dom.interior();
  Field x = u;
  for (Index i : interior)
    for (int c = 0; c < k; ++c) x.raw()[i * k + c] = 0.0;
  const std::size_t size = x.raw().size();
  const std::vector<double> diag = descent_metric(x, 1.0, nullptr, DescentMethod::preconditioned);

  std::vector<double> r(size, 0.0), z(size, 0.0), ap(size, 0.0);
  kernels::gradient(x, nullptr, 1.0, r);
  for (double& v : r) v = -v;
  Field pdir(x.domain_ptr(), k);  // zero on the boundary
  for (Index i : interior)
    for (int c = 0; c < k; ++c) z[i * k + c] = r[i * k + c] / diag[i];
  std::copy(z.begin(), z.end(), pdir.raw().begin());
  double rz = kernels::dot(dom, k, r, z);
  for (int it = 0; it < max_iters; ++it) {
    if (kernels::sup_per_volume(dom, k, r) <= tol) break;
    kernels::gradient(pdir, nullptr, 1.0, ap);
    const double pap = kernels::dot(dom, k, pdir.raw(), ap);
    if (!(pap > 0.0)) break;
    const double a = rz / pap;
    for (Index i : interior)
      for (int c = 0; c < k; ++c) {
        x.raw()[i * k + c] += a * pdir.raw()[i * k + c];
        r[i * k + c] -= a * ap[i * k + c];
        z[i * k + c] = r[i * k + c] / diag[i];
      }
    const double rz_new = kernels::dot(dom, k, r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (Index i : interior)
      for (int c = 0; c < k; ++c) pdir.raw()[i * k + c] = z[i * k + c] + beta * pdir.raw()[i * k + c];
  }
  return x;
}

Field initial_guess(std::shared_ptr<const DomainSpec> dom, const BoundaryData& bd, const Potential& p) {
  Field u(dom, p.dim());
  apply_boundary(u, bd, p);
  Field ext = harmonic_extension(u);
  const VacuumManifold& m = p.manifold();
  for (Index i : dom->interior()) {
    const Vec z = ext.value(i);
    try {
      const Vec q = m.project_unchecked(z);
      if ((z - q).norm() <= m.tubular_radius()) ext.set(i, q);
    } catch (const TubeError&) {
    }
  }
  return ext;
}

MinimizeResult harmonic_map_minimize(const Field& u0, const VacuumManifold& manifold, const SolverConfig& cfg) {
  cfg.validate();
  const DomainSpec& dom = u0.domain();
  const int k = u0.k();
  const auto& interior = dom.interior();
  const double delta = manifold.tubular_radius();
  MinimizeResult res{u0, {}};
  Field& u = res.u;
  ConvergenceRecord& rec = res.record;

  for (Index i : interior) {
    const Vec z = u.value(i);
    u.set(i, manifold.project(z));  // throws outside the tube
  }

  const std::size_t size = u.raw().size();
  std::vector<double> g(size), gt(size, 0.0), gt_new(size, 0.0), dir(size, 0.0), step(size, 0.0),
      y(size, 0.0), trial(size, 0.0);
  auto tangential = [&](std::span<const double> grad, std::vector<double>& out) {
    const auto raw = u.raw();
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < interior.size(); ++t) {
      const Index i = interior[t];
      Vec z(k), gi(k);
      for (int c = 0; c < k; ++c) {
        z[c] = raw[i * k + c];
        gi[c] = grad[i * k + c];
      }
      const Vec proj = manifold.tangent_projector(z) * gi;
      for (int c = 0; c < k; ++c) out[i * k + c] = proj[c];
    }
  };
  kernels::gradient(u, nullptr, 1.0, g);
  tangential(g, gt);
  EnergyParts e = kernels::energy(u, nullptr, 1.0);
  Residual r = residual_of(dom, k, gt);
  auto record = [&](int it) {
    if (!cfg.record_trace) return;
    rec.trace.push_back({it, e.total(), e.dirichlet, 0.0, std::sqrt(kernels::dot(dom, k, gt, gt)), r.sup});
  };
  record(0);

  const double alpha0 = std::clamp(initial_step(u, 1.0, nullptr), cfg.min_step, cfg.max_step);
  double alpha = alpha0;
  int it = 0;
  int halvings_total = 0;
  while (r.sup > cfg.grad_tol) {
    if (it >= cfg.max_iters) {
      rec.hit_max_iters = true;
      break;
    }
    ++it;
    for (Index i : interior)
      for (int c = 0; c < k; ++c) dir[i * k + c] = -gt[i * k + c] / dom.mass(i);
    const double slope = kernels::dot(dom, k, g, dir);
    alpha = std::clamp(alpha, cfg.min_step, cfg.max_step);
    bool accepted = false;
    int tube_halvings = 0;
    EnergyParts change;
    while (alpha >= cfg.min_step) {
      bool left_tube = false;
      const auto raw = u.raw();
      for (Index i : interior) {
        Vec z(k);
        for (int c = 0; c < k; ++c) z[c] = raw[i * k + c] + alpha * dir[i * k + c];
        Vec q;
        try {
          q = manifold.project_unchecked(z);
        } catch (const TubeError&) {
          left_tube = true;
          break;
        }
        if ((z - q).norm() > delta) {
          left_tube = true;
          break;
        }
        for (int c = 0; c < k; ++c) step[i * k + c] = q[c] - raw[i * k + c];
      }
      if (left_tube) {
        if (++tube_halvings > 30) throw SolverError("harmonic-map step keeps leaving the tube after 30 halvings");
        alpha *= 0.5;
        continue;
      }
      change = kernels::energy_change(u, step, nullptr, 1.0);
      if (!std::isfinite(change.total())) throw SolverError("harmonic-map energy diverged");
      if (change.total() <= 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
      ++rec.backtracks;
    }
    halvings_total += tube_halvings;
    if (!accepted) {
      rec.stalled = true;
      --it;
      break;
    }
    auto raw = u.raw();
    for (Index i : interior)
      for (int c = 0; c < k; ++c) raw[i * k + c] += step[i * k + c];
    // exact retraction: the summed step reproduces pi(z) up to rounding
    for (Index i : interior) {
      Vec z(k);
      for (int c = 0; c < k; ++c) z[c] = raw[i * k + c];
      const Vec q = manifold.project_unchecked(z);
      for (int c = 0; c < k; ++c) raw[i * k + c] = q[c];
    }
    e.dirichlet += change.dirichlet;

    kernels::gradient(u, nullptr, 1.0, g);
    tangential(g, gt_new);
    for (Index i : interior)
      for (int c = 0; c < k; ++c) y[i * k + c] = gt_new[i * k + c] - gt[i * k + c];
    const double sy = kernels::dot(dom, k, step, y);
    const double sms = kernels::mass_dot(dom, k, step, step);
    if (sy > 0.0 && std::isfinite(sms / sy)) {
      alpha = sms / sy;
    } else {
      alpha = alpha0;
      ++rec.step_resets;
    }
    std::swap(gt, gt_new);
    r = residual_of(dom, k, gt);
    record(it);
  }
  (void)halvings_total;
  rec.iterations = it;
  rec.converged = r.sup <= cfg.grad_tol;
  rec.energy = kernels::energy(u, nullptr, 1.0);
  rec.residual_sup = r.sup;
  rec.residual_l2 = r.l2;
  return res;
}

ProbeReport restart_probe(const Field& u, double eps, const Potential& p, const SolverConfig& cfg, int probes) {
  ProbeReport rep;
  rep.reference = energy(u, eps, p).total();
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  SolverConfig probe_cfg = cfg;
  probe_cfg.record_trace = false;
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < probes; ++s) {
    Field start = u;
    auto raw = start.raw();
    for (Index i : u.domain().interior())
      for (int c = 0; c < u.k(); ++c) raw[i * u.k() + c] += 0.1 * rng.normal();
    const auto res = minimize(start, eps, p, probe_cfg);
    rep.energies.push_back(res.record.energy.total());
    best = std::min(best, res.record.energy.total());
  }
  if (!rep.energies.empty() && rep.reference > 0.0) {
    rep.best_relative_drop = (rep.reference - best) / rep.reference;
    rep.lower_found = rep.best_relative_drop > 1e-3;
  }
  return rep;
}

GradientCheck check_gradient(const Field& u, double eps, const Potential& p, int samples, std::uint64_t seed,
                             double step) {
  check_eps(eps);
  const DomainSpec& dom = u.domain();
  const int k = u.k();
  const auto g = energy_gradient(u, eps, p);
  Rng rng(seed);
  GradientCheck out;
  out.samples = samples;
  out.step = step;
  std::vector<double> dir(u.raw().size(), 0.0), plus(dir.size(), 0.0), minus(dir.size(), 0.0);
  for (int s = 0; s < samples; ++s) {
    for (Index i : dom.interior())
      for (int c = 0; c < k; ++c) dir[i * k + c] = rng.normal();
    // unit direction, so step is the actual displacement length
    const double len = std::sqrt(kernels::dot(dom, k, dir, dir));
    for (double& x : dir) x /= len;
    for (std::size_t j = 0; j < dir.size(); ++j) {
      plus[j] = step * dir[j];
      minus[j] = -step * dir[j];
    }
    const double fd =
        (kernels::energy_change(u, plus, &p, eps).total() - kernels::energy_change(u, minus, &p, eps).total()) /
        (2.0 * step);
    const double exact = kernels::dot(dom, k, g, dir);
    const double rel = std::abs(fd - exact) / std::max(std::abs(exact), std::numeric_limits<double>::min());
    out.max_relative_error = std::max(out.max_relative_error, rel);
  }
  return out;
}

double sup_norm(const Field& u) {
  const DomainSpec& dom = u.domain();
  const int k = u.k();
  const auto raw = u.raw();
  double best = 0.0;
  for (Index i = 0; i < dom.node_count(); ++i) {
    if (!dom.valued(i)) continue;
    double sq = 0.0;
    for (int c = 0; c < k; ++c) sq += raw[i * k + c] * raw[i * k + c];
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

}  // namespace relaxlab

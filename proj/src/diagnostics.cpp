#include "relaxlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace relaxlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vec load(std::span<const double> raw, Index node, int k) {
  Vec z(k);
  for (int c = 0; c < k; ++c) z[c] = raw[node * k + c];
  return z;
}

/// Interior node whose 2n neighbours are interior as well.
bool full_stencil(const DomainSpec& dom, Index i) {
  if (dom.kind(i) != NodeKind::interior) return false;
  for (int d = 0; d < dom.n(); ++d)
    for (int dir : {-1, 1}) {
      const Index j = dom.neighbor(i, d, dir);
      if (j < 0 || dom.kind(j) != NodeKind::interior) return false;
    }
  return true;
}

/// full_stencil, with every stencil node away from cut cells.
bool uncut_stencil(const DomainSpec& dom, Index i) {
  if (!full_stencil(dom, i)) return false;
  const double full = std::pow(dom.h(), dom.n()) * (1.0 - 1e-12);
  if (dom.mass(i) < full) return false;
  for (int d = 0; d < dom.n(); ++d)
    if (dom.mass(i + dom.stride(d)) < full || dom.mass(i - dom.stride(d)) < full) return false;
  return true;
}

/// Central-difference Jacobian; requires both neighbours on every axis.
Jac central_jacobian(const DomainSpec& dom, std::span<const double> raw, int k, Index i) {
  const int n = dom.n();
  Jac g(k, n);
  for (int d = 0; d < n; ++d) {
    const Index s = dom.stride(d);
    for (int c = 0; c < k; ++c) g(c, d) = (raw[(i + s) * k + c] - raw[(i - s) * k + c]) / (2.0 * dom.h());
  }
  return g;
}

/// Index of the grid value equal to target (relative 1e-9), or -1.
std::ptrdiff_t find_rho(std::span<const double> rho, double target) {
  const auto it = std::lower_bound(rho.begin(), rho.end(), target * (1.0 - 1e-9));
  if (it == rho.end() || std::abs(*it - target) > 1e-9 * target) return -1;
  return it - rho.begin();
}

}  // namespace

std::vector<double> energy_density(const Field& u, double eps, const Potential* p) {
  if (p && !(eps > 0.0)) throw Error("eps must be positive");
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const double quarter = 0.25 * std::pow(dom.h(), n - 2);
  const auto raw = u.raw();
  const auto nodes = dom.weighted();
  std::vector<double> e(static_cast<std::size_t>(dom.node_count()), 0.0);
  const Index count = static_cast<Index>(nodes.size());
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < count; ++t) {
    const Index i = nodes[t];
    double dir = 0.0;
    for (int d = 0; d < n; ++d) {
      const Index fwd = dom.neighbor(i, d, +1), bwd = dom.neighbor(i, d, -1);
      if (fwd >= 0) {
        const double w = dom.edge_weight(i, d);
        if (w > 0.0) {
          double sq = 0.0;
          for (int c = 0; c < k; ++c) sq += (raw[fwd * k + c] - raw[i * k + c]) * (raw[fwd * k + c] - raw[i * k + c]);
          dir += w * sq;
        }
      }
      if (bwd >= 0) {
        const double w = dom.edge_weight(bwd, d);
        if (w > 0.0) {
          double sq = 0.0;
          for (int c = 0; c < k; ++c) sq += (raw[bwd * k + c] - raw[i * k + c]) * (raw[bwd * k + c] - raw[i * k + c]);
          dir += w * sq;
        }
      }
    }
    const double m = dom.mass(i);
    e[i] = quarter * dir / m + (p ? p->eval(load(raw, i, k)) / (eps * eps) : 0.0);
  }
  return e;
}

std::vector<double> distance_to_manifold(const Field& u, const VacuumManifold& m) {
  const DomainSpec& dom = u.domain();
  const int k = u.k();
  const auto raw = u.raw();
  std::vector<double> out(static_cast<std::size_t>(dom.node_count()), kNaN);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < dom.node_count(); ++i)
    if (dom.valued(i)) out[i] = m.distance(load(raw, i, k));
  return out;
}

std::vector<double> geometric_rho_grid(double lo, double hi, int per_octave) {
  if (!(lo > 0.0) || !(hi >= lo) || per_octave < 1) throw Error("invalid radius range");
  std::vector<double> rho;
  for (int j = 0;; ++j) {
    const double r = hi * std::exp2(-static_cast<double>(j) / per_octave);
    if (r < lo * (1.0 - 1e-12)) break;
    rho.push_back(r);
  }
  std::reverse(rho.begin(), rho.end());
  return rho;
}

std::vector<double> renormalized_profile(const DomainSpec& dom, std::span<const double> cell_density,
                                         const Point& x0, std::span<const double> rhos) {
  for (double r : rhos)
    if (!(r > 2.0 * dom.h())) throw DiagnosticsError("radius " + std::to_string(r) + " is not resolved (needs > 2h)");
  auto out = ball_energy_profile(dom, cell_density, x0, rhos);
  for (std::size_t j = 0; j < rhos.size(); ++j) out[j] *= std::pow(rhos[j], 2 - dom.n());
  return out;
}

std::vector<double> renormalized_profile(const Field& u, double eps, const Potential* p, const Point& x0,
                                         std::span<const double> rhos) {
  const auto dens = cell_energy_density(u, p, eps);
  return renormalized_profile(u.domain(), dens, x0, rhos);
}

MonotonicityReport monotonicity_check(std::span<const Profile> profiles, double K, double tolerance) {
  MonotonicityReport rep;
  rep.K = K;
  rep.tolerance = tolerance;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (const Profile& pr : profiles) {
    const auto& rho = pr.rho;
    const std::size_t m = rho.size();
    if (m < 3) continue;
    std::vector<double> psi(m);
    for (std::size_t j = 0; j < m; ++j) psi[j] = 2.0 * K * rho[j] + pr.phi[j];
    for (std::size_t j = 1; j + 1 < m; ++j) {
      const auto twice = find_rho(rho, 2.0 * rho[j]);
      if (twice < 0) continue;
      const double dpsi = (psi[j + 1] - psi[j - 1]) / (rho[j + 1] - rho[j - 1]);
      const Margin mg{pr.center_id, rho[j], psi[j], dpsi - K * (1.0 - psi[twice])};
      rep.margins.push_back(mg);
      rep.min_margin = std::min(rep.min_margin, mg.margin);
      if (mg.margin < -tolerance) rep.violations.push_back(mg);
    }
  }
  if (rep.margins.empty()) rep.min_margin = 0.0;
  return rep;
}

KFit fit_K(std::span<const Profile> profiles, const KGrid& grid, double tolerance) {
  if (!(grid.min > 0.0) || !(grid.ratio > 1.0) || !(grid.max >= grid.min)) throw Error("invalid K grid");
  KFit fit;
  fit.grid = grid;
  if (monotonicity_check(profiles, 0.0, tolerance).ok()) {
    fit.found = true;
    return fit;
  }
  int j = 0;
  for (double K = grid.min; K <= grid.max * (1.0 + 1e-12); K *= grid.ratio, ++j) {
    if (monotonicity_check(profiles, K, tolerance).ok()) {
      fit.found = true;
      fit.K = K;
      fit.step = j + 1;
      return fit;
    }
  }
  fit.K = std::numeric_limits<double>::infinity();
  fit.step = j + 1;
  return fit;
}

StressReport stress_tensor(const Field& u, double eps, const Potential* p) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const Index N = dom.node_count();
  const auto raw = u.raw();
  const double inv_eps2 = p ? 1.0 / (eps * eps) : 0.0;
  StressReport rep;
  rep.tensor.assign(static_cast<std::size_t>(N * n * n), kNaN);
  rep.divergence.assign(static_cast<std::size_t>(N * n), kNaN);
  const auto interior = dom.interior();
  const Index count = static_cast<Index>(interior.size());
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < count; ++t) {
    const Index i = interior[t];
    const Jac g = central_jacobian(dom, raw, k, i);
    const double e = 0.5 * g.squaredNorm() + (p ? inv_eps2 * p->eval(load(raw, i, k)) : 0.0);
    for (int l = 0; l < n; ++l)
      for (int j = 0; j < n; ++j) rep.tensor[(i * n + l) * n + j] = g.col(l).dot(g.col(j)) - (l == j ? e : 0.0);
  }
  double sup = 0.0, sum = 0.0;
  Index used = 0;
  for (Index i : interior) {
    if (!full_stencil(dom, i)) continue;
    double sq = 0.0;
    for (int j = 0; j < n; ++j) {
      double div = 0.0;
      for (int l = 0; l < n; ++l) {
        const Index s = dom.stride(l);
        div += (rep.tensor[((i + s) * n + l) * n + j] - rep.tensor[((i - s) * n + l) * n + j]) / (2.0 * dom.h());
      }
      rep.divergence[i * n + j] = div;
      sq += div * div;
    }
    sup = std::max(sup, std::sqrt(sq));
    sum += sq;
    ++used;
  }
  rep.div_sup = sup;
  rep.div_l2 = used > 0 ? std::sqrt(sum / static_cast<double>(used)) : 0.0;
  rep.nodes = used;
  return rep;
}

BochnerReport bochner_residual(const Field& u, double eps, const Potential& p, double delta) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const auto e = energy_density(u, eps, &p);
  const auto raw = u.raw();
  const double h2 = dom.h() * dom.h();
  BochnerReport rep;
  std::vector<double> ratios;
  double best = 0.0;
  for (Index i : dom.interior()) {
    if (!uncut_stencil(dom, i)) continue;
    if (!(p.manifold().distance(load(raw, i, k)) < delta)) {
      ++rep.excluded;
      continue;
    }
    ++rep.qualifying;
    double lap = 0.0;
    for (int d = 0; d < n; ++d) lap += (e[i + dom.stride(d)] + e[i - dom.stride(d)] - 2.0 * e[i]) / h2;
    const double r = -lap;
    if (e[i] > 0.0) {
      const double q = r / (e[i] * e[i]);
      ratios.push_back(q);
      best = std::max(best, q);
    } else if (r > 0.0) {
      best = std::numeric_limits<double>::infinity();
    }
  }
  rep.empty = rep.qualifying == 0;
  rep.fitted_C = best;
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    for (double level : rep.quantile_levels) {
      const auto idx = static_cast<std::size_t>(std::floor(level * static_cast<double>(ratios.size() - 1)));
      rep.quantiles.push_back(ratios[idx]);
    }
  } else {
    rep.quantiles.assign(rep.quantile_levels.size(), 0.0);
  }
  return rep;
}

SingularSet singular_set_estimate(const Field& u_star, double theta, double scale) {
  const DomainSpec& dom = u_star.domain();
  if (!(scale > 2.0 * dom.h())) throw DiagnosticsError("singular-set scale must exceed 2h");
  SingularSet out;
  if (std::isinf(theta) && theta > 0.0) return out;
  const auto dens = cell_energy_density(u_star, nullptr, 1.0);
  const Index N = dom.node_count();
  std::vector<double> density(static_cast<std::size_t>(N), 0.0);
  const double rho[1] = {scale};
  const double factor = std::pow(scale, 2 - dom.n());
#pragma omp parallel for schedule(dynamic, 64)
  for (Index i = 0; i < N; ++i)
    if (dom.valued(i)) density[i] = factor * ball_energy_profile(dom, dens, dom.coords(i), rho)[0];
  std::vector<char> member(static_cast<std::size_t>(N), 0);
  for (Index i = 0; i < N; ++i) {
    if (!dom.valued(i)) continue;
    out.max_density = std::max(out.max_density, density[i]);
    if (density[i] > theta) {
      out.nodes.push_back(i);
      member[i] = 1;
    }
  }
  std::vector<char> seen(static_cast<std::size_t>(N), 0);
  for (Index start : out.nodes) {
    if (seen[start]) continue;
    std::vector<Index> comp;
    std::deque<Index> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const Index i = queue.front();
      queue.pop_front();
      comp.push_back(i);
      for (int d = 0; d < dom.n(); ++d)
        for (int dir : {-1, 1}) {
          const Index j = dom.neighbor(i, d, dir);
          if (j >= 0 && member[j] && !seen[j]) {
            seen[j] = 1;
            queue.push_back(j);
          }
        }
    }
    std::sort(comp.begin(), comp.end());
    double diam = 0.0;
    if (comp.size() <= 4000) {
      for (std::size_t a = 0; a < comp.size(); ++a)
        for (std::size_t b = a + 1; b < comp.size(); ++b)
          diam = std::max(diam, (dom.coords(comp[a]) - dom.coords(comp[b])).norm());
    } else {
      Point lo = dom.coords(comp[0]), hi = lo;
      for (Index i : comp) {
        lo = lo.cwiseMin(dom.coords(i));
        hi = hi.cwiseMax(dom.coords(i));
      }
      diam = (hi - lo).norm();
    }
    out.components.push_back(std::move(comp));
    out.component_diameter.push_back(diam);
  }
  return out;
}

std::vector<Index> annulus_nodes(const DomainSpec& dom, const Point& center, double inner, double outer) {
  std::vector<Index> out;
  for (Index i = 0; i < dom.node_count(); ++i) {
    if (!dom.valued(i)) continue;
    const double r = (dom.coords(i) - center).norm();
    if (r >= inner && r <= outer) out.push_back(i);
  }
  return out;
}

std::vector<Index> complement_nodes(const DomainSpec& dom, std::span<const Point> excluded, double margin) {
  std::vector<Index> out;
  for (Index i = 0; i < dom.node_count(); ++i) {
    if (!dom.valued(i)) continue;
    const Point x = dom.coords(i);
    bool keep = true;
    for (const Point& y : excluded)
      if ((x - y).norm() <= margin) {
        keep = false;
        break;
      }
    if (keep) out.push_back(i);
  }
  return out;
}

std::vector<double> uniform_convergence_profile(std::span<const Field* const> fields, const Field& u_star,
                                                std::span<const Index> compact) {
  if (compact.empty()) throw DiagnosticsError("the compact set X contains no grid nodes");
  const int k = u_star.k();
  const auto ref = u_star.raw();
  std::vector<double> out;
  for (const Field* f : fields) {
    if (f->domain().node_count() != u_star.domain().node_count() || f->k() != k)
      throw DiagnosticsError("fields do not share a grid");
    const auto raw = f->raw();
    double sup = 0.0;
    for (Index i : compact) {
      double sq = 0.0;
      for (int c = 0; c < k; ++c) sq += (raw[i * k + c] - ref[i * k + c]) * (raw[i * k + c] - ref[i * k + c]);
      sup = std::max(sup, std::sqrt(sq));
    }
    out.push_back(sup);
  }
  return out;
}

Jac boundary_gradient(const Field& u, Index node) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n();
  const Point nu = dom.normal(node);
  const Jac g = discrete_gradient(u, node);
  const Eigen::MatrixXd tang = Eigen::MatrixXd::Identity(n, n) - nu * nu.transpose();
  const auto dn = boundary_normal_derivative(u, node);
  return g * tang + dn.value * nu.transpose();
}

BoundaryGradientReport boundary_gradient_report(const Field& u, const Potential& p) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n();
  BoundaryGradientReport rep;
  for (Index i : dom.boundary()) {
    const Point nu = dom.normal(i);
    const Jac g = discrete_gradient(u, i);
    const Eigen::MatrixXd tang = Eigen::MatrixXd::Identity(n, n) - nu * nu.transpose();
    const auto dn = boundary_normal_derivative(u, i);
    if (dn.first_order) ++rep.first_order;
    const Eigen::MatrixXd gt = g * tang;
    const Eigen::MatrixXd full = gt + dn.value * nu.transpose();
    rep.normal_sup = std::max(rep.normal_sup, dn.value.norm());
    rep.tangential_sup = std::max(rep.tangential_sup, gt.norm());
    rep.gradient_sup = std::max(rep.gradient_sup, full.norm());
    rep.distance_sup = std::max(rep.distance_sup, p.manifold().distance(u.value(i)));
  }
  return rep;
}

WitnessReport small_energy_witness(const Field& u, double eps, const Potential& p, std::span<const Point> centers,
                                   double radius, double percentile) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n();
  const double h = dom.h();
  WitnessReport rep;
  rep.radius = radius;
  rep.centers = static_cast<int>(centers.size());
  if (centers.empty()) return rep;
  const auto rhos = geometric_rho_grid(4.0 * h, radius);
  const auto cells = cell_energy_density(u, &p, eps);
  const auto nodal = energy_density(u, eps, &p);
  std::vector<double> sup_phi(centers.size()), sup_e(centers.size(), 0.0);
  const Index count = static_cast<Index>(centers.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (Index c = 0; c < count; ++c) {
    const auto phi = renormalized_profile(dom, cells, centers[c], rhos);
    sup_phi[c] = *std::max_element(phi.begin(), phi.end());
    std::array<Index, kMaxDim> lo{0, 0, 0}, hi{0, 0, 0}, ijk{0, 0, 0};
    for (int d = 0; d < n; ++d) {
      lo[d] = std::clamp<Index>(static_cast<Index>(std::floor((centers[c][d] - 0.5 * radius - dom.lo()[d]) / h)), 0,
                                dom.dims()[d] - 1);
      hi[d] = std::clamp<Index>(static_cast<Index>(std::ceil((centers[c][d] + 0.5 * radius - dom.lo()[d]) / h)), 0,
                                dom.dims()[d] - 1);
    }
    double best = 0.0;
    auto visit = [&]() {
      const Index i = dom.index(ijk);
      if (dom.mass(i) <= 0.0) return;
      if ((dom.coords(i) - centers[c]).norm() <= 0.5 * radius) best = std::max(best, nodal[i]);
    };
    for (ijk[0] = lo[0]; ijk[0] <= hi[0]; ++ijk[0])
      for (ijk[1] = lo[1]; ijk[1] <= hi[1]; ++ijk[1]) {
        if (n == 2) {
          visit();
          continue;
        }
        for (ijk[2] = lo[2]; ijk[2] <= hi[2]; ++ijk[2]) visit();
      }
    sup_e[c] = best;
  }
  std::vector<double> sorted = sup_phi;
  std::sort(sorted.begin(), sorted.end());
  rep.eta = sorted[static_cast<std::size_t>(std::floor(percentile * static_cast<double>(sorted.size() - 1)))];
  const double r2 = radius * radius;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (sup_phi[c] > rep.eta) continue;
    ++rep.qualifying;
    rep.fitted_C = std::max(rep.fitted_C, r2 * sup_e[c] / (rep.eta + r2));
  }
  return rep;
}

PropagationReport propagation_check(std::span<const Profile> profiles, double K, double alpha_max, double tolerance) {
  PropagationReport rep;
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  for (const Profile& pr : profiles) {
    const auto& rho = pr.rho;
    for (std::size_t j0 = 1; j0 < rho.size(); ++j0) {
      const auto j2 = find_rho(rho, 2.0 * rho[j0]);
      if (j2 < 0) continue;
      const double alpha = *std::max_element(pr.phi.begin() + static_cast<std::ptrdiff_t>(j0), pr.phi.begin() + j2 + 1);
      if (alpha > alpha_max) continue;
      ++rep.premises;
      const double bound = alpha + 2.0 * K * rho[j0];
      bool bad = false;
      for (std::size_t j = 0; j < j0; ++j) {
        const double excess = pr.phi[j] - bound;
        rep.worst_excess = std::max(rep.worst_excess, excess);
        bad = bad || excess > tolerance;
      }
      if (bad) ++rep.violations;
    }
  }
  if (rep.premises == 0) rep.worst_excess = 0.0;
  return rep;
}

std::vector<Point> default_ball_centers(const Point& center, double radius, int n) {
  std::vector<Point> out{center};
  for (double frac : {0.5, 1.0})
    for (int d = 0; d < n; ++d)
      for (int s : {-1, 1}) {
        Point x = center;
        x[d] += s * frac * radius;
        out.push_back(x);
      }
  const double diag = radius / std::sqrt(static_cast<double>(n));
  for (int mask = 0; mask < (1 << n); ++mask) {
    Point x = center;
    for (int d = 0; d < n; ++d) x[d] += ((mask >> d) & 1 ? 1.0 : -1.0) * diag;
    out.push_back(x);
  }
  return out;
}

std::vector<Point> lattice_centers(const DomainSpec& dom, double spacing) {
  if (!(spacing > 0.0)) throw Error("lattice spacing must be positive");
  const int n = dom.n();
  const Point mid = 0.5 * (dom.lo() + dom.hi());
  std::array<int, kMaxDim> half{0, 0, 0};
  for (int d = 0; d < n; ++d) half[d] = static_cast<int>(std::floor(0.5 * (dom.hi()[d] - dom.lo()[d]) / spacing));
  std::vector<Point> out;
  std::array<int, kMaxDim> m{0, 0, 0};
  auto visit = [&]() {
    Point x = mid;
    for (int d = 0; d < n; ++d) x[d] += m[d] * spacing;
    if (dom.signed_distance(x) <= 0.0) out.push_back(x);
  };
  for (m[0] = -half[0]; m[0] <= half[0]; ++m[0])
    for (m[1] = -half[1]; m[1] <= half[1]; ++m[1]) {
      if (n == 2) {
        visit();
        continue;
      }
      for (m[2] = -half[2]; m[2] <= half[2]; ++m[2]) visit();
    }
  return out;
}

}  // namespace relaxlab

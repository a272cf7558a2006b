#include "relaxlab/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace relaxlab {

namespace {

Vec random_unit(Rng& rng, int k) {
  Vec v(k);
  double norm = 0.0;
  while (norm < 1e-8) {
    for (int i = 0; i < k; ++i) v[i] = rng.normal();
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace

// ---------------------------------------------------------------------------
// VacuumManifold

Vec VacuumManifold::project(const Vec& z) const {
  const Vec q = project_unchecked(z);
  const double d = (z - q).norm();
  if (d > tubular_radius_) {
    throw TubeError("point at distance " + std::to_string(d) + " from the vacuum manifold lies outside the tube of radius " +
                    std::to_string(tubular_radius_));
  }
  return q;
}

Mat VacuumManifold::normal_projector(const Vec& z) const {
  const int k = ambient_dim();
  return Mat::Identity(k, k) - tangent_projector(z);
}

Mat VacuumManifold::normal_basis(const Vec& z) const {
  const Mat p = normal_projector(z);
  Eigen::SelfAdjointEigenSolver<Mat> eig(p);
  const int k = ambient_dim();
  int count = 0;
  for (int i = 0; i < k; ++i)
    if (eig.eigenvalues()[i] > 0.5) ++count;
  Mat basis(k, count);
  int col = 0;
  for (int i = 0; i < k; ++i)
    if (eig.eigenvalues()[i] > 0.5) basis.col(col++) = eig.eigenvectors().col(i);
  return basis;
}

double VacuumManifold::distance(const Vec& z) const {
  try {
    return (z - project_unchecked(z)).norm();
  } catch (const TubeError&) {
    Rng rng(0x5eedu);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4096; ++i) best = std::min(best, (z - sample(rng)).norm());
    return best;
  }
}

// ---------------------------------------------------------------------------
// Sphere

SphereManifold::SphereManifold(int k) : VacuumManifold(k) {
  if (k < 1 || k > kMaxTarget) throw Error("sphere target dimension out of range: " + std::to_string(k));
  tubular_radius_ = 0.5;
}

Vec SphereManifold::project_unchecked(const Vec& z) const {
  const double r = z.norm();
  if (r == 0.0) throw TubeError("projection onto the sphere is undefined at the origin");
  return z / r;
}

Mat SphereManifold::tangent_projector(const Vec& z) const {
  const Vec q = project_unchecked(z);
  const int k = ambient_dim();
  return Mat::Identity(k, k) - q * q.transpose();
}

Vec SphereManifold::sample(Rng& rng) const { return random_unit(rng, ambient_dim()); }

double SphereManifold::distance(const Vec& z) const { return std::abs(z.norm() - 1.0); }

// ---------------------------------------------------------------------------
// Q-tensors

namespace qtensor {

const std::array<Eigen::Matrix3d, 5>& basis() {
  static const std::array<Eigen::Matrix3d, 5> e = [] {
    std::array<Eigen::Matrix3d, 5> b;
    for (auto& m : b) m.setZero();
    const double r2 = std::sqrt(2.0);
    const double r6 = std::sqrt(6.0);
    b[0].diagonal() << -1.0 / r6, -1.0 / r6, 2.0 / r6;
    b[1].diagonal() << 1.0 / r2, -1.0 / r2, 0.0;
    b[2](0, 1) = b[2](1, 0) = 1.0 / r2;
    b[3](0, 2) = b[3](2, 0) = 1.0 / r2;
    b[4](1, 2) = b[4](2, 1) = 1.0 / r2;
    return b;
  }();
  return e;
}

Eigen::Matrix3d to_matrix(const Vec& q) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  const auto& e = basis();
  for (int i = 0; i < 5; ++i) m += q[i] * e[i];
  return m;
}

Vec from_matrix(const Eigen::Matrix3d& m) {
  Vec q(5);
  const auto& e = basis();
  for (int i = 0; i < 5; ++i) q[i] = (m.cwiseProduct(e[i])).sum();
  return q;
}

}  // namespace qtensor

// ---------------------------------------------------------------------------
// Uniaxial manifold

UniaxialManifold::UniaxialManifold(double order_parameter)
    : VacuumManifold(5), s_star_(order_parameter) {
  if (!(order_parameter > 0.0)) throw Error("uniaxial order parameter must be positive");
  tubular_radius_ = 0.5 * estimate_focal_radius(*this, 256, 0x0fa1u, 2.0 * s_star_);
}

Vec UniaxialManifold::uniaxial(const Eigen::Vector3d& director) const {
  const Eigen::Vector3d n = director.normalized();
  return qtensor::from_matrix(s_star_ * (n * n.transpose() - Eigen::Matrix3d::Identity() / 3.0));
}

Vec UniaxialManifold::project_unchecked(const Vec& z) const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(qtensor::to_matrix(z));
  const auto& lam = eig.eigenvalues();  // ascending
  const double scale = std::max({std::abs(lam[0]), std::abs(lam[2]), 1.0});
  if (lam[2] - lam[1] <= 1e-12 * scale)
    throw TubeError("leading Q-tensor eigenvalue is degenerate; nearest uniaxial state is not unique");
  return uniaxial(eig.eigenvectors().col(2));
}

Mat UniaxialManifold::tangent_projector(const Vec& z) const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(qtensor::to_matrix(z));
  const auto& lam = eig.eigenvalues();
  const double scale = std::max({std::abs(lam[0]), std::abs(lam[2]), 1.0});
  if (lam[2] - lam[1] <= 1e-12 * scale)
    throw TubeError("leading Q-tensor eigenvalue is degenerate; tangent space undefined");
  const Eigen::Vector3d n = eig.eigenvectors().col(2);
  Mat p = Mat::Zero(5, 5);
  for (int i = 0; i < 2; ++i) {
    const Eigen::Vector3d m = eig.eigenvectors().col(i);
    const Vec t = qtensor::from_matrix((n * m.transpose() + m * n.transpose()) / std::sqrt(2.0));
    p += t * t.transpose();
  }
  return p;
}

Vec UniaxialManifold::sample(Rng& rng) const {
  const Vec n = random_unit(rng, 3);
  return uniaxial(Eigen::Vector3d(n[0], n[1], n[2]));
}

double UniaxialManifold::distance(const Vec& z) const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(qtensor::to_matrix(z));
  const double lam_max = eig.eigenvalues()[2];
  const double d2 = z.squaredNorm() - 2.0 * s_star_ * lam_max + 2.0 * s_star_ * s_star_ / 3.0;
  return std::sqrt(std::max(0.0, d2));
}

// ---------------------------------------------------------------------------
// Ginzburg-Landau

GinzburgLandau::GinzburgLandau(int k) : Potential(std::make_shared<SphereManifold>(k), 1.0) {}

double GinzburgLandau::eval(const Vec& z) const {
  const double w = 1.0 - z.squaredNorm();
  return w * w;
}

Vec GinzburgLandau::grad(const Vec& z) const { return -4.0 * (1.0 - z.squaredNorm()) * z; }

Mat GinzburgLandau::hess(const Vec& z) const {
  const int k = dim();
  return -4.0 * (1.0 - z.squaredNorm()) * Mat::Identity(k, k) + 8.0 * z * z.transpose();
}

double GinzburgLandau::delta(const Vec& z, const Vec& s) const {
  // (1-|z+s|^2)^2 - (1-|z|^2)^2 = -w (2 (1-|z|^2) - w),  w = 2 z.s + |s|^2
  const double w = 2.0 * z.dot(s) + s.squaredNorm();
  return -w * (2.0 * (1.0 - z.squaredNorm()) - w);
}

std::shared_ptr<const Potential> make_ginzburg_landau(int k) {
  if (k < 1) throw Error("Ginzburg-Landau target dimension must be >= 1");
  return std::make_shared<GinzburgLandau>(k);
}

// ---------------------------------------------------------------------------
// Landau-de Gennes

namespace {

double uniaxial_bulk(double a, double b2, double c2, double s) {
  // tr Q^2 = 2 s^2 / 3, tr Q^3 = 2 s^3 / 9 for Q = s (n n^T - I/3)
  return a * s * s / 3.0 - 2.0 * b2 * s * s * s / 27.0 + c2 * s * s * s * s / 9.0;
}

double solve_order_parameter(double a, double b2, double c2) {
  if (a > 0.0) throw Error("Landau-de Gennes coefficient a must be <= 0");
  if (!(b2 > 0.0)) throw Error("Landau-de Gennes coefficient b2 must be > 0");
  if (!(c2 > 0.0)) throw Error("Landau-de Gennes coefficient c2 must be > 0");
  auto g = [&](double s) { return uniaxial_bulk(a, b2, c2, s); };
  // g is decreasing then increasing on (0, inf) for a <= 0; bracket the well.
  double hi = 1.0;
  while (g(2.0 * hi) <= g(hi)) hi *= 2.0;
  double s = golden_section_minimize(g, 0.0, 2.0 * hi, 1e-12);
  // value comparisons stall near sqrt(machine eps); polish on g'(s) = 0
  for (int it = 0; it < 4; ++it) {
    const double d1 = 2.0 * a * s / 3.0 - 2.0 * b2 * s * s / 9.0 + 4.0 * c2 * s * s * s / 9.0;
    const double d2 = 2.0 * a / 3.0 - 4.0 * b2 * s / 9.0 + 4.0 * c2 * s * s / 3.0;
    if (!(d2 > 0.0)) break;
    s -= d1 / d2;
  }
  return s;
}

}  // namespace

LandauDeGennes::LandauDeGennes(double a, double b2, double c2)
    : LandauDeGennes(a, b2, c2, solve_order_parameter(a, b2, c2)) {}

LandauDeGennes::LandauDeGennes(double a, double b2, double c2, double s_star)
    : Potential(std::make_shared<UniaxialManifold>(s_star),
                // grad f . q >= |q|^2 (a - b2 |q| / sqrt 6 + c2 |q|^2) since tr Q^3 <= |Q|^3 / sqrt 6
                (b2 / std::sqrt(6.0) + std::sqrt(b2 * b2 / 6.0 - 4.0 * a * c2)) / (2.0 * c2)),
      a_(a), b2_(b2), c2_(c2), s_star_(s_star) {
  shift_ = uniaxial_bulk(a, b2, c2, s_star);
}

double LandauDeGennes::uniaxial_reduction(double s) const { return uniaxial_bulk(a_, b2_, c2_, s); }

double LandauDeGennes::bulk(const Vec& q) const {
  const Eigen::Matrix3d m = qtensor::to_matrix(q);
  const double tr2 = q.squaredNorm();
  const double tr3 = (m * m * m).trace();
  return 0.5 * a_ * tr2 - b2_ / 3.0 * tr3 + 0.25 * c2_ * tr2 * tr2;
}

double LandauDeGennes::eval(const Vec& q) const { return bulk(q) - shift_; }

Vec LandauDeGennes::grad(const Vec& q) const {
  const Eigen::Matrix3d m = qtensor::to_matrix(q);
  const Eigen::Matrix3d m2 = m * m;
  const double tr2 = q.squaredNorm();
  const auto& e = qtensor::basis();
  Vec g(5);
  for (int i = 0; i < 5; ++i) g[i] = a_ * q[i] - b2_ * m2.cwiseProduct(e[i]).sum() + c2_ * tr2 * q[i];
  return g;
}

Mat LandauDeGennes::hess(const Vec& q) const {
  const Eigen::Matrix3d m = qtensor::to_matrix(q);
  const double tr2 = q.squaredNorm();
  const auto& e = qtensor::basis();
  Mat h(5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = i; j < 5; ++j) {
      const double cubic = ((e[j] * m + m * e[j]).cwiseProduct(e[i])).sum();
      double v = -b2_ * cubic + 2.0 * c2_ * q[i] * q[j];
      if (i == j) v += a_ + c2_ * tr2;
      h(i, j) = h(j, i) = v;
    }
  }
  return h;
}

std::shared_ptr<const Potential> make_landau_de_gennes(double a, double b2, double c2) {
  return std::make_shared<LandauDeGennes>(a, b2, c2);
}

// ---------------------------------------------------------------------------
// Numerics

double golden_section_minimize(const std::function<double(double)>& g, double lo, double hi,
                               double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = g(c), gd = g(d);
  while (b - a > tol * std::max(1.0, std::abs(a) + std::abs(b))) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = g(d);
    }
  }
  return 0.5 * (a + b);
}

Quadrature gauss_legendre_unit(int order) {
  if (order < 1) throw Error("quadrature order must be >= 1");
  Quadrature q;
  q.nodes.resize(order);
  q.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= order; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * x * p2 - (j - 1.0) * p3) / j;
      }
      dp = order * (x * p1 - p2) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // map [-1, 1] -> [0, 1]
    q.nodes[i] = 0.5 * (1.0 - x);
    q.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

Mat normal_form(const Potential& p, const Vec& z, int quad_order) {
  const Vec base = p.manifold().project(z);
  const Quadrature quad = gauss_legendre_unit(quad_order);
  const int k = p.dim();
  Mat a = Mat::Zero(k, k);
  for (int i = 0; i < quad_order; ++i) {
    const double t = quad.nodes[i];
    a += quad.weights[i] * (1.0 - t) * p.hess(t * z + (1.0 - t) * base);
  }
  return 0.5 * (a + a.transpose());
}

HypothesisReport verify_hypotheses(const Potential& p, int sample_count, std::uint64_t seed) {
  if (sample_count < 100) throw Error("verify_hypotheses needs at least 100 samples");
  HypothesisReport rep;
  Rng rng(seed);
  const int k = p.dim();
  const double r0 = std::max(p.radial_growth_radius(), 1e-6);
  auto track_asymmetry = [&](const Mat& h) {
    rep.max_hessian_asymmetry = std::max(rep.max_hessian_asymmetry, (h - h.transpose()).cwiseAbs().maxCoeff());
  };

  for (int i = 0; i < sample_count; ++i) {
    const Vec z = random_unit(rng, k) * rng.uniform(r0, 3.0 * r0);
    const double radial = p.grad(z).dot(z);
    if (radial < -1e-12 * (1.0 + z.squaredNorm() * z.squaredNorm())) rep.growth_violations.push_back(z);
    track_asymmetry(p.hess(z));
  }
  rep.growth_samples = sample_count;

  rep.min_normal_eigenvalue = std::numeric_limits<double>::infinity();
  const VacuumManifold& m = p.manifold();
  for (int i = 0; i < sample_count; ++i) {
    const Vec q = m.sample(rng);
    const Mat h = p.hess(q);
    track_asymmetry(h);
    const Mat b = m.normal_basis(q);
    if (b.cols() == 0) continue;
    const Mat restricted = b.transpose() * h * b;
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (restricted + restricted.transpose()));
    const double lam = eig.eigenvalues()[0];
    rep.min_normal_eigenvalue = std::min(rep.min_normal_eigenvalue, lam);
    if (lam <= 1e-10) rep.nondegeneracy_violations.push_back(q);
  }
  rep.manifold_samples = sample_count;
  return rep;
}

double estimate_alpha0(const Potential& p, int sample_count, std::uint64_t seed, int quad_order) {
  Rng rng(seed);
  const VacuumManifold& m = p.manifold();
  const int k = p.dim();
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < sample_count; ++i) {
    const Vec q = m.sample(rng);
    const Mat nb = m.normal_basis(q);
    if (nb.cols() == 0) continue;
    Vec xi = Vec::Zero(nb.cols());
    for (int j = 0; j < nb.cols(); ++j) xi[j] = rng.normal();
    const Vec dir = (nb * xi).normalized();
    const Vec z = q + 0.999 * rng.uniform() * m.tubular_radius() * dir;
    const Mat a = normal_form(p, z, quad_order);
    const Mat b = m.normal_basis(z);
    const Mat restricted = b.transpose() * a * b;
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (restricted + restricted.transpose()));
    alpha = std::min(alpha, eig.eigenvalues()[0]);
  }
  (void)k;
  return alpha;
}

double estimate_focal_radius(const VacuumManifold& m, int sample_count, std::uint64_t seed,
                             double search_radius) {
  Rng rng(seed);
  const int k = m.ambient_dim();
  double focal = search_radius;
  constexpr int kScanSteps = 64;
  for (int i = 0; i < sample_count; ++i) {
    const Vec q = m.sample(rng);
    Vec g(k);
    for (int j = 0; j < k; ++j) g[j] = rng.normal();
    Vec nu = m.normal_projector(q) * g;
    if (nu.norm() < 1e-8) continue;
    nu.normalize();
    auto moved = [&](double t) {
      try {
        return (m.project_unchecked(q + t * nu) - q).norm() > 1e-6 * (1.0 + q.norm());
      } catch (const TubeError&) {
        return true;
      }
    };
    double lo = 0.0, hi = -1.0;
    for (int s = 1; s <= kScanSteps; ++s) {
      const double t = search_radius * s / kScanSteps;
      if (moved(t)) {
        hi = t;
        break;
      }
      lo = t;
    }
    if (hi < 0.0) continue;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      (moved(mid) ? hi : lo) = mid;
    }
    focal = std::min(focal, hi);
  }
  return focal;
}

}  // namespace relaxlab

#pragma once

// Potentials f : R^k -> [0, inf) whose zero set is a smooth vacuum manifold N,
// together with the nearest-point projection onto N and the normal-form
// matrix A(z) with f(z) = z_perp . A(z) z_perp inside the tubular neighbourhood.

#include "relaxlab/random.hpp"
#include "relaxlab/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace relaxlab {

/// Nearest-point projection onto the vacuum manifold and its differential.
class VacuumManifold {
public:
  explicit VacuumManifold(int ambient_dim) : ambient_dim_(ambient_dim) {}
  virtual ~VacuumManifold() = default;

  int ambient_dim() const { return ambient_dim_; }
  virtual int intrinsic_dim() const = 0;
  virtual std::string tag() const = 0;

  /// Nearest point on N without the tube check. Throws TubeError where the
  /// nearest point is not unique (e.g. the origin for a sphere).
  virtual Vec project_unchecked(const Vec& z) const = 0;

  /// Orthogonal projector onto T_{pi(z)} N, in ambient coordinates.
  virtual Mat tangent_projector(const Vec& z) const = 0;

  /// A uniformly distributed point of N (with respect to the natural symmetry).
  virtual Vec sample(Rng& rng) const = 0;

  /// pi(z); throws TubeError unless |z - pi(z)| <= tubular_radius().
  Vec project(const Vec& z) const;

  Mat normal_projector(const Vec& z) const;

  /// Orthonormal basis (columns) of the normal space at pi(z).
  Mat normal_basis(const Vec& z) const;

  /// dist(z, N): exact via the projection where it is defined, otherwise the
  /// smallest distance to a fixed dense sample of N.
  virtual double distance(const Vec& z) const;

  double tubular_radius() const { return tubular_radius_; }
  void set_tubular_radius(double delta) { tubular_radius_ = delta; }

protected:
  double tubular_radius_ = 0.5;

private:
  int ambient_dim_;
};

/// The unit sphere S^{k-1} in R^k.
class SphereManifold final : public VacuumManifold {
public:
  explicit SphereManifold(int k);

  int intrinsic_dim() const override { return ambient_dim() - 1; }
  std::string tag() const override { return "sphere"; }
  Vec project_unchecked(const Vec& z) const override;
  Mat tangent_projector(const Vec& z) const override;
  Vec sample(Rng& rng) const override;
  double distance(const Vec& z) const override;
};

/// Uniaxial Q-tensors { s (n n^T - I/3) : n in S^2 }, in the orthonormal
/// 5-component basis of symmetric traceless 3x3 matrices.
class UniaxialManifold final : public VacuumManifold {
public:
  explicit UniaxialManifold(double order_parameter);

  int intrinsic_dim() const override { return 2; }
  std::string tag() const override { return "uniaxial"; }
  Vec project_unchecked(const Vec& z) const override;
  Mat tangent_projector(const Vec& z) const override;
  Vec sample(Rng& rng) const override;
  double distance(const Vec& z) const override;

  double order_parameter() const { return s_star_; }
  Vec uniaxial(const Eigen::Vector3d& director) const;

private:
  double s_star_;
};

namespace qtensor {
/// Orthonormal basis E_m of symmetric traceless 3x3 matrices (tr(E_m E_l) = delta_ml).
const std::array<Eigen::Matrix3d, 5>& basis();
Eigen::Matrix3d to_matrix(const Vec& q);
Vec from_matrix(const Eigen::Matrix3d& m);
}  // namespace qtensor

/// A potential satisfying radial growth, smoothness and nondegenerate
/// vanishing on its vacuum manifold.
class Potential {
public:
  Potential(std::shared_ptr<const VacuumManifold> manifold, double radial_growth_radius)
      : manifold_(std::move(manifold)), radius_(radial_growth_radius) {}
  virtual ~Potential() = default;

  int dim() const { return manifold_->ambient_dim(); }
  virtual std::string name() const = 0;

  virtual double eval(const Vec& z) const = 0;
  virtual Vec grad(const Vec& z) const = 0;
  virtual Mat hess(const Vec& z) const = 0;

  /// f(z + s) - f(z), evaluated without cancellation where possible.
  virtual double delta(const Vec& z, const Vec& s) const { return eval(z + s) - eval(z); }

  double radial_growth_radius() const { return radius_; }
  const VacuumManifold& manifold() const { return *manifold_; }
  std::shared_ptr<const VacuumManifold> manifold_ptr() const { return manifold_; }

private:
  std::shared_ptr<const VacuumManifold> manifold_;
  double radius_;
};

/// f(z) = (1 - |z|^2)^2 on R^k.
class GinzburgLandau final : public Potential {
public:
  explicit GinzburgLandau(int k);
  std::string name() const override { return "ginzburg_landau"; }
  double eval(const Vec& z) const override;
  Vec grad(const Vec& z) const override;
  Mat hess(const Vec& z) const override;
  double delta(const Vec& z, const Vec& s) const override;
};

/// Landau-de Gennes bulk potential
///   (a/2) tr Q^2 - (b2/3) tr Q^3 + (c2/4) (tr Q^2)^2 - min,
/// shifted so that its minimum is zero.
class LandauDeGennes final : public Potential {
public:
  LandauDeGennes(double a, double b2, double c2);
  std::string name() const override { return "landau_de_gennes"; }
  double eval(const Vec& q) const override;
  Vec grad(const Vec& q) const override;
  Mat hess(const Vec& q) const override;

  /// Unshifted bulk energy.
  double bulk(const Vec& q) const;
  double order_parameter() const { return s_star_; }
  double shift() const { return shift_; }
  /// Bulk energy restricted to uniaxial tensors s (n n^T - I/3).
  double uniaxial_reduction(double s) const;

  double a() const { return a_; }
  double b2() const { return b2_; }
  double c2() const { return c2_; }

private:
  LandauDeGennes(double a, double b2, double c2, double s_star);
  double a_, b2_, c2_;
  double s_star_ = 0.0;
  double shift_ = 0.0;
};

std::shared_ptr<const Potential> make_ginzburg_landau(int k);
std::shared_ptr<const Potential> make_landau_de_gennes(double a, double b2, double c2);

/// Minimizer of a unimodal function on [lo, hi] by golden-section search.
double golden_section_minimize(const std::function<double(double)>& g, double lo, double hi,
                               double tol);

/// Gauss-Legendre nodes and weights on [0, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre_unit(int order);

/// A(z) = int_0^1 (1 - t) Hess f(t z + (1 - t) pi(z)) dt.
/// Throws TubeError if z lies outside the tubular neighbourhood.
Mat normal_form(const Potential& p, const Vec& z, int quad_order = 16);

struct HypothesisReport {
  int growth_samples = 0;
  std::vector<Vec> growth_violations;       ///< |z| >= R with grad f(z) . z < 0
  int manifold_samples = 0;
  std::vector<Vec> nondegeneracy_violations; ///< points of N with a non-positive normal eigenvalue
  double min_normal_eigenvalue = 0.0;       ///< estimate of 2 alpha_0
  double max_hessian_asymmetry = 0.0;

  bool ok() const { return growth_violations.empty() && nondegeneracy_violations.empty(); }
  double alpha0() const { return 0.5 * min_normal_eigenvalue; }
};

/// Monte-Carlo check of the radial growth and nondegeneracy hypotheses.
HypothesisReport verify_hypotheses(const Potential& p, int sample_count, std::uint64_t seed);

/// Smallest normal eigenvalue of A(z) over random tube samples: the fitted alpha_0.
double estimate_alpha0(const Potential& p, int sample_count, std::uint64_t seed,
                       int quad_order = 16);

/// Smallest distance along sampled normal rays at which the nearest-point
/// projection stops returning the base point.
double estimate_focal_radius(const VacuumManifold& m, int sample_count, std::uint64_t seed,
                             double search_radius);

}  // namespace relaxlab

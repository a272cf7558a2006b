#pragma once

// Quantities monitored along a relaxation run: energy density, renormalized
// energy profiles and the boundary monotonicity function, the stress-energy
// tensor, the Bochner residual, singular-set estimates and convergence
// towards the harmonic-map limit.

#include "relaxlab/grid.hpp"
#include "relaxlab/potentials.hpp"

#include <string>
#include <vector>

namespace relaxlab {

/// Nodal energy density: each edge term is split between its endpoints, so
/// sum_i m_i e_i equals the discrete energy. Zero at nodes without mass.
std::vector<double> energy_density(const Field& u, double eps, const Potential* p);

/// dist(u_i, N) at valued nodes (NaN elsewhere).
std::vector<double> distance_to_manifold(const Field& u, const VacuumManifold& m);

/// Geometric radius grid hi * ratio^{-j}, ascending, down to the first value
/// not below lo. ratio = 2^{1/8} puts 2 rho exactly eight points above rho.
std::vector<double> geometric_rho_grid(double lo, double hi, int per_octave = 8);

/// phi(rho) = rho^{2-n} int_{Omega cap B_rho(x0)} e. Throws if some rho <= 2h.
std::vector<double> renormalized_profile(const Field& u, double eps, const Potential* p, const Point& x0,
                                         std::span<const double> rhos);
/// Same, from a precomputed cell density.
std::vector<double> renormalized_profile(const DomainSpec& dom, std::span<const double> cell_density,
                                         const Point& x0, std::span<const double> rhos);

struct Profile {
  int center_id = 0;
  Point center;
  bool boundary_touching = false;
  std::vector<double> rho;  ///< geometric, 2^{1/8} apart
  std::vector<double> phi;
};

struct Margin {
  int center_id = 0;
  double rho = 0.0;
  double psi = 0.0;
  double margin = 0.0;  ///< psi'(rho) - K (1 - psi(2 rho))
};

struct MonotonicityReport {
  double K = 0.0;
  double tolerance = 0.0;
  std::vector<Margin> margins;
  std::vector<Margin> violations;  ///< margin < -tolerance
  double min_margin = 0.0;
  bool ok() const { return violations.empty(); }
};

/// Evaluates psi = 2 K rho + phi and its margin at every grid radius whose
/// neighbours and double lie on the grid.
MonotonicityReport monotonicity_check(std::span<const Profile> profiles, double K, double tolerance = 1e-3);

struct KGrid {
  double min = 1e-3;
  double ratio = 2.0;
  double max = 1e3;
};

struct KFit {
  bool found = false;
  double K = 0.0;
  int step = 0;  ///< 0 for K = 0, j + 1 for K = min * ratio^j
  KGrid grid;
};

/// Smallest K in {0} u {min ratio^j <= max} passing monotonicity_check.
KFit fit_K(std::span<const Profile> profiles, const KGrid& grid = {}, double tolerance = 1e-3);

struct StressReport {
  /// n x n tensor per node (row-major), NaN where a central stencil is missing.
  std::vector<double> tensor;
  /// n components per node, NaN where undefined.
  std::vector<double> divergence;
  double div_sup = 0.0;
  double div_l2 = 0.0;  ///< RMS over nodes where the divergence is defined
  Index nodes = 0;
};

/// T = du . du - e delta with central differences; divergence by central
/// differences where T is available at both neighbours on every axis.
StressReport stress_tensor(const Field& u, double eps, const Potential* p);

struct BochnerReport {
  Index qualifying = 0;  ///< nodes with dist(u, N) < delta and an uncut stencil
  Index excluded = 0;    ///< uncut-stencil nodes outside the tube
  bool empty = true;
  double fitted_C = 0.0;  ///< max of r / e^2 (0 if r <= 0 everywhere)
  std::vector<double> quantile_levels{0.5, 0.9, 0.99, 1.0};
  std::vector<double> quantiles;  ///< of r / e^2 over qualifying nodes with e > 0
};

/// r = -Delta_h e at interior nodes whose stencil avoids cut cells, so the
/// nodal density is the plain average of forward and backward differences.
BochnerReport bochner_residual(const Field& u, double eps, const Potential& p, double delta);

struct SingularSet {
  std::vector<Index> nodes;
  std::vector<std::vector<Index>> components;
  std::vector<double> component_diameter;
  double max_density = 0.0;
};

/// Nodes x with r^{2-n} int_{B_r(x)} 1/2 |grad u|^2 > theta, split into
/// face-connected components. theta = +inf gives the empty set.
SingularSet singular_set_estimate(const Field& u_star, double theta, double scale);

/// Valued nodes with inner <= |x - center| <= outer.
std::vector<Index> annulus_nodes(const DomainSpec& dom, const Point& center, double inner, double outer);
/// Valued nodes farther than margin from every point of excluded.
std::vector<Index> complement_nodes(const DomainSpec& dom, std::span<const Point> excluded, double margin);

/// sup over compact of |u - u_star|, one value per field. Throws on an empty compact.
std::vector<double> uniform_convergence_profile(std::span<const Field* const> fields, const Field& u_star,
                                                std::span<const Index> compact);

struct BoundaryGradientReport {
  double normal_sup = 0.0;      ///< sup |du/dnu|
  double gradient_sup = 0.0;    ///< sup |grad u|
  double tangential_sup = 0.0;  ///< sup |grad u (I - nu nu^T)|
  double distance_sup = 0.0;    ///< sup dist(u, N) over boundary nodes
  Index first_order = 0;        ///< nodes where the normal stencil fell back to first order
};

BoundaryGradientReport boundary_gradient_report(const Field& u, const Potential& p);

/// Full gradient at a boundary node: tangential part from grid differences,
/// normal part from boundary_normal_derivative.
Jac boundary_gradient(const Field& u, Index node);

struct WitnessReport {
  double eta = 0.0;
  double radius = 0.0;
  int centers = 0;
  int qualifying = 0;
  double fitted_C = 0.0;  ///< max r^2 sup_{B_{r/2}} e / (eta + r^2) over qualifying centers
};

/// Small-energy witness: centers whose sup_{rho <= r} phi lies below the
/// given percentile of that quantity.
WitnessReport small_energy_witness(const Field& u, double eps, const Potential& p, std::span<const Point> centers,
                                   double radius, double percentile = 0.1);

struct PropagationReport {
  int premises = 0;  ///< (center, rho0) pairs with sup_{[rho0, 2 rho0]} phi <= alpha_max
  int violations = 0;
  double worst_excess = 0.0;  ///< max phi(rho) - (alpha + 2 K rho0) over tested rho < rho0
};

/// For every center and rho0 with phi <= alpha <= alpha_max on [rho0, 2 rho0],
/// checks phi(rho) <= alpha + 2 K rho0 + tolerance at grid radii below rho0.
PropagationReport propagation_check(std::span<const Profile> profiles, double K, double alpha_max,
                                    double tolerance = 1e-3);

/// Centers for monotonicity tests on a ball: the centre, points at half radius
/// on the axes, and boundary points on the axes and diagonals.
std::vector<Point> default_ball_centers(const Point& center, double radius, int n);

/// Regular lattice of points with the given spacing inside the closed domain.
std::vector<Point> lattice_centers(const DomainSpec& dom, double spacing);

}  // namespace relaxlab

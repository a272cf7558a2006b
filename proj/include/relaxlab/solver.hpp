#pragma once

#include "relaxlab/grid.hpp"
#include "relaxlab/kernels.hpp"
#include "relaxlab/potentials.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace relaxlab {

enum class DescentMethod {
  barzilai_borwein,  ///< spectral steps in the lumped-mass metric
  preconditioned,    ///< spectral steps in a Jacobi metric of the Hessian
};

struct SolverConfig {
  DescentMethod method = DescentMethod::barzilai_borwein;
  int max_iters = 50000;
  /// Sup over interior nodes of |dE/du_i| / m_i.
  double grad_tol = 1e-6;
  double min_step = 1e-14;
  double max_step = 1e6;
  std::uint64_t seed = 0;
  bool record_trace = true;

  void validate() const;
};

struct EpsSchedule {
  std::vector<double> eps;
  bool warm_start = true;

  void validate() const;
  static EpsSchedule geometric(double first, double ratio, int count);
};

struct IterationRecord {
  int iter = 0;
  double energy = 0.0;
  double dirichlet = 0.0;
  double potential = 0.0;
  double grad_norm = 0.0;     ///< Euclidean norm of dE/du over interior nodes
  double pde_residual = 0.0;  ///< sup_i |dE/du_i| / m_i
};

struct ConvergenceRecord {
  std::vector<IterationRecord> trace;
  int iterations = 0;
  bool converged = false;
  bool hit_max_iters = false;
  bool stalled = false;  ///< line search hit min_step before grad_tol
  int backtracks = 0;
  int step_resets = 0;
  EnergyParts energy;         ///< recomputed at the returned field
  double residual_sup = 0.0;  ///< sup-norm of the discrete Euler-Lagrange residual
  double residual_l2 = 0.0;   ///< mass-weighted RMS of the same residual
};

struct MinimizeResult {
  Field u;
  ConvergenceRecord record;
};

/// Discrete E_eps; throws for eps <= 0.
EnergyParts energy(const Field& u, double eps, const Potential& p);
/// Exact derivative of energy() with respect to interior node values.
std::vector<double> energy_gradient(const Field& u, double eps, const Potential& p);

struct Residual {
  double sup = 0.0;
  double l2 = 0.0;
};
/// |Delta_h u - eps^{-2} grad f(u)| where Delta_h is the mass-lumped
/// Laplacian of the discrete Dirichlet energy.
Residual pde_residual(const Field& u, double eps, const Potential& p);

/// Spectral-step descent with a monotone Armijo safeguard.
MinimizeResult minimize(const Field& u0, double eps, const Potential& p, const SolverConfig& cfg);

struct Stage {
  double eps = 0.0;
  Field u;
  ConvergenceRecord record;
};

/// Runs minimize along the schedule, warm-starting each stage from the
/// previous minimizer unless schedule.warm_start is false.
std::vector<Stage> continuation(const EpsSchedule& schedule, const Field& initial, const Potential& p,
                                const SolverConfig& cfg);

/// Componentwise discrete-harmonic extension of the boundary values of u.
Field harmonic_extension(const Field& u, double tol = 1e-10, int max_iters = 20000);

/// Harmonic extension of the boundary data, projected onto N wherever it lies
/// in the tube.
Field initial_guess(std::shared_ptr<const DomainSpec> dom, const BoundaryData& bd, const Potential& p);

/// Projected descent for the Dirichlet energy among N-valued maps, with a
/// nodewise retraction after every step.
MinimizeResult harmonic_map_minimize(const Field& u0, const VacuumManifold& manifold, const SolverConfig& cfg);

struct ProbeReport {
  std::vector<double> energies;
  double reference = 0.0;
  double best_relative_drop = 0.0;  ///< (reference - min probe) / reference
  bool lower_found = false;         ///< some probe beat the reference by > 0.1%
};

/// Restarts from randomly perturbed copies of u and reports whether any ends
/// at a lower energy.
ProbeReport restart_probe(const Field& u, double eps, const Potential& p, const SolverConfig& cfg, int probes);

struct GradientCheck {
  int samples = 0;
  double step = 0.0;
  double max_relative_error = 0.0;
};

/// Compares energy_gradient . d with central differences of the energy along
/// random unit directions d supported on the interior nodes.
GradientCheck check_gradient(const Field& u, double eps, const Potential& p, int samples, std::uint64_t seed,
                             double step = 1e-5);

/// max_i |u_i| over valued nodes.
double sup_norm(const Field& u);

}  // namespace relaxlab

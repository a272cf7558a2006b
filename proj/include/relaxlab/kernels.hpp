#pragma once

// Energy and gradient assembly for the discrete functional
//
//   E(u) = 1/2 h^{n-2} sum_edges W_e |u_j - u_i|^2 + eps^{-2} sum_i m_i f(u_i).
//
// Each kernel has an OpenMP version and a serial reference. The parallel sums
// reduce over fixed-size node blocks in a fixed order, so results do not
// depend on the thread count.

#include "relaxlab/grid.hpp"
#include "relaxlab/potentials.hpp"

#include <functional>
#include <span>
#include <vector>

namespace relaxlab {

struct EnergyParts {
  double dirichlet = 0.0;
  double potential = 0.0;  ///< eps^{-2} int f(u)
  double total() const { return dirichlet + potential; }
};

namespace kernels {

/// Node block size of the deterministic reductions.
inline constexpr Index kBlock = 2048;

/// p == nullptr drops the potential term.
EnergyParts energy(const Field& u, const Potential* p, double eps);
EnergyParts energy_serial(const Field& u, const Potential* p, double eps);

/// Gradient with respect to interior node values; zero at every other node.
void gradient(const Field& u, const Potential* p, double eps, std::span<double> grad);
void gradient_serial(const Field& u, const Potential* p, double eps, std::span<double> grad);

/// E(u + step) - E(u) from local differences, accurate to the size of the
/// change rather than the size of E. step must vanish off the interior.
EnergyParts energy_change(const Field& u, std::span<const double> step, const Potential* p, double eps);

/// Mass-weighted inner product sum_i m_i a_i . b_i over interior nodes.
double mass_dot(const DomainSpec& dom, int k, std::span<const double> a, std::span<const double> b);
/// sum_i a_i . b_i over interior nodes.
double dot(const DomainSpec& dom, int k, std::span<const double> a, std::span<const double> b);
/// max_i |g_i| / m_i over interior nodes (Euclidean norm per node).
double sup_per_volume(const DomainSpec& dom, int k, std::span<const double> g);

/// Fixed-order sum of per-block partial sums.
double blocked_sum(Index count, const std::function<double(Index, Index)>& block_sum);

}  // namespace kernels
}  // namespace relaxlab

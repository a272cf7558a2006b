#pragma once

// Uniform-grid discretization of a domain in R^n (n = 2, 3) and of fields
// u : domain -> R^k on it.
//
// Nodes sit at lo + i h. A node is interior when it lies strictly inside the
// domain and carries mass; boundary nodes are the remaining corners of every
// cell that either overlaps the domain or touches an interior node, and hold
// Dirichlet data. Each cell carries the fraction of its volume inside the
// domain, estimated from 3^n subsamples; node masses and edge weights are
// assembled from these fractions so that
//
//   E = 1/2 h^{n-2} sum_edges W_e |u_j - u_i|^2 + sum_nodes m_i f(u_i) / eps^2
//
// equals the cell-weighted functional sum_c w_c h^n e_c exactly.

#include "relaxlab/potentials.hpp"
#include "relaxlab/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace relaxlab {

enum class NodeKind : std::uint8_t { exterior = 0, interior = 1, boundary = 2 };

struct BallShape {
  Point center;
  double radius = 1.0;
};

struct BoxShape {
  Point lo;
  Point hi;
};

/// User domain given by signed-distance samples on the grid nodes
/// (negative inside), interpolated multilinearly between nodes.
struct MaskShape {
  std::vector<double> signed_distance;
};

using Shape = std::variant<BallShape, BoxShape, MaskShape>;

struct GridBox {
  int n = 3;
  double h = 0.0;
  Point lo;
  std::array<Index, kMaxDim> dims{1, 1, 1};
};

/// Request for build_domain.
struct DomainRequest {
  Shape shape;
  GridBox grid;
};

/// Grid box for a ball of the given radius with its centre at a cell centre.
GridBox ball_grid(const Point& center, double radius, double h);
/// Grid box whose faces coincide with the faces of the box domain.
GridBox box_grid(const Point& lo, const Point& hi, double h);

class DomainSpec {
public:
  int n() const { return grid_.n; }
  double h() const { return grid_.h; }
  const Point& lo() const { return grid_.lo; }
  Point hi() const;
  const std::array<Index, kMaxDim>& dims() const { return grid_.dims; }
  const GridBox& grid() const { return grid_; }
  const Shape& shape() const { return shape_; }
  std::string kind_name() const;

  Index node_count() const { return node_count_; }
  Index stride(int axis) const { return stride_[axis]; }
  Index index(const std::array<Index, kMaxDim>& ijk) const;
  std::array<Index, kMaxDim> multi_index(Index node) const;
  Point coords(Index node) const;

  NodeKind kind(Index node) const { return kind_[node]; }
  bool valued(Index node) const { return kind_[node] != NodeKind::exterior; }
  /// Neighbour along axis in direction dir (+1/-1), or -1 when off the grid.
  Index neighbor(Index node, int axis, int dir) const;

  double signed_distance(const Point& x) const;
  double node_signed_distance(Index node) const { return node_sd_[node]; }

  /// Lumped mass h^n sum_{cells around i} w_c / 2^n.
  double mass(Index node) const { return mass_[node]; }
  /// Weight of the edge from node to node + stride(axis).
  double edge_weight(Index node, int axis) const { return edge_w_[node * kMaxDim + axis]; }
  /// Volume fraction of the cell whose lower corner is node (0 for inactive cells).
  double cell_fraction(Index cell) const { return cell_w_[cell]; }
  /// Bit s set when subsample s of the cell lies inside the domain.
  std::uint32_t cell_inside_mask(Index cell) const { return cell_mask_[cell]; }
  bool cell_exists(Index cell) const;
  bool cell_valued(Index cell) const;
  std::span<const Index> cell_corner_offsets() const { return {corner_offsets_.data(), std::size_t(1) << n()}; }
  int subsample_count() const { return subsamples_; }
  /// Offset (in units of h) of subsample s from the lower cell corner.
  Point subsample_offset(int s) const;

  /// Unit outward normal at a boundary node (zero elsewhere).
  Point normal(Index node) const;

  std::span<const Index> interior() const { return interior_; }
  std::span<const Index> boundary() const { return boundary_; }
  /// Nodes with positive mass (the support of the energy sums).
  std::span<const Index> weighted() const { return weighted_; }

  /// Volume of the domain as represented by the cell fractions.
  double volume() const;

  friend std::shared_ptr<const DomainSpec> build_domain(const DomainRequest& req);

private:
  GridBox grid_;
  Shape shape_;
  Index node_count_ = 0;
  std::array<Index, kMaxDim> stride_{0, 0, 0};
  std::vector<NodeKind> kind_;
  std::vector<double> node_sd_;
  std::vector<double> mass_;
  std::vector<double> edge_w_;
  std::vector<double> cell_w_;
  std::vector<std::uint32_t> cell_mask_;
  std::vector<double> normal_;
  std::vector<Index> interior_, boundary_, weighted_;
  std::array<Index, 8> corner_offsets_{};
  int subsamples_ = 0;
};

/// Classifies the grid, computes cell fractions, masses, edge weights and
/// boundary normals. Throws DomainError on bad input.
std::shared_ptr<const DomainSpec> build_domain(const DomainRequest& req);

/// Nodal values u : nodes -> R^k. Exterior values are never read.
class Field {
public:
  Field() = default;
  Field(std::shared_ptr<const DomainSpec> domain, int k);

  const DomainSpec& domain() const { return *domain_; }
  std::shared_ptr<const DomainSpec> domain_ptr() const { return domain_; }
  int k() const { return k_; }

  /// Value at a valued node; throws DomainError at exterior nodes.
  Vec value(Index node) const;
  void set(Index node, const Vec& v);

  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }

private:
  std::shared_ptr<const DomainSpec> domain_;
  int k_ = 0;
  std::vector<double> data_;
};

/// Dirichlet data u_b: boundary point -> point of the vacuum manifold.
struct BoundaryData {
  std::string name;
  std::function<Vec(const Point&)> generator;
};

/// x |-> x/|x| (sphere targets, k = n) or s_* (x^ x^T - I/3) (uniaxial targets, n = 3).
BoundaryData hedgehog_boundary(const Potential& p, const Point& center);
/// Constant data: the nearest point of N to value.
BoundaryData constant_boundary(const Potential& p, const Vec& value);
/// Data read from a table: each boundary point takes the (projected) value of
/// the nearest table point.
BoundaryData table_boundary(const Potential& p, std::vector<Point> points, std::vector<Vec> values);

/// Writes u_b at every boundary node; throws if some value has f > 1e-10.
void apply_boundary(Field& u, const BoundaryData& bd, const Potential& p);

/// k x n Jacobian by central differences, one-sided second order where a
/// neighbour is missing.
Jac discrete_gradient(const Field& u, Index node);
/// Standard (2n+1)-point Laplacian at an interior node.
Vec discrete_laplacian(const Field& u, Index node);

/// Per-cell energy density e_c = 1/2 mean-edge |grad u|^2 + f / eps^2 (mean
/// over corners). With p == nullptr only the Dirichlet part is computed.
std::vector<double> cell_energy_density(const Field& u, const Potential* p, double eps);

/// Energy of the cell density field inside Omega cap B_rho(x0) for every rho
/// (ascending). Each subsample contributes through a linear ramp of width h/3
/// around its distance to x0.
std::vector<double> ball_energy_profile(const DomainSpec& dom, std::span<const double> cell_density,
                                        const Point& x0, std::span<const double> rhos);

/// int_{Omega cap B_rho(x0)} e_eps(u). Requires rho > 2h.
double ball_energy(const Field& u, double eps, const Point& x0, double rho, const Potential& p);

struct NormalDerivative {
  Vec value;
  bool first_order = false;  ///< fell back to a first-order difference
};

/// du/dnu at a boundary node: one-sided second order along -nu, sampled by
/// multilinear interpolation.
NormalDerivative boundary_normal_derivative(const Field& u, Index node);

/// Multilinear interpolation of u at x; nullopt if the containing cell has an
/// unvalued corner.
std::optional<Vec> interpolate(const Field& u, const Point& x);

/// Approximate H^{n-1}(dOmega cap B_rho(x0)) from boundary nodes, each
/// weighted h^{n-1} / |nu|_1.
double boundary_area(const DomainSpec& dom, const Point& x0, double rho);

/// Sampled max over boundary pairs of -(y - y0).nu(y) / |y - y0|^2, clamped at 0.
double measured_curvature_bound(const DomainSpec& dom, int max_points = 400);

// --- field files ---------------------------------------------------------

struct FieldFile {
  int n = 0;
  int k = 0;
  std::array<Index, kMaxDim> dims{1, 1, 1};
  double h = 0.0;
  Point lo, hi;
  std::vector<double> values;  ///< row-major, k per node, NaN at exterior nodes
};

/// Writes path (binary, little-endian) and path + ".json" (domain metadata).
void write_field(const std::filesystem::path& path, const Field& u, const std::string& extra_json = "{}");
FieldFile read_field(const std::filesystem::path& path);
/// Rebuilds a Field on dom from a file; grids must match.
Field field_from_file(const FieldFile& file, std::shared_ptr<const DomainSpec> dom);

}  // namespace relaxlab

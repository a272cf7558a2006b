#include "relaxlab/grid.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace relaxlab {

namespace {

int pow3(int n) { return n == 2 ? 9 : 27; }

double ball_sd(const BallShape& b, const Point& x) { return (x - b.center).norm() - b.radius; }

double box_sd(const BoxShape& b, const Point& x) {
  const Point c = 0.5 * (b.lo + b.hi);
  const Point half = 0.5 * (b.hi - b.lo);
  const Point q = (x - c).cwiseAbs() - half;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

}  // namespace

GridBox ball_grid(const Point& center, double radius, double h) {
  if (!(h > 0.0)) throw DomainError("grid spacing h must be positive");
  if (!(radius > 0.0)) throw DomainError("ball radius must be positive");
  GridBox g;
  g.n = static_cast<int>(center.size());
  g.h = h;
  const Index m = static_cast<Index>(std::ceil(radius / h)) + 1;
  g.lo = center.array() - (static_cast<double>(m) + 0.5) * h;
  for (int d = 0; d < g.n; ++d) g.dims[d] = 2 * m + 2;
  return g;
}

GridBox box_grid(const Point& lo, const Point& hi, double h) {
  if (!(h > 0.0)) throw DomainError("grid spacing h must be positive");
  GridBox g;
  g.n = static_cast<int>(lo.size());
  g.h = h;
  g.lo = lo;
  for (int d = 0; d < g.n; ++d) {
    const double extent = hi[d] - lo[d];
    if (!(extent > 0.0)) throw DomainError("box is degenerate along axis " + std::to_string(d));
    const double cells = extent / h;
    const Index rounded = std::llround(cells);
    if (std::abs(cells - static_cast<double>(rounded)) > 1e-9 * std::max(1.0, cells))
      throw DomainError("box extent along axis " + std::to_string(d) + " is not a multiple of h");
    g.dims[d] = rounded + 1;
  }
  return g;
}

// ---------------------------------------------------------------------------
// DomainSpec

Point DomainSpec::hi() const {
  Point p = grid_.lo;
  for (int d = 0; d < n(); ++d) p[d] += static_cast<double>(grid_.dims[d] - 1) * grid_.h;
  return p;
}

std::string DomainSpec::kind_name() const {
  if (std::holds_alternative<BallShape>(shape_)) return "ball";
  if (std::holds_alternative<BoxShape>(shape_)) return "box";
  return "mask";
}

Index DomainSpec::index(const std::array<Index, kMaxDim>& ijk) const {
  Index idx = 0;
  for (int d = 0; d < n(); ++d) idx += ijk[d] * stride_[d];
  return idx;
}

std::array<Index, kMaxDim> DomainSpec::multi_index(Index node) const {
  std::array<Index, kMaxDim> ijk{0, 0, 0};
  for (int d = 0; d < n(); ++d) {
    ijk[d] = node / stride_[d];
    node -= ijk[d] * stride_[d];
  }
  return ijk;
}

Point DomainSpec::coords(Index node) const {
  const auto ijk = multi_index(node);
  Point x(n());
  for (int d = 0; d < n(); ++d) x[d] = grid_.lo[d] + static_cast<double>(ijk[d]) * grid_.h;
  return x;
}

Index DomainSpec::neighbor(Index node, int axis, int dir) const {
  const Index i = (node / stride_[axis]) % grid_.dims[axis];
  const Index j = i + dir;
  if (j < 0 || j >= grid_.dims[axis]) return -1;
  return node + dir * stride_[axis];
}

double DomainSpec::signed_distance(const Point& x) const {
  if (const auto* b = std::get_if<BallShape>(&shape_)) return ball_sd(*b, x);
  if (const auto* b = std::get_if<BoxShape>(&shape_)) return box_sd(*b, x);
  const auto& mask = std::get<MaskShape>(shape_);
  // multilinear interpolation of the node samples, clamped to the grid
  std::array<Index, kMaxDim> base{0, 0, 0};
  std::array<double, kMaxDim> t{0, 0, 0};
  for (int d = 0; d < n(); ++d) {
    double s = (x[d] - grid_.lo[d]) / grid_.h;
    s = std::clamp(s, 0.0, static_cast<double>(grid_.dims[d] - 1));
    Index i = std::min<Index>(static_cast<Index>(std::floor(s)), grid_.dims[d] - 2);
    base[d] = i;
    t[d] = s - static_cast<double>(i);
  }
  double v = 0.0;
  const Index b0 = index(base);
  for (int c = 0; c < (1 << n()); ++c) {
    double w = 1.0;
    for (int d = 0; d < n(); ++d) w *= ((c >> d) & 1) ? t[d] : 1.0 - t[d];
    v += w * mask.signed_distance[b0 + corner_offsets_[c]];
  }
  return v;
}

bool DomainSpec::cell_exists(Index cell) const {
  if (cell < 0 || cell >= node_count_) return false;
  const auto ijk = multi_index(cell);
  for (int d = 0; d < n(); ++d)
    if (ijk[d] >= grid_.dims[d] - 1) return false;
  return true;
}

bool DomainSpec::cell_valued(Index cell) const {
  if (!cell_exists(cell)) return false;
  for (Index off : cell_corner_offsets())
    if (!valued(cell + off)) return false;
  return true;
}

Point DomainSpec::subsample_offset(int s) const {
  Point p(n());
  for (int d = 0; d < n(); ++d) {
    p[d] = ((s % 3) + 0.5) / 3.0;
    s /= 3;
  }
  return p;
}

Point DomainSpec::normal(Index node) const {
  Point p(n());
  for (int d = 0; d < n(); ++d) p[d] = normal_[node * kMaxDim + d];
  return p;
}

double DomainSpec::volume() const {
  double v = 0.0;
  for (double w : cell_w_) v += w;
  return v * std::pow(grid_.h, n());
}

std::shared_ptr<const DomainSpec> build_domain(const DomainRequest& req) {
  const GridBox& g = req.grid;
  if (g.n != 2 && g.n != 3) throw DomainError("domain dimension must be 2 or 3");
  if (!(g.h > 0.0)) throw DomainError("grid spacing h must be positive");
  if (g.lo.size() != g.n) throw DomainError("grid origin has the wrong dimension");
  for (int d = 0; d < g.n; ++d)
    if (g.dims[d] < 2) throw DomainError("grid needs at least two nodes per axis");

  auto dom = std::shared_ptr<DomainSpec>(new DomainSpec());
  DomainSpec& D = *dom;
  D.grid_ = g;
  for (int d = g.n; d < kMaxDim; ++d) D.grid_.dims[d] = 1;
  D.shape_ = req.shape;
  const int n = g.n;
  const double h = g.h;

  if (const auto* b = std::get_if<BallShape>(&D.shape_)) {
    if (b->center.size() != n) throw DomainError("ball centre has the wrong dimension");
    if (!(b->radius > 0.0)) throw DomainError("ball radius must be positive");
  } else if (const auto* b = std::get_if<BoxShape>(&D.shape_)) {
    if (b->lo.size() != n || b->hi.size() != n) throw DomainError("box corners have the wrong dimension");
    for (int d = 0; d < n; ++d)
      if (!(b->hi[d] > b->lo[d])) throw DomainError("box is degenerate");
  }

  D.stride_ = {0, 0, 0};
  D.stride_[n - 1] = 1;
  for (int d = n - 2; d >= 0; --d) D.stride_[d] = D.stride_[d + 1] * D.grid_.dims[d + 1];
  D.node_count_ = D.stride_[0] * D.grid_.dims[0];
  const Index N = D.node_count_;

  if (const auto* m = std::get_if<MaskShape>(&D.shape_)) {
    if (static_cast<Index>(m->signed_distance.size()) != N)
      throw DomainError("mask signed-distance sample count does not match the grid");
  }

  for (int c = 0; c < (1 << n); ++c) {
    Index off = 0;
    for (int d = 0; d < n; ++d)
      if ((c >> d) & 1) off += D.stride_[d];
    D.corner_offsets_[c] = off;
  }
  D.subsamples_ = pow3(n);

  D.node_sd_.resize(N);
  for (Index i = 0; i < N; ++i) D.node_sd_[i] = D.signed_distance(D.coords(i));

  // cell volume fractions
  D.cell_w_.assign(N, 0.0);
  D.cell_mask_.assign(N, 0u);
  for (Index c = 0; c < N; ++c) {
    if (!D.cell_exists(c)) continue;
    const Point x0 = D.coords(c);
    std::uint32_t bits = 0;
    for (int s = 0; s < D.subsamples_; ++s) {
      const Point p = x0 + h * D.subsample_offset(s);
      if (D.signed_distance(p) <= 0.0) bits |= (1u << s);
    }
    D.cell_mask_[c] = bits;
    D.cell_w_[c] = static_cast<double>(std::popcount(bits)) / D.subsamples_;
  }

  auto cells_around = [&](Index node, auto&& fn) {
    const auto ijk = D.multi_index(node);
    for (int c = 0; c < (1 << n); ++c) {
      bool ok = true;
      for (int d = 0; d < n; ++d)
        if (((c >> d) & 1) && ijk[d] == 0) ok = false;
      if (!ok) continue;
      const Index cell = node - D.corner_offsets_[c];
      if (D.cell_exists(cell)) fn(cell);
    }
  };

  const double hn = std::pow(h, n);
  const double corner_share = 1.0 / static_cast<double>(1 << n);
  D.mass_.assign(N, 0.0);
  for (Index i = 0; i < N; ++i) {
    double w = 0.0;
    cells_around(i, [&](Index cell) { w += D.cell_w_[cell]; });
    D.mass_[i] = hn * corner_share * w;
  }

  D.kind_.assign(N, NodeKind::exterior);
  for (Index i = 0; i < N; ++i) {
    if (D.node_sd_[i] < 0.0 && D.mass_[i] > 1e-3 * hn) {
      const auto ijk = D.multi_index(i);
      for (int d = 0; d < n; ++d)
        if (ijk[d] == 0 || ijk[d] == D.grid_.dims[d] - 1)
          throw DomainError("domain reaches the edge of the grid bounding box");
      D.kind_[i] = NodeKind::interior;
    }
  }
  std::vector<char> marked(N, 0);
  for (Index c = 0; c < N; ++c)
    if (D.cell_w_[c] > 0.0)
      for (Index off : D.cell_corner_offsets()) marked[c + off] = 1;
  for (Index i = 0; i < N; ++i)
    if (D.kind_[i] == NodeKind::interior)
      cells_around(i, [&](Index cell) {
        for (Index off : D.cell_corner_offsets()) marked[cell + off] = 1;
      });
  for (Index i = 0; i < N; ++i)
    if (marked[i] && D.kind_[i] != NodeKind::interior) D.kind_[i] = NodeKind::boundary;

  // edge weights: sum of fractions of the 2^{n-1} cells sharing the edge
  const double edge_share = 2.0 * corner_share;
  D.edge_w_.assign(N * kMaxDim, 0.0);
  for (Index i = 0; i < N; ++i) {
    const auto ijk = D.multi_index(i);
    for (int axis = 0; axis < n; ++axis) {
      if (ijk[axis] >= D.grid_.dims[axis] - 1) continue;
      double w = 0.0;
      for (int c = 0; c < (1 << n); ++c) {
        if ((c >> axis) & 1) continue;
        bool ok = true;
        for (int d = 0; d < n; ++d)
          if (((c >> d) & 1) && ijk[d] == 0) ok = false;
        if (!ok) continue;
        const Index cell = i - D.corner_offsets_[c];
        if (D.cell_exists(cell)) w += D.cell_w_[cell];
      }
      D.edge_w_[i * kMaxDim + axis] = edge_share * w;
    }
  }

  D.normal_.assign(N * kMaxDim, 0.0);
  for (Index i = 0; i < N; ++i) {
    switch (D.kind_[i]) {
      case NodeKind::interior: D.interior_.push_back(i); break;
      case NodeKind::boundary: D.boundary_.push_back(i); break;
      default: break;
    }
    if (D.mass_[i] > 0.0) D.weighted_.push_back(i);
  }

  for (Index i : D.boundary_) {
    const Point x = D.coords(i);
    Point grad(n);
    for (int d = 0; d < n; ++d) {
      Point xp = x, xm = x;
      xp[d] += h;
      xm[d] -= h;
      grad[d] = (D.signed_distance(xp) - D.signed_distance(xm)) / (2.0 * h);
    }
    const double len = grad.norm();
    if (len > 0.0) grad /= len;
    for (int d = 0; d < n; ++d) D.normal_[i * kMaxDim + d] = grad[d];
  }

  for (int axis = 0; axis < n; ++axis) {
    std::vector<char> seen(D.grid_.dims[axis], 0);
    for (Index i : D.interior_) seen[D.multi_index(i)[axis]] = 1;
    if (std::count(seen.begin(), seen.end(), 1) < 3)
      throw DomainError("grid resolves fewer than 3 interior nodes along axis " + std::to_string(axis));
  }
  return dom;
}

// ---------------------------------------------------------------------------
// Field

Field::Field(std::shared_ptr<const DomainSpec> domain, int k)
    : domain_(std::move(domain)), k_(k), data_(static_cast<std::size_t>(domain_->node_count() * k), 0.0) {
  if (k < 1 || k > kMaxTarget) throw Error("field target dimension out of range");
}

Vec Field::value(Index node) const {
  if (!domain_->valued(node)) throw DomainError("read of an exterior node " + std::to_string(node));
  Vec v(k_);
  for (int c = 0; c < k_; ++c) v[c] = data_[node * k_ + c];
  return v;
}

void Field::set(Index node, const Vec& v) {
  if (!domain_->valued(node)) throw DomainError("write to an exterior node " + std::to_string(node));
  for (int c = 0; c < k_; ++c) data_[node * k_ + c] = v[c];
}

// ---------------------------------------------------------------------------
// Boundary data

BoundaryData hedgehog_boundary(const Potential& p, const Point& center) {
  const VacuumManifold& m = p.manifold();
  if (m.tag() == "sphere") {
    return {"hedgehog", [center, k = p.dim()](const Point& x) -> Vec {
              if (x.size() != k) throw Error("hedgehog data needs target dimension equal to the domain dimension");
              const Point r = x - center;
              const double len = r.norm();
              if (len == 0.0) throw Error("hedgehog data is undefined at its centre");
              Vec v(k);
              for (int i = 0; i < k; ++i) v[i] = r[i] / len;
              return v;
            }};
  }
  if (m.tag() == "uniaxial") {
    const auto* uni = dynamic_cast<const UniaxialManifold*>(&m);
    return {"hedgehog", [center, uni](const Point& x) -> Vec {
              if (x.size() != 3) throw Error("uniaxial hedgehog data needs a 3-dimensional domain");
              const Point r = x - center;
              if (r.norm() == 0.0) throw Error("hedgehog data is undefined at its centre");
              return uni->uniaxial(Eigen::Vector3d(r[0], r[1], r[2]));
            }};
  }
  throw Error("no hedgehog data for manifold '" + m.tag() + "'");
}

BoundaryData constant_boundary(const Potential& p, const Vec& value) {
  if (value.size() != p.dim()) throw Error("constant boundary value has the wrong dimension");
  const Vec q = p.manifold().project_unchecked(value);
  return {"equator-constant", [q](const Point&) { return q; }};
}

BoundaryData table_boundary(const Potential& p, std::vector<Point> points, std::vector<Vec> values) {
  if (points.empty() || points.size() != values.size()) throw Error("boundary table is empty or ragged");
  for (auto& v : values) {
    if (v.size() != p.dim()) throw Error("boundary table value has the wrong dimension");
    v = p.manifold().project_unchecked(v);
  }
  return {"user-table", [points = std::move(points), values = std::move(values)](const Point& x) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < points.size(); ++i) {
              const double d = (points[i] - x).squaredNorm();
              if (d < best_d) {
                best_d = d;
                best = i;
              }
            }
            return values[best];
          }};
}

void apply_boundary(Field& u, const BoundaryData& bd, const Potential& p) {
  const DomainSpec& dom = u.domain();
  for (Index i : dom.boundary()) {
    const Vec q = bd.generator(dom.coords(i));
    if (q.size() != u.k()) throw Error("boundary data has the wrong target dimension");
    const double f = p.eval(q);
    if (f > 1e-10) throw Error("boundary data '" + bd.name + "' leaves the vacuum manifold (f = " + std::to_string(f) + ")");
    u.set(i, q);
  }
}

// ---------------------------------------------------------------------------
// Stencils

Jac discrete_gradient(const Field& u, Index node) {
  const DomainSpec& dom = u.domain();
  if (!dom.valued(node)) throw DomainError("gradient requested at an exterior node");
  const int n = dom.n(), k = u.k();
  const double h = dom.h();
  const auto raw = u.raw();
  auto val = [&](Index i, int c) { return raw[i * k + c]; };
  auto ok = [&](Index i) { return i >= 0 && dom.valued(i); };
  Jac g = Jac::Zero(k, n);
  for (int d = 0; d < n; ++d) {
    const Index p1 = dom.neighbor(node, d, +1), m1 = dom.neighbor(node, d, -1);
    const Index p2 = ok(p1) ? dom.neighbor(p1, d, +1) : -1;
    const Index m2 = ok(m1) ? dom.neighbor(m1, d, -1) : -1;
    for (int c = 0; c < k; ++c) {
      const double u0 = val(node, c);
      if (ok(p1) && ok(m1))
        g(c, d) = (val(p1, c) - val(m1, c)) / (2.0 * h);
      else if (ok(p1) && ok(p2))
        g(c, d) = (-3.0 * u0 + 4.0 * val(p1, c) - val(p2, c)) / (2.0 * h);
      else if (ok(m1) && ok(m2))
        g(c, d) = (3.0 * u0 - 4.0 * val(m1, c) + val(m2, c)) / (2.0 * h);
      else if (ok(p1))
        g(c, d) = (val(p1, c) - u0) / h;
      else if (ok(m1))
        g(c, d) = (u0 - val(m1, c)) / h;
    }
  }
  return g;
}

Vec discrete_laplacian(const Field& u, Index node) {
  const DomainSpec& dom = u.domain();
  if (dom.kind(node) != NodeKind::interior) throw DomainError("laplacian requested at a non-interior node");
  const int n = dom.n(), k = u.k();
  const double h2 = dom.h() * dom.h();
  const auto raw = u.raw();
  Vec lap = Vec::Zero(k);
  for (int d = 0; d < n; ++d) {
    const Index s = dom.stride(d);
    for (int c = 0; c < k; ++c)
      lap[c] += (raw[(node + s) * k + c] - 2.0 * raw[node * k + c] + raw[(node - s) * k + c]) / h2;
  }
  return lap;
}

// ---------------------------------------------------------------------------
// Integrals

std::vector<double> cell_energy_density(const Field& u, const Potential* p, double eps) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const double h2 = dom.h() * dom.h();
  const double inv_eps2 = p ? 1.0 / (eps * eps) : 0.0;
  const Index N = dom.node_count();
  const auto raw = u.raw();
  const auto corners = dom.cell_corner_offsets();
  const int ncorner = 1 << n;
  const double edge_mean = 1.0 / static_cast<double>(ncorner / 2);
  std::vector<double> dens(static_cast<std::size_t>(N), 0.0);
#pragma omp parallel for schedule(static)
  for (Index cell = 0; cell < N; ++cell) {
    if (dom.cell_fraction(cell) <= 0.0) continue;
    double dir = 0.0;
    for (int axis = 0; axis < n; ++axis) {
      double acc = 0.0;
      for (int c = 0; c < ncorner; ++c) {
        if ((c >> axis) & 1) continue;
        const Index a = cell + corners[c];
        const Index b = cell + corners[c | (1 << axis)];
        for (int j = 0; j < k; ++j) {
          const double diff = raw[b * k + j] - raw[a * k + j];
          acc += diff * diff;
        }
      }
      dir += edge_mean * acc / h2;
    }
    double pot = 0.0;
    if (p) {
      Vec z(k);
      for (int c = 0; c < ncorner; ++c) {
        const Index a = cell + corners[c];
        for (int j = 0; j < k; ++j) z[j] = raw[a * k + j];
        pot += p->eval(z);
      }
      pot *= inv_eps2 / ncorner;
    }
    dens[cell] = 0.5 * dir + pot;
  }
  return dens;
}

std::vector<double> ball_energy_profile(const DomainSpec& dom, std::span<const double> cell_density,
                                        const Point& x0, std::span<const double> rhos) {
  const std::size_t nr = rhos.size();
  std::vector<double> out(nr, 0.0);
  if (nr == 0) return out;
  for (std::size_t j = 1; j < nr; ++j)
    if (!(rhos[j] > rhos[j - 1])) throw Error("radius list must be strictly increasing");
  const int n = dom.n();
  const double h = dom.h();
  const double ramp = h / 3.0;
  const double rmax = rhos.back() + ramp;
  const double sub_vol = std::pow(h, n) / dom.subsample_count();

  std::array<Index, kMaxDim> lo{0, 0, 0}, hi{0, 0, 0};
  for (int d = 0; d < n; ++d) {
    const double a = (x0[d] - rmax - dom.lo()[d]) / h;
    const double b = (x0[d] + rmax - dom.lo()[d]) / h;
    lo[d] = std::clamp<Index>(static_cast<Index>(std::floor(a)) - 1, 0, dom.dims()[d] - 2);
    hi[d] = std::clamp<Index>(static_cast<Index>(std::ceil(b)) + 1, 0, dom.dims()[d] - 2);
  }
  std::vector<double> full(nr + 1, 0.0), partial(nr, 0.0);
  std::vector<Point> offsets;
  for (int s = 0; s < dom.subsample_count(); ++s) offsets.push_back(h * dom.subsample_offset(s));

  std::array<Index, kMaxDim> ijk{0, 0, 0};
  auto visit = [&](Index cell) {
    const double dens = cell_density[cell];
    if (dens == 0.0) return;
    const std::uint32_t mask = dom.cell_inside_mask(cell);
    if (mask == 0u) return;
    const Point corner = dom.coords(cell);
    const double c = dens * sub_vol;
    for (int s = 0; s < dom.subsample_count(); ++s) {
      if (!((mask >> s) & 1u)) continue;
      const double r = (corner + offsets[s] - x0).norm();
      if (r - 0.5 * ramp >= rhos.back()) continue;
      // rho >= r + ramp/2: full weight; |rho - r| < ramp/2: linear ramp
      const auto first_full = std::lower_bound(rhos.begin(), rhos.end(), r + 0.5 * ramp) - rhos.begin();
      full[first_full] += c;
      for (auto j = first_full - 1; j >= 0 && rhos[j] > r - 0.5 * ramp; --j)
        partial[j] += c * ((rhos[j] - r) / ramp + 0.5);
    }
  };
  if (n == 2) {
    for (ijk[0] = lo[0]; ijk[0] <= hi[0]; ++ijk[0])
      for (ijk[1] = lo[1]; ijk[1] <= hi[1]; ++ijk[1]) visit(dom.index(ijk));
  } else {
    for (ijk[0] = lo[0]; ijk[0] <= hi[0]; ++ijk[0])
      for (ijk[1] = lo[1]; ijk[1] <= hi[1]; ++ijk[1])
        for (ijk[2] = lo[2]; ijk[2] <= hi[2]; ++ijk[2]) visit(dom.index(ijk));
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < nr; ++j) {
    acc += full[j];
    out[j] = acc + partial[j];
  }
  return out;
}

double ball_energy(const Field& u, double eps, const Point& x0, double rho, const Potential& p) {
  if (!(rho > 2.0 * u.domain().h())) throw DomainError("ball radius must exceed 2h to be resolved");
  if (!(eps > 0.0)) throw Error("eps must be positive");
  const auto dens = cell_energy_density(u, &p, eps);
  const double r[1] = {rho};
  return ball_energy_profile(u.domain(), dens, x0, r)[0];
}

std::optional<Vec> interpolate(const Field& u, const Point& x) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  std::array<Index, kMaxDim> base{0, 0, 0};
  std::array<double, kMaxDim> t{0, 0, 0};
  for (int d = 0; d < n; ++d) {
    const double s = (x[d] - dom.lo()[d]) / dom.h();
    if (s < 0.0 || s > static_cast<double>(dom.dims()[d] - 1)) return std::nullopt;
    const Index i = std::min<Index>(static_cast<Index>(std::floor(s)), dom.dims()[d] - 2);
    base[d] = i;
    t[d] = s - static_cast<double>(i);
  }
  const Index cell = dom.index(base);
  if (!dom.cell_valued(cell)) return std::nullopt;
  const auto raw = u.raw();
  Vec v = Vec::Zero(k);
  const auto corners = dom.cell_corner_offsets();
  for (int c = 0; c < (1 << n); ++c) {
    double w = 1.0;
    for (int d = 0; d < n; ++d) w *= ((c >> d) & 1) ? t[d] : 1.0 - t[d];
    if (w == 0.0) continue;
    const Index a = cell + corners[c];
    for (int j = 0; j < k; ++j) v[j] += w * raw[a * k + j];
  }
  return v;
}

NormalDerivative boundary_normal_derivative(const Field& u, Index node) {
  const DomainSpec& dom = u.domain();
  if (dom.kind(node) != NodeKind::boundary) throw DomainError("normal derivative requested at a non-boundary node");
  const Point x = dom.coords(node);
  const Point nu = dom.normal(node);
  const double s = dom.h();
  const Vec u0 = u.value(node);
  const auto v1 = interpolate(u, x - s * nu);
  const auto v2 = interpolate(u, x - 2.0 * s * nu);
  NormalDerivative out;
  if (v1 && v2) {
    out.value = (3.0 * u0 - 4.0 * *v1 + *v2) / (2.0 * s);
  } else if (v1) {
    out.value = (u0 - *v1) / s;
    out.first_order = true;
  } else {
    out.value = Vec::Zero(u.k());
    out.first_order = true;
  }
  return out;
}

double boundary_area(const DomainSpec& dom, const Point& x0, double rho) {
  const double face = std::pow(dom.h(), dom.n() - 1);
  double area = 0.0;
  for (Index i : dom.boundary()) {
    if ((dom.coords(i) - x0).norm() > rho) continue;
    const double l1 = dom.normal(i).lpNorm<1>();
    if (l1 > 0.0) area += face / l1;
  }
  return area;
}

double measured_curvature_bound(const DomainSpec& dom, int max_points) {
  const auto bnd = dom.boundary();
  if (bnd.empty()) return 0.0;
  const std::size_t stride = std::max<std::size_t>(1, bnd.size() / static_cast<std::size_t>(max_points));
  std::vector<Point> ys, nus;
  for (std::size_t i = 0; i < bnd.size(); i += stride) {
    const Point x = dom.coords(bnd[i]);
    const Point nu = dom.normal(bnd[i]);
    ys.push_back(x - dom.node_signed_distance(bnd[i]) * nu);
    nus.push_back(nu);
  }
  double c = 0.0;
  for (std::size_t a = 0; a < ys.size(); ++a)
    for (std::size_t b = 0; b < ys.size(); ++b) {
      if (a == b) continue;
      const Point d = ys[a] - ys[b];
      const double d2 = d.squaredNorm();
      if (d2 < 1e-20) continue;
      c = std::max(c, -d.dot(nus[a]) / d2);
    }
  return c;
}

// ---------------------------------------------------------------------------
// Field files

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'A', 'X', 'F', 'L', 'D'};

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw Error("truncated field file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

nlohmann::json shape_json(const DomainSpec& dom) {
  nlohmann::json j;
  j["kind"] = dom.kind_name();
  auto vec = [](const Point& p) { return std::vector<double>(p.data(), p.data() + p.size()); };
  if (const auto* b = std::get_if<BallShape>(&dom.shape())) {
    j["center"] = vec(b->center);
    j["radius"] = b->radius;
  } else if (const auto* b = std::get_if<BoxShape>(&dom.shape())) {
    j["lo"] = vec(b->lo);
    j["hi"] = vec(b->hi);
  }
  return j;
}

}  // namespace

void write_field(const std::filesystem::path& path, const Field& u, const std::string& extra_json) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n();
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(kMagic, 8);
    put_le<std::int64_t>(os, 1);
    put_le<std::int64_t>(os, n);
    put_le<std::int64_t>(os, u.k());
    for (int d = 0; d < n; ++d) put_le<std::int64_t>(os, dom.dims()[d]);
    put_le<double>(os, dom.h());
    for (int d = 0; d < n; ++d) put_le<double>(os, dom.lo()[d]);
    const Point hi = dom.hi();
    for (int d = 0; d < n; ++d) put_le<double>(os, hi[d]);
    const auto raw = u.raw();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Index i = 0; i < dom.node_count(); ++i)
      for (int c = 0; c < u.k(); ++c) put_le<double>(os, dom.valued(i) ? raw[i * u.k() + c] : nan);
    if (!os) throw Error("failed writing " + path.string());
  }
  nlohmann::json side;
  side["format"] = "relaxlab-field";
  side["version"] = 1;
  side["n"] = n;
  side["k"] = u.k();
  side["dims"] = std::vector<Index>(dom.dims().begin(), dom.dims().begin() + n);
  side["h"] = dom.h();
  side["domain"] = shape_json(dom);
  side["counts"] = {{"interior", dom.interior().size()},
                    {"boundary", dom.boundary().size()},
                    {"exterior", dom.node_count() - static_cast<Index>(dom.interior().size() + dom.boundary().size())}};
  side["extra"] = nlohmann::json::parse(extra_json);
  std::ofstream js(path.string() + ".json");
  js << side.dump(2) << '\n';
}

FieldFile read_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw Error(path.string() + " is not a field file");
  if (get_le<std::int64_t>(is) != 1) throw Error("unsupported field file version");
  FieldFile f;
  f.n = static_cast<int>(get_le<std::int64_t>(is));
  f.k = static_cast<int>(get_le<std::int64_t>(is));
  if (f.n < 1 || f.n > kMaxDim || f.k < 1 || f.k > kMaxTarget) throw Error("corrupt field file header");
  Index count = 1;
  for (int d = 0; d < f.n; ++d) {
    f.dims[d] = get_le<std::int64_t>(is);
    count *= f.dims[d];
  }
  f.h = get_le<double>(is);
  f.lo.resize(f.n);
  f.hi.resize(f.n);
  for (int d = 0; d < f.n; ++d) f.lo[d] = get_le<double>(is);
  for (int d = 0; d < f.n; ++d) f.hi[d] = get_le<double>(is);
  f.values.resize(static_cast<std::size_t>(count * f.k));
  for (auto& v : f.values) v = get_le<double>(is);
  return f;
}

Field field_from_file(const FieldFile& file, std::shared_ptr<const DomainSpec> dom) {
  if (file.n != dom->n()) throw Error("field file dimension does not match the domain");
  for (int d = 0; d < file.n; ++d)
    if (file.dims[d] != dom->dims()[d]) throw Error("field file grid does not match the domain");
  if (std::abs(file.h - dom->h()) > 1e-14 * dom->h()) throw Error("field file spacing does not match the domain");
  Field u(dom, file.k);
  auto raw = u.raw();
  for (Index i = 0; i < dom->node_count(); ++i)
    if (dom->valued(i))
      for (int c = 0; c < file.k; ++c) raw[i * file.k + c] = file.values[i * file.k + c];
  return u;
}

}  // namespace relaxlab

#include "relaxlab/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace relaxlab::kernels {

namespace {

struct Pair {
  double a = 0.0, b = 0.0;
};

/// Neumaier-compensated sum of block partials in block order.
template <typename Get>
double ordered_sum(std::size_t count, Get get) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double v = get(i);
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

Index block_count(Index count) { return (count + kBlock - 1) / kBlock; }

inline Vec load(std::span<const double> raw, Index node, int k) {
  Vec z(k);
  for (int c = 0; c < k; ++c) z[c] = raw[node * k + c];
  return z;
}

}  // namespace

double blocked_sum(Index count, const std::function<double(Index, Index)>& block_sum) {
  const Index nb = block_count(count);
  std::vector<double> partial(static_cast<std::size_t>(nb), 0.0);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < nb; ++b) partial[b] = block_sum(b * kBlock, std::min(count, (b + 1) * kBlock));
  return ordered_sum(partial.size(), [&](std::size_t i) { return partial[i]; });
}

EnergyParts energy(const Field& u, const Potential* p, double eps) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const double scale = 0.5 * std::pow(dom.h(), n - 2);
  const double inv_eps2 = p ? 1.0 / (eps * eps) : 0.0;
  const auto nodes = dom.weighted();
  const auto raw = u.raw();
  const Index count = static_cast<Index>(nodes.size());
  const Index nb = block_count(count);
  std::vector<Pair> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < nb; ++b) {
    Pair acc;
    const Index end = std::min(count, (b + 1) * kBlock);
    for (Index t = b * kBlock; t < end; ++t) {
      const Index i = nodes[t];
      for (int d = 0; d < n; ++d) {
        const double w = dom.edge_weight(i, d);
        if (w == 0.0) continue;
        const Index j = i + dom.stride(d);
        double sq = 0.0;
        for (int c = 0; c < k; ++c) {
          const double diff = raw[j * k + c] - raw[i * k + c];
          sq += diff * diff;
        }
        acc.a += w * sq;
      }
      if (p) acc.b += dom.mass(i) * p->eval(load(raw, i, k));
    }
    partial[b] = acc;
  }
  EnergyParts e;
  e.dirichlet = scale * ordered_sum(partial.size(), [&](std::size_t i) { return partial[i].a; });
  e.potential = inv_eps2 * ordered_sum(partial.size(), [&](std::size_t i) { return partial[i].b; });
  return e;
}

EnergyParts energy_serial(const Field& u, const Potential* p, double eps) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const auto raw = u.raw();
  double dir = 0.0, pot = 0.0;
  for (Index i = 0; i < dom.node_count(); ++i) {
    if (!dom.valued(i)) continue;
    for (int d = 0; d < n; ++d) {
      const double w = dom.edge_weight(i, d);
      if (w == 0.0) continue;
      const Vec diff = load(raw, i + dom.stride(d), k) - load(raw, i, k);
      dir += w * diff.squaredNorm();
    }
    if (p && dom.mass(i) > 0.0) pot += dom.mass(i) * p->eval(load(raw, i, k));
  }
  EnergyParts e;
  e.dirichlet = 0.5 * std::pow(dom.h(), n - 2) * dir;
  e.potential = p ? pot / (eps * eps) : 0.0;
  return e;
}

void gradient(const Field& u, const Potential* p, double eps, std::span<double> grad) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const double scale = std::pow(dom.h(), n - 2);
  const double inv_eps2 = p ? 1.0 / (eps * eps) : 0.0;
  const auto nodes = dom.interior();
  const auto raw = u.raw();
  std::fill(grad.begin(), grad.end(), 0.0);
  const Index count = static_cast<Index>(nodes.size());
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < count; ++t) {
    const Index i = nodes[t];
    double g[kMaxTarget] = {0.0, 0.0, 0.0, 0.0, 0.0};
    for (int d = 0; d < n; ++d) {
      const Index s = dom.stride(d);
      const double wp = dom.edge_weight(i, d);
      const double wm = dom.edge_weight(i - s, d);
      for (int c = 0; c < k; ++c)
        g[c] += wp * (raw[i * k + c] - raw[(i + s) * k + c]) + wm * (raw[i * k + c] - raw[(i - s) * k + c]);
    }
    Vec gf;
    if (p) gf = p->grad(load(raw, i, k));
    for (int c = 0; c < k; ++c) grad[i * k + c] = scale * g[c] + (p ? dom.mass(i) * inv_eps2 * gf[c] : 0.0);
  }
}

void gradient_serial(const Field& u, const Potential* p, double eps, std::span<double> grad) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const double scale = std::pow(dom.h(), n - 2);
  const auto raw = u.raw();
  std::fill(grad.begin(), grad.end(), 0.0);
  // scatter each edge's contribution to both endpoints, then mask to the interior
  std::vector<double> acc(grad.size(), 0.0);
  for (Index i = 0; i < dom.node_count(); ++i) {
    if (!dom.valued(i)) continue;
    for (int d = 0; d < n; ++d) {
      const double w = dom.edge_weight(i, d);
      if (w == 0.0) continue;
      const Index j = i + dom.stride(d);
      for (int c = 0; c < k; ++c) {
        const double diff = raw[i * k + c] - raw[j * k + c];
        acc[i * k + c] += scale * w * diff;
        acc[j * k + c] -= scale * w * diff;
      }
    }
    if (p && dom.mass(i) > 0.0) {
      const Vec gf = p->grad(load(raw, i, k));
      for (int c = 0; c < k; ++c) acc[i * k + c] += dom.mass(i) * gf[c] / (eps * eps);
    }
  }
  for (Index i : dom.interior())
    for (int c = 0; c < k; ++c) grad[i * k + c] = acc[i * k + c];
}

EnergyParts energy_change(const Field& u, std::span<const double> step, const Potential* p, double eps) {
  const DomainSpec& dom = u.domain();
  const int n = dom.n(), k = u.k();
  const double scale = 0.5 * std::pow(dom.h(), n - 2);
  const double inv_eps2 = p ? 1.0 / (eps * eps) : 0.0;
  const auto nodes = dom.weighted();
  const auto raw = u.raw();
  const Index count = static_cast<Index>(nodes.size());
  const Index nb = block_count(count);
  std::vector<Pair> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < nb; ++b) {
    Pair acc;
    const Index end = std::min(count, (b + 1) * kBlock);
    for (Index t = b * kBlock; t < end; ++t) {
      const Index i = nodes[t];
      for (int d = 0; d < n; ++d) {
        const double w = dom.edge_weight(i, d);
        if (w == 0.0) continue;
        const Index j = i + dom.stride(d);
        double v = 0.0;
        for (int c = 0; c < k; ++c) {
          const double ds = step[j * k + c] - step[i * k + c];
          if (ds == 0.0) continue;
          const double du = raw[j * k + c] - raw[i * k + c];
          v += ds * (2.0 * du + ds);
        }
        acc.a += w * v;
      }
      if (p && dom.kind(i) == NodeKind::interior) {
        Vec s(k);
        bool moved = false;
        for (int c = 0; c < k; ++c) {
          s[c] = step[i * k + c];
          moved = moved || s[c] != 0.0;
        }
        if (moved) acc.b += dom.mass(i) * p->delta(load(raw, i, k), s);
      }
    }
    partial[b] = acc;
  }
  EnergyParts e;
  e.dirichlet = scale * ordered_sum(partial.size(), [&](std::size_t i) { return partial[i].a; });
  e.potential = inv_eps2 * ordered_sum(partial.size(), [&](std::size_t i) { return partial[i].b; });
  return e;
}

double mass_dot(const DomainSpec& dom, int k, std::span<const double> a, std::span<const double> b) {
  const auto nodes = dom.interior();
  return blocked_sum(static_cast<Index>(nodes.size()), [&](Index lo, Index hi) {
    double s = 0.0;
    for (Index t = lo; t < hi; ++t) {
      const Index i = nodes[t];
      double v = 0.0;
      for (int c = 0; c < k; ++c) v += a[i * k + c] * b[i * k + c];
      s += dom.mass(i) * v;
    }
    return s;
  });
}

double dot(const DomainSpec& dom, int k, std::span<const double> a, std::span<const double> b) {
  const auto nodes = dom.interior();
  return blocked_sum(static_cast<Index>(nodes.size()), [&](Index lo, Index hi) {
    double s = 0.0;
    for (Index t = lo; t < hi; ++t) {
      const Index i = nodes[t];
      for (int c = 0; c < k; ++c) s += a[i * k + c] * b[i * k + c];
    }
    return s;
  });
}

double sup_per_volume(const DomainSpec& dom, int k, std::span<const double> g) {
  double best = 0.0;
  const auto nodes = dom.interior();
  const Index count = static_cast<Index>(nodes.size());
#pragma omp parallel for reduction(max : best) schedule(static)
  for (Index t = 0; t < count; ++t) {
    const Index i = nodes[t];
    double sq = 0.0;
    for (int c = 0; c < k; ++c) sq += g[i * k + c] * g[i * k + c];
    best = std::max(best, std::sqrt(sq) / dom.mass(i));
  }
  return best;
}

}  // namespace relaxlab::kernels

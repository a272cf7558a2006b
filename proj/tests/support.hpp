#pragma once

#include "relaxlab/grid.hpp"
#include "relaxlab/potentials.hpp"

#include <functional>

namespace relaxlab::test {

inline Point pt(std::initializer_list<double> xs) {
  Point p(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) p[i++] = x;
  return p;
}

inline Vec vc(std::initializer_list<double> xs) {
  Vec v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline std::shared_ptr<const DomainSpec> ball(double h, double radius = 1.0, int n = 3) {
  const Point c = Point::Zero(n);
  return build_domain(DomainRequest{BallShape{c, radius}, ball_grid(c, radius, h)});
}

inline std::shared_ptr<const DomainSpec> box(double h, double half = 0.5, int n = 3) {
  const Point lo = Point::Constant(n, -half), hi = Point::Constant(n, half);
  return build_domain(DomainRequest{BoxShape{lo, hi}, box_grid(lo, hi, h)});
}

/// Field with u(x) = g(x) at every valued node.
inline Field sample(std::shared_ptr<const DomainSpec> dom, int k, const std::function<Vec(const Point&)>& g) {
  Field u(dom, k);
  for (Index i = 0; i < dom->node_count(); ++i)
    if (dom->valued(i)) u.set(i, g(dom->coords(i)));
  return u;
}

}  // namespace relaxlab::test

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relaxlab/grid.hpp"
#include "relaxlab/kernels.hpp"
#include "support.hpp"

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace relaxlab;
using test::pt;
using test::vc;

namespace {

constexpr double kPi = std::numbers::pi;

Mat affine_matrix() {
  Mat m(3, 3);
  m << 1.0, -0.5, 0.25, 0.3, 2.0, -1.0, 0.0, 0.7, -0.4;
  return m;
}

}  // namespace

TEST_SUITE("domain") {
  TEST_CASE("ball node count matches the volume") {
    const auto dom = test::ball(1.0 / 16.0);
    const double expected = (4.0 * kPi / 3.0) * std::pow(16.0, 3);
    CHECK(std::abs(double(dom->interior().size()) - expected) / expected <= 0.02);
    CHECK(dom->volume() == doctest::Approx(4.0 * kPi / 3.0).epsilon(0.01));
  }

  TEST_CASE("box volume is exact and face normals are axis vectors") {
    const auto dom = test::box(0.1, 0.5);
    CHECK(dom->volume() == doctest::Approx(1.0).epsilon(1e-12));
    for (Index i : dom->boundary()) {
      const Point x = dom->coords(i);
      const Point nu = dom->normal(i);
      int on_faces = 0;
      for (int a = 0; a < 3; ++a) on_faces += std::abs(std::abs(x[a]) - 0.5) < 1e-9;
      if (on_faces != 1) continue;  // edges and corners have no unique normal
      CHECK(nu.norm() == doctest::Approx(1.0));
      CHECK(nu.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
    }
  }

  TEST_CASE("non-positive h is rejected") {
    const Point c = Point::Zero(3);
    CHECK_THROWS(ball_grid(c, 1.0, 0.0));
    CHECK_THROWS(box_grid(pt({0, 0, 0}), pt({1, 1, 1}), -0.1));
  }

  TEST_CASE("mask from sampled signed distance reproduces the ball") {
    const double h = 1.0 / 12.0;
    const Point c = Point::Zero(3);
    const GridBox g = ball_grid(c, 1.0, h);
    const auto reference = build_domain(DomainRequest{BallShape{c, 1.0}, g});
    std::vector<double> sd(static_cast<std::size_t>(reference->node_count()));
    for (Index i = 0; i < reference->node_count(); ++i) sd[i] = reference->coords(i).norm() - 1.0;
    const auto mask = build_domain(DomainRequest{MaskShape{sd}, g});
    CHECK(mask->volume() == doctest::Approx(reference->volume()).epsilon(0.02));
    CHECK(std::abs(double(mask->interior().size()) - double(reference->interior().size())) <=
          0.01 * double(reference->interior().size()));
  }

  TEST_CASE("neighbors off the grid are -1") {
    const auto dom = test::box(0.25, 0.5);
    CHECK(dom->neighbor(0, 0, -1) == -1);
    CHECK(dom->neighbor(dom->node_count() - 1, 2, +1) == -1);
  }

  TEST_CASE("2-D disk") {
    const auto dom = test::ball(1.0 / 32.0, 1.0, 2);
    CHECK(dom->n() == 2);
    CHECK(dom->volume() == doctest::Approx(kPi).epsilon(0.01));
  }
}

TEST_SUITE("stencils") {
  TEST_CASE("affine fields: exact gradient, zero Laplacian") {
    const auto dom = test::ball(1.0 / 8.0);
    const Mat m = affine_matrix();
    const Vec c = vc({0.1, -0.2, 0.3});
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x + c); });
    for (Index i = 0; i < dom->node_count(); ++i) {
      if (!dom->valued(i)) continue;
      CHECK((discrete_gradient(u, i) - m).norm() <= 1e-12);
      if (dom->kind(i) == NodeKind::interior) CHECK(discrete_laplacian(u, i).norm() <= 1e-12);
    }
  }

  TEST_CASE("|x|^2 has Laplacian 2n") {
    const auto dom = test::box(0.125, 0.5);
    const Field u = test::sample(dom, 2, [](const Point& x) { return vc({x.squaredNorm(), 2.0 * x.squaredNorm()}); });
    for (Index i : dom->interior()) {
      CHECK(discrete_laplacian(u, i)[0] == doctest::Approx(6.0));
      CHECK(discrete_laplacian(u, i)[1] == doctest::Approx(12.0));
    }
  }

  TEST_CASE("sin(x1) Laplacian error is second order") {
    // error at the nodes x1 = 0.25, shared by both grids
    auto error_at = [](double h) {
      const auto dom = test::box(h, 0.5);
      const Field u = test::sample(dom, 1, [](const Point& x) { return vc({std::sin(2.0 * x[0])}); });
      double err = 0.0;
      for (Index i : dom->interior()) {
        if (std::abs(dom->coords(i)[0] - 0.25) > 1e-9) continue;
        err = std::max(err, std::abs(discrete_laplacian(u, i)[0] + 4.0 * std::sin(0.5)));
      }
      return err;
    };
    CHECK(error_at(1.0 / 8.0) / error_at(1.0 / 16.0) == doctest::Approx(4.0).epsilon(0.02));
  }
}

TEST_SUITE("energy") {
  TEST_CASE("affine Dirichlet energy equals 1/2 |M|^2 vol on a box") {
    const auto dom = test::box(0.1, 0.5);
    const Mat m = affine_matrix();
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x); });
    CHECK(kernels::energy(u, nullptr, 1.0).dirichlet == doctest::Approx(0.5 * m.squaredNorm()).epsilon(1e-12));
  }

  TEST_CASE("constant field in N has zero energy and gradient") {
    const auto dom = test::box(0.1, 0.5);
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(dom, 3, [](const Point&) { return vc({0.0, 0.0, 1.0}); });
    CHECK(kernels::energy(u, p.get(), 0.1).total() == 0.0);
    std::vector<double> g(u.raw().size());
    kernels::gradient(u, p.get(), 0.1, g);
    for (double x : g) CHECK(x == 0.0);
  }

  TEST_CASE("scaling f by 4 quadruples only the potential part") {
    const auto dom = test::ball(1.0 / 8.0);
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(0.5 * x + vc({0.2, 0.1, 0.0})); });
    const auto e1 = kernels::energy(u, p.get(), 0.2);
    const auto e2 = kernels::energy(u, p.get(), 0.1);  // eps^-2 x 4 has the same effect
    CHECK(e2.dirichlet == e1.dirichlet);
    CHECK(e2.potential == doctest::Approx(4.0 * e1.potential).epsilon(1e-14));
  }

  TEST_CASE("parallel kernels match the serial reference and ignore the thread count") {
    // the serial versions sum in node order and scatter edges, so they agree
    // to rounding; the parallel ones must agree with each other exactly
    const auto dom = test::ball(1.0 / 12.0);
    const auto p = make_ginzburg_landau(3);
    Rng rng(1);
    Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(x + 0.1 * vc({rng.normal(), rng.normal(), rng.normal()})); });
    const auto es = kernels::energy_serial(u, p.get(), 0.3);
    std::vector<double> gs(u.raw().size()), gp(u.raw().size()), g1;
    kernels::gradient_serial(u, p.get(), 0.3, gs);
    EnergyParts e1;
    for (int threads : {1, 2, 4}) {
      omp_set_num_threads(threads);
      const auto ep = kernels::energy(u, p.get(), 0.3);
      CHECK(ep.dirichlet == doctest::Approx(es.dirichlet).epsilon(1e-13));
      CHECK(ep.potential == doctest::Approx(es.potential).epsilon(1e-13));
      kernels::gradient(u, p.get(), 0.3, gp);
      for (std::size_t j = 0; j < gp.size(); ++j) CHECK(std::abs(gp[j] - gs[j]) <= 1e-14 * (1.0 + std::abs(gs[j])));
      if (threads == 1) {
        e1 = ep;
        g1 = gp;
      } else {
        CHECK(ep.dirichlet == e1.dirichlet);
        CHECK(ep.potential == e1.potential);
        CHECK(gp == g1);
      }
    }
  }

  TEST_CASE("energy_change agrees with the difference of energies") {
    const auto dom = test::ball(1.0 / 10.0);
    const auto p = make_ginzburg_landau(3);
    Rng rng(2);
    Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(x + 0.1 * vc({rng.normal(), rng.normal(), rng.normal()})); });
    std::vector<double> step(u.raw().size(), 0.0);
    for (Index i : dom->interior())
      for (int c = 0; c < 3; ++c) step[i * 3 + c] = 0.05 * rng.normal();
    Field v = u;
    for (std::size_t j = 0; j < step.size(); ++j) v.raw()[j] += step[j];
    const double direct = kernels::energy(v, p.get(), 0.25).total() - kernels::energy(u, p.get(), 0.25).total();
    CHECK(kernels::energy_change(u, step, p.get(), 0.25).total() == doctest::Approx(direct).epsilon(1e-10));
  }

  TEST_CASE("cell density integrates to the energy") {
    const auto dom = test::ball(1.0 / 10.0);
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(0.9 * x + vc({0.0, 0.2, 0.0})); });
    const auto cells = cell_energy_density(u, p.get(), 0.3);
    double sum = 0.0;
    const double vol = std::pow(dom->h(), 3);
    for (std::size_t c = 0; c < cells.size(); ++c) sum += dom->cell_fraction(static_cast<Index>(c)) * vol * cells[c];
    CHECK(sum == doctest::Approx(kernels::energy(u, p.get(), 0.3).total()).epsilon(1e-10));
  }
}

TEST_SUITE("ball integrals") {
  TEST_CASE("constant field in N has zero ball energy") {
    const auto dom = test::ball(1.0 / 12.0);
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(dom, 3, [](const Point&) { return vc({1.0, 0.0, 0.0}); });
    CHECK(ball_energy(u, 0.2, pt({0, 0, 0}), 0.5, *p) == 0.0);
  }

  TEST_CASE("affine field in an interior ball") {
    const auto dom = test::ball(1.0 / 24.0);
    const Mat m = affine_matrix();
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x); });
    const double rho = 0.4;
    const std::vector<double> rhos{rho};
    const auto cells = cell_energy_density(u, nullptr, 1.0);
    const double e = ball_energy_profile(*dom, cells, pt({0.1, 0.0, -0.1}), rhos)[0];
    CHECK(e == doctest::Approx(0.5 * m.squaredNorm() * 4.0 * kPi / 3.0 * std::pow(rho, 3)).epsilon(0.02));
  }

  TEST_CASE("hedgehog Dirichlet energy is near 4 pi at h = 1/32") {
    const auto dom = test::ball(1.0 / 32.0);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
    CHECK(std::abs(kernels::energy(u, nullptr, 1.0).dirichlet / (4.0 * kPi) - 1.0) <= 0.05);
  }

  TEST_CASE("profile is nondecreasing in rho") {
    const auto dom = test::ball(1.0 / 12.0);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
    const auto cells = cell_energy_density(u, nullptr, 1.0);
    std::vector<double> rhos;
    for (double r = 0.2; r <= 1.5; r += 0.05) rhos.push_back(r);
    const auto e = ball_energy_profile(*dom, cells, pt({0.9, 0, 0}), rhos);
    for (std::size_t j = 1; j < e.size(); ++j) CHECK(e[j] >= e[j - 1]);
  }
}

TEST_SUITE("boundary") {
  TEST_CASE("normal derivative of a linear field") {
    const auto dom = test::ball(1.0 / 16.0);
    const Mat m = affine_matrix();
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x); });
    for (Index i : dom->boundary()) {
      const auto d = boundary_normal_derivative(u, i);
      CHECK((d.value - m * dom->normal(i)).norm() <= 1e-10);
    }
  }

  TEST_CASE("normal derivative of a constant is zero") {
    const auto dom = test::ball(1.0 / 12.0);
    const Field u = test::sample(dom, 2, [](const Point&) { return vc({1.0, -2.0}); });
    for (Index i : dom->boundary()) CHECK(boundary_normal_derivative(u, i).value.norm() <= 1e-12);
  }

  TEST_CASE("squared distance to the sphere: first-order agreement with the chain rule") {
    // d = 1 - |x|, d/dnu (d^2) = -2 d nu . x/|x|; boundary nodes sit off the sphere
    auto worst = [](double h) {
      const auto dom = test::ball(h);
      const Field u = test::sample(dom, 1, [](const Point& x) {
        const double d = 1.0 - x.norm();
        return vc({d * d});
      });
      double err = 0.0;
      for (Index i : dom->boundary()) {
        const Point x = dom->coords(i);
        const double exact = -2.0 * (1.0 - x.norm()) * dom->normal(i).dot(x) / x.norm();
        err = std::max(err, std::abs(boundary_normal_derivative(u, i).value[0] - exact));
      }
      return err;
    };
    const double coarse = worst(1.0 / 12.0), fine = worst(1.0 / 24.0);
    CHECK(fine <= 0.5 / 24.0);
    CHECK(coarse / fine >= 1.8);
  }

  TEST_CASE("boundary data lies on N") {
    const auto p = make_ginzburg_landau(3);
    const auto dom = test::ball(1.0 / 8.0);
    Field u(dom, 3);
    apply_boundary(u, hedgehog_boundary(*p, Point::Zero(3)), *p);
    for (Index i : dom->boundary()) CHECK(p->manifold().distance(u.value(i)) <= 1e-15);
    apply_boundary(u, constant_boundary(*p, vc({2.0, 0.0, 0.0})), *p);
    for (Index i : dom->boundary()) CHECK((u.value(i) - vc({1.0, 0.0, 0.0})).norm() == 0.0);
  }

  TEST_CASE("uniaxial hedgehog") {
    const auto p = make_landau_de_gennes(-0.5, 1.0, 1.0);
    const auto dom = test::ball(1.0 / 6.0);
    Field u(dom, 5);
    apply_boundary(u, hedgehog_boundary(*p, Point::Zero(3)), *p);
    for (Index i : dom->boundary()) CHECK(std::abs(p->eval(u.value(i))) <= 1e-12);
  }

  TEST_CASE("interpolation reproduces affine fields") {
    const auto dom = test::box(0.1, 0.5);
    const Mat m = affine_matrix();
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x); });
    Rng rng(4);
    for (int s = 0; s < 30; ++s) {
      const Point x = pt({rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45)});
      const auto v = interpolate(u, x);
      REQUIRE(v.has_value());
      CHECK((*v - m * x).norm() <= 1e-12);
    }
  }
}

TEST_CASE("field files round-trip exactly") {
  const auto dom = test::ball(1.0 / 8.0);
  Rng rng(6);
  const Field u = test::sample(dom, 3, [&](const Point&) { return vc({rng.normal(), rng.normal(), rng.normal()}); });
  const auto path = std::filesystem::temp_directory_path() / "relaxlab_roundtrip.field";
  write_field(path, u, R"({"tag": 1})");
  const Field v = field_from_file(read_field(path), dom);
  for (Index i = 0; i < dom->node_count(); ++i)
    if (dom->valued(i)) CHECK(v.value(i) == u.value(i));
  CHECK(std::filesystem::exists(path.string() + ".json"));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

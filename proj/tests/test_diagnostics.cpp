#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relaxlab/diagnostics.hpp"
#include "relaxlab/solver.hpp"
#include "support.hpp"

#include <cmath>
#include <limits>
#include <numbers>

using namespace relaxlab;
using test::pt;
using test::vc;

namespace {

constexpr double kPi = std::numbers::pi;

Profile synthetic(const std::vector<double>& rho, const std::function<double(double)>& phi, int id = 0) {
  Profile p;
  p.center_id = id;
  p.center = Point::Zero(3);
  p.rho = rho;
  for (double r : rho) p.phi.push_back(phi(r));
  return p;
}

Field relaxed_hedgehog(double h, double eps, const Potential& p) {
  const auto dom = test::ball(h);
  SolverConfig cfg;
  cfg.grad_tol = 1e-3;
  return minimize(initial_guess(dom, hedgehog_boundary(p, Point::Zero(3)), p), eps, p, cfg).u;
}

}  // namespace

TEST_SUITE("density") {
  TEST_CASE("constant field in N") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::box(0.1), 3, [](const Point&) { return vc({0.0, 1.0, 0.0}); });
    for (double e : energy_density(u, 0.2, p.get())) CHECK(e == 0.0);
  }

  TEST_CASE("affine field has density 1/2 |M|^2") {
    const auto dom = test::box(0.1);
    Mat m(3, 3);
    m << 0.0, 1.0, 0.0, -1.0, 0.0, 0.5, 0.3, 0.0, 0.0;
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x); });
    const auto e = energy_density(u, 1.0, nullptr);
    for (Index i : dom->interior()) CHECK(e[i] == doctest::Approx(0.5 * m.squaredNorm()).epsilon(1e-12));
  }

  TEST_CASE("nodal density integrates to the energy") {
    const auto p = make_ginzburg_landau(3);
    const Field u = relaxed_hedgehog(1.0 / 12.0, 0.3, *p);
    const auto e = energy_density(u, 0.3, p.get());
    double sum = 0.0;
    for (Index i = 0; i < u.domain().node_count(); ++i) sum += u.domain().mass(i) * e[i];
    const double total = energy(u, 0.3, *p).total();
    CHECK(std::abs(sum - total) / total <= 1e-10);
  }

  TEST_CASE("distance to N") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::box(0.25), 3, [](const Point&) { return vc({0.0, 0.0, 1.5}); });
    for (Index i : u.domain().interior()) CHECK(distance_to_manifold(u, p->manifold())[i] == doctest::Approx(0.5));
  }
}

TEST_SUITE("profiles") {
  TEST_CASE("geometric grid puts 2 rho eight points up") {
    const auto g = geometric_rho_grid(0.1, 1.0);
    CHECK(g.back() == 1.0);
    CHECK(g.front() <= 0.1 * std::pow(2.0, 1.0 / 8.0));
    for (std::size_t j = 1; j < g.size(); ++j) CHECK(g[j] / g[j - 1] == doctest::Approx(std::pow(2.0, 1.0 / 8.0)));
    for (std::size_t j = 0; j + 8 < g.size(); ++j) CHECK(g[j + 8] == doctest::Approx(2.0 * g[j]).epsilon(1e-14));
    CHECK_THROWS(geometric_rho_grid(2.0, 1.0));
  }

  TEST_CASE("zero-energy field has phi = 0") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::ball(1.0 / 12.0), 3, [](const Point&) { return vc({1.0, 0.0, 0.0}); });
    const std::vector<double> rho{0.3, 0.5};
    for (double v : renormalized_profile(u, 0.2, p.get(), pt({0, 0, 0}), rho)) CHECK(v == 0.0);
  }

  TEST_CASE("radius must exceed 2h") {
    const Field u = test::sample(test::ball(0.1), 1, [](const Point&) { return vc({0.0}); });
    const std::vector<double> rho{0.15};
    CHECK_THROWS_AS(renormalized_profile(u, 1.0, nullptr, pt({0, 0, 0}), rho), DiagnosticsError);
  }

  TEST_CASE("x/|x| is scale invariant: phi = 4 pi") {
    // the discrete deficit near the singular point is O(h / rho), so equal
    // h / rho gives equal phi and large rho / h approaches 4 pi
    const Point o = pt({0, 0, 0});
    auto phi_at = [&](double h, double rho) {
      const auto dom = test::ball(h);
      const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
      const std::vector<double> r{rho};
      return renormalized_profile(u, 1.0, nullptr, o, r)[0];
    };
    const double a = phi_at(1.0 / 32.0, 0.25), b = phi_at(1.0 / 16.0, 0.5);
    CHECK(a == doctest::Approx(b).epsilon(0.01));
    CHECK(phi_at(1.0 / 32.0, 0.8) == doctest::Approx(4.0 * kPi).epsilon(0.05));
    CHECK(std::abs(phi_at(1.0 / 32.0, 0.8) - 4.0 * kPi) < std::abs(a - 4.0 * kPi));
  }

  TEST_CASE("affine field: phi = 1/2 |M|^2 (4 pi / 3) rho^2") {
    const auto dom = test::ball(1.0 / 24.0);
    Mat m = Mat::Identity(3, 3);
    const Field u = test::sample(dom, 3, [&](const Point& x) { return Vec(m * x); });
    const std::vector<double> rho{0.2, 0.4};
    const auto phi = renormalized_profile(u, 1.0, nullptr, pt({0, 0, 0}), rho);
    for (std::size_t j = 0; j < rho.size(); ++j)
      CHECK(phi[j] == doctest::Approx(0.5 * 3.0 * 4.0 * kPi / 3.0 * rho[j] * rho[j]).epsilon(0.02));
  }

  TEST_CASE("energy inside B_rho: doubling rho scales phi by 2^{2-n}") {
    const auto dom = test::ball(1.0 / 16.0);
    const Field u = test::sample(dom, 1, [](const Point& x) { return vc({std::min(x.norm(), 0.2)}); });
    const std::vector<double> rho{0.35, 0.7};
    const auto cells = cell_energy_density(u, nullptr, 1.0);
    const auto phi = renormalized_profile(*dom, cells, pt({0, 0, 0}), rho);
    CHECK(phi[0] > 0.0);
    CHECK(phi[1] == doctest::Approx(0.5 * phi[0]).epsilon(1e-12));
  }
}

TEST_SUITE("monotonicity") {
  const std::vector<double> rho = geometric_rho_grid(0.05, 1.0);

  TEST_CASE("zero energy passes for any K") {
    const std::vector<Profile> ps{synthetic(rho, [](double) { return 0.0; })};
    for (double K : {0.0, 0.1, 1.0}) CHECK(monotonicity_check(ps, K).ok());
    const auto fit = fit_K(ps);
    CHECK(fit.found);
    CHECK(fit.K == 0.0);
    CHECK(fit.step == 0);
  }

  TEST_CASE("increasing phi needs no correction") {
    const std::vector<Profile> ps{synthetic(rho, [](double r) { return 4.0 * r; })};
    const auto rep = monotonicity_check(ps, 0.0);
    CHECK(rep.ok());
    CHECK(rep.min_margin == doctest::Approx(4.0).epsilon(1e-6));
  }

  TEST_CASE("decreasing phi needs a positive K and the fit is minimal") {
    // psi' = 2K - 1 and 1 - psi(2 rho) = 2 rho (1 - 2K) with phi = 1 - rho
    const std::vector<Profile> ps{synthetic(rho, [](double r) { return 1.0 - r; })};
    CHECK(!monotonicity_check(ps, 0.0).ok());
    const KGrid grid;
    const auto fit = fit_K(ps, grid);
    REQUIRE(fit.found);
    CHECK(fit.step >= 1);
    CHECK(monotonicity_check(ps, fit.K).ok());
    const double below = fit.step == 1 ? 0.0 : fit.K / grid.ratio;
    CHECK(!monotonicity_check(ps, below).ok());
  }

  TEST_CASE("no K on the grid flags the failure") {
    const std::vector<Profile> ps{synthetic(rho, [](double r) { return 1e6 * (1.0 - r); })};
    const auto fit = fit_K(ps, KGrid{1e-3, 2.0, 1.0});
    CHECK(!fit.found);
  }

  TEST_CASE("interior centers of a minimizer need no boundary correction") {
    const auto p = make_ginzburg_landau(3);
    const Field u = relaxed_hedgehog(1.0 / 12.0, 0.3, *p);
    const auto cells = cell_energy_density(u, p.get(), 0.3);
    const auto r = geometric_rho_grid(4.0 / 12.0, 0.9);
    std::vector<Profile> ps;
    for (const Point& c : {pt({0, 0, 0}), pt({0.05, 0.0, 0.0})}) {
      Profile pr;
      pr.center = c;
      pr.rho = r;
      pr.phi = renormalized_profile(u.domain(), cells, c, r);
      ps.push_back(pr);
    }
    const auto fit = fit_K(ps);
    CHECK(fit.found);
    CHECK(fit.step <= 1);
  }

  TEST_CASE("propagation holds on an increasing profile") {
    const std::vector<Profile> ps{synthetic(rho, [](double r) { return 0.4 * r; })};
    const auto rep = propagation_check(ps, 0.0, 0.5);
    CHECK(rep.premises > 0);
    CHECK(rep.violations == 0);
  }
}

TEST_SUITE("stress") {
  TEST_CASE("constant field in N: T = 0") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::box(0.1), 3, [](const Point&) { return vc({0.6, 0.8, 0.0}); });
    const auto s = stress_tensor(u, 0.1, p.get());
    for (double t : s.tensor)
      if (!std::isnan(t)) CHECK(t == 0.0);
    CHECK(s.div_sup == 0.0);
  }

  TEST_CASE("affine field without potential is divergence free") {
    Mat m(2, 3);
    m << 1.0, 2.0, 0.0, -0.5, 0.0, 1.0;
    const Field u = test::sample(test::box(0.1), 2, [&](const Point& x) { return Vec(m * x); });
    CHECK(stress_tensor(u, 1.0, nullptr).div_sup <= 1e-12);
  }

  TEST_CASE("sampled GL kink: T11 is constant along x") {
    // k = 1, u = tanh(x / (eps / sqrt 2)) solves the 1-D Euler-Lagrange equation
    const double eps = 0.1;
    const auto p = make_ginzburg_landau(1);
    const Point lo = pt({-0.5, -0.1}), hi = pt({0.5, 0.1});
    auto t11_spread = [&](double h) {
      const auto dom = build_domain(DomainRequest{BoxShape{lo, hi}, box_grid(lo, hi, h)});
      const Field u = test::sample(dom, 1, [&](const Point& x) { return vc({std::tanh(std::sqrt(2.0) * x[0] / eps)}); });
      const auto s = stress_tensor(u, eps, p.get());
      double lo_t = std::numeric_limits<double>::infinity(), hi_t = -lo_t;
      for (Index i : dom->interior()) {
        const double t = s.tensor[i * 4];
        if (std::isnan(t)) continue;
        lo_t = std::min(lo_t, t);
        hi_t = std::max(hi_t, t);
      }
      return hi_t - lo_t;
    };
    const double coarse = t11_spread(1.0 / 100.0), fine = t11_spread(1.0 / 200.0);
    CHECK(fine < coarse);
    CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.25));
  }
}

TEST_SUITE("bochner") {
  TEST_CASE("constant field gives r = 0") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::ball(1.0 / 10.0), 3, [](const Point&) { return vc({1.0, 0.0, 0.0}); });
    const auto b = bochner_residual(u, 0.2, *p, 0.5);
    CHECK(b.qualifying > 0);
    CHECK(b.fitted_C == 0.0);
  }

  TEST_CASE("nodes outside the tube are excluded") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::ball(1.0 / 10.0), 3, [](const Point& x) { return Vec(x); });
    const auto b = bochner_residual(u, 0.2, *p, 0.5);
    CHECK(b.excluded > 0);
    const auto none = bochner_residual(test::sample(test::ball(0.1), 3, [](const Point&) { return vc({0.01, 0.0, 0.0}); }),
                                       0.2, *p, 0.5);
    CHECK(none.empty);
    CHECK(none.qualifying == 0);
  }
}

TEST_SUITE("singular set") {
  TEST_CASE("hedgehog: one component at the origin") {
    const auto dom = test::ball(1.0 / 16.0);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
    const auto s = singular_set_estimate(u, 4.0, 0.2);
    REQUIRE(s.components.size() == 1);
    double nearest = 1.0;
    for (Index i : s.nodes) nearest = std::min(nearest, dom->coords(i).norm());
    CHECK(nearest <= dom->h());
    CHECK(s.component_diameter[0] <= 2.0 * 0.2 + 2.0 * dom->h());
  }

  TEST_CASE("smooth data and theta = inf give the empty set") {
    const auto dom = test::ball(1.0 / 12.0);
    const Field c = test::sample(dom, 3, [](const Point&) { return vc({0.0, 0.0, 1.0}); });
    CHECK(singular_set_estimate(c, 4.0, 0.25).nodes.empty());
    const Field h = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
    CHECK(singular_set_estimate(h, std::numeric_limits<double>::infinity(), 0.25).nodes.empty());
  }
}

TEST_SUITE("convergence and boundary") {
  TEST_CASE("identical fields have zero distance") {
    const auto dom = test::ball(1.0 / 10.0);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
    const std::vector<const Field*> fs{&u, &u};
    const auto compact = annulus_nodes(*dom, Point::Zero(3), 0.3, 0.95);
    for (double d : uniform_convergence_profile(fs, u, compact)) CHECK(d == 0.0);
    CHECK_THROWS_AS(uniform_convergence_profile(fs, u, std::vector<Index>{}), DiagnosticsError);
    for (Index i : compact) {
      CHECK(dom->coords(i).norm() >= 0.3);
      CHECK(dom->coords(i).norm() <= 0.95);
    }
  }

  TEST_CASE("complement excludes a neighbourhood") {
    const auto dom = test::ball(1.0 / 10.0);
    const std::vector<Point> ex{Point::Zero(3)};
    for (Index i : complement_nodes(*dom, ex, 0.3)) CHECK(dom->coords(i).norm() > 0.3);
  }

  TEST_CASE("constant data: all boundary quantities vanish") {
    const auto p = make_ginzburg_landau(3);
    const Field u = test::sample(test::ball(1.0 / 10.0), 3, [](const Point&) { return vc({0.0, 1.0, 0.0}); });
    const auto r = boundary_gradient_report(u, *p);
    CHECK(r.gradient_sup <= 1e-12);
    CHECK(r.normal_sup <= 1e-12);
    CHECK(r.distance_sup == 0.0);
  }

  TEST_CASE("tangential gradient of x/|x| on the unit sphere is sqrt 2") {
    // d(x/|x|) restricted to the tangent plane of S^2 is the identity there
    const auto p = make_ginzburg_landau(3);
    const auto dom = test::ball(1.0 / 24.0);
    const Field u = test::sample(dom, 3, [](const Point& x) { return Vec(x / x.norm()); });
    const auto r = boundary_gradient_report(u, *p);
    CHECK(r.tangential_sup == doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
    CHECK(r.normal_sup <= 0.05);
  }
}

TEST_SUITE("centers") {
  TEST_CASE("default ball centers") {
    const auto c = default_ball_centers(Point::Zero(3), 1.0, 3);
    CHECK(c.size() == 21);
    int on_boundary = 0;
    for (const Point& x : c) on_boundary += std::abs(x.norm() - 1.0) < 1e-12;
    CHECK(on_boundary == 14);
  }

  TEST_CASE("lattice centers lie in the closed domain") {
    const auto dom = test::ball(1.0 / 12.0);
    const auto c = lattice_centers(*dom, 0.25);
    CHECK(!c.empty());
    for (const Point& x : c) CHECK(dom->signed_distance(x) <= 1e-12);
  }

  TEST_CASE("small-energy witness on a constant field") {
    const auto p = make_ginzburg_landau(3);
    const auto dom = test::ball(1.0 / 12.0);
    const Field u = test::sample(dom, 3, [](const Point&) { return vc({1.0, 0.0, 0.0}); });
    const auto c = lattice_centers(*dom, 0.25);
    const auto w = small_energy_witness(u, 0.2, *p, c, 0.5);
    CHECK(w.fitted_C == 0.0);
    CHECK(w.qualifying > 0);
  }
}

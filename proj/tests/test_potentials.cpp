#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relaxlab/potentials.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace relaxlab;
using test::vc;

namespace {

Vec random_vec(Rng& rng, int k, double scale) {
  Vec v(k);
  for (int c = 0; c < k; ++c) v[c] = scale * rng.normal();
  return v;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(m);
  Eigen::Matrix3d q = qr.householderQ();
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

/// f = 0 everywhere: smooth, but with no normal curvature on N.
class FlatPotential final : public Potential {
public:
  FlatPotential() : Potential(std::make_shared<SphereManifold>(3), 2.0) {}
  std::string name() const override { return "flat"; }
  double eval(const Vec&) const override { return 0.0; }
  Vec grad(const Vec& z) const override { return Vec::Zero(z.size()); }
  Mat hess(const Vec& z) const override { return Mat::Zero(z.size(), z.size()); }
};

/// Decays at infinity, so grad f . z < 0 far out.
class DecayingPotential final : public Potential {
public:
  DecayingPotential() : Potential(std::make_shared<SphereManifold>(3), 2.0) {}
  std::string name() const override { return "decaying"; }
  double eval(const Vec& z) const override {
    const double s = 1.0 - z.squaredNorm();
    return s * s * std::exp(-z.squaredNorm());
  }
  Vec grad(const Vec& z) const override {
    const double r2 = z.squaredNorm(), s = 1.0 - r2, e = std::exp(-r2);
    return (-4.0 * s * e - 2.0 * s * s * e) * z;
  }
  Mat hess(const Vec& z) const override {
    // finite differences are enough for the hypothesis check
    const int k = static_cast<int>(z.size());
    Mat h(k, k);
    for (int c = 0; c < k; ++c) {
      Vec d = Vec::Zero(k);
      d[c] = 1e-6;
      h.col(c) = (grad(z + d) - grad(z - d)) / 2e-6;
    }
    return 0.5 * (h + h.transpose());
  }
};

}  // namespace

TEST_SUITE("ginzburg-landau") {
  TEST_CASE("values at the origin and on the sphere") {
    const auto p = make_ginzburg_landau(3);
    CHECK(p->eval(Vec::Zero(3)) == 1.0);
    CHECK(p->grad(Vec::Zero(3)).norm() == 0.0);
    Rng rng(3);
    for (int s = 0; s < 20; ++s) {
      const Vec q = random_vec(rng, 3, 1.0).normalized();
      CHECK(std::abs(p->eval(q)) <= 1e-15);
      CHECK(p->grad(q).norm() <= 1e-14);
    }
  }

  TEST_CASE("growth at 2 e1") {
    const auto p = make_ginzburg_landau(3);
    const Vec z = vc({2.0, 0.0, 0.0});
    CHECK(p->eval(z) == doctest::Approx(9.0));
    CHECK(p->grad(z).dot(z) == doctest::Approx(48.0));
  }

  TEST_CASE("derivatives agree with finite differences") {
    for (int k : {1, 2, 3, 5}) {
      const auto p = make_ginzburg_landau(k);
      Rng rng(10 + k);
      for (int s = 0; s < 25; ++s) {
        const Vec z = random_vec(rng, k, 0.8);
        const double step = 1e-6;
        for (int c = 0; c < k; ++c) {
          Vec d = Vec::Zero(k);
          d[c] = step;
          const double fd = (p->eval(z + d) - p->eval(z - d)) / (2 * step);
          CHECK(p->grad(z)[c] == doctest::Approx(fd).epsilon(1e-7).scale(1.0));
          const Vec hd = (p->grad(z + d) - p->grad(z - d)) / (2 * step);
          for (int r = 0; r < k; ++r) CHECK(p->hess(z)(r, c) == doctest::Approx(hd[r]).epsilon(1e-6).scale(1.0));
        }
      }
    }
  }

  TEST_CASE("delta matches the plain difference") {
    const auto p = make_ginzburg_landau(3);
    Rng rng(5);
    for (int s = 0; s < 50; ++s) {
      const Vec z = random_vec(rng, 3, 1.0), d = random_vec(rng, 3, 0.3);
      CHECK(p->delta(z, d) == doctest::Approx(p->eval(z + d) - p->eval(z)).epsilon(1e-12).scale(1.0));
    }
  }

  TEST_CASE("normal Hessian eigenvalue is 8 on the sphere") {
    const auto p = make_ginzburg_landau(3);
    Rng rng(8);
    for (int s = 0; s < 20; ++s) {
      const Vec q = random_vec(rng, 3, 1.0).normalized();
      CHECK(q.dot(p->hess(q) * q) == doctest::Approx(8.0));
    }
    const auto rep = verify_hypotheses(*p, 1000, 1);
    CHECK(rep.ok());
    CHECK(rep.min_normal_eigenvalue == doctest::Approx(8.0).epsilon(1e-9));
  }
}

TEST_SUITE("landau-de gennes") {
  // uniaxial reduction: a s^2/3 - 2 b2 s^3/27 + c2 s^4/9, stationary at
  // 4 c2 s^2 - 2 b2 s + 6 a = 0
  TEST_CASE("order parameter matches the closed-form root") {
    for (auto [a, b2, c2] : {std::tuple{-0.5, 1.0, 1.0}, std::tuple{-0.2, 0.7, 1.3}, std::tuple{0.0, 1.0, 1.0}}) {
      const auto p = make_landau_de_gennes(a, b2, c2);
      const auto& ldg = dynamic_cast<const LandauDeGennes&>(*p);
      const double s = (b2 + std::sqrt(b2 * b2 - 24.0 * a * c2)) / (4.0 * c2);
      CHECK(ldg.order_parameter() == doctest::Approx(s).epsilon(1e-8));
    }
  }

  TEST_CASE("vanishes on uniaxial tensors and is positive at the origin") {
    const auto p = make_landau_de_gennes(-0.5, 1.0, 1.0);
    const auto& m = dynamic_cast<const UniaxialManifold&>(p->manifold());
    CHECK(p->eval(Vec::Zero(5)) > 0.0);
    CHECK(std::abs(p->eval(m.uniaxial(Eigen::Vector3d::UnitX()))) <= 1e-12);
    Rng rng(2);
    for (int s = 0; s < 20; ++s) {
      const Vec q = m.sample(rng);
      CHECK(std::abs(p->eval(q)) <= 1e-12);
      CHECK(p->grad(q).norm() <= 1e-10);
    }
  }

  TEST_CASE("rotational invariance") {
    const auto p = make_landau_de_gennes(-0.5, 1.0, 1.0);
    Rng rng(12);
    for (int s = 0; s < 10; ++s) {
      const Vec q = random_vec(rng, 5, 0.6);
      const Eigen::Matrix3d r = random_rotation(rng);
      const Vec rq = qtensor::from_matrix(r * qtensor::to_matrix(q) * r.transpose());
      CHECK(std::abs(p->eval(rq) - (p->eval(q))) <= 1e-10);
    }
  }

  TEST_CASE("Q-tensor basis is orthonormal") {
    const auto& e = qtensor::basis();
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        CHECK((e[i] * e[j]).trace() == doctest::Approx(i == j ? 1.0 : 0.0).scale(1.0));
        CHECK(e[i].trace() == doctest::Approx(0.0).scale(1.0));
      }
  }

  TEST_CASE("hypotheses hold") { CHECK(verify_hypotheses(*make_landau_de_gennes(-0.5, 1.0, 1.0), 1000, 4).ok()); }
}

TEST_SUITE("manifolds") {
  TEST_CASE("sphere projection is idempotent and tangent projector is orthogonal") {
    SphereManifold m(3);
    Rng rng(21);
    for (int s = 0; s < 50; ++s) {
      const Vec z = random_vec(rng, 3, 0.2) + m.sample(rng);
      const Vec q = m.project(z);
      CHECK(q.norm() == doctest::Approx(1.0));
      CHECK((m.project(q) - q).norm() <= 1e-15);
      CHECK(m.distance(z) == doctest::Approx(std::abs(z.norm() - 1.0)));
      const Mat t = m.tangent_projector(z);
      CHECK((t * t - t).norm() <= 1e-14);
      CHECK((t - t.transpose()).norm() <= 1e-15);
      CHECK((t * q).norm() <= 1e-14);
      CHECK((t + m.normal_projector(z) - Mat::Identity(3, 3)).norm() <= 1e-14);
    }
  }

  TEST_CASE("projection outside the tube throws") {
    SphereManifold m(3);
    CHECK_THROWS_AS(m.project(vc({0.1, 0.0, 0.0})), TubeError);
    CHECK_THROWS_AS(m.project_unchecked(Vec::Zero(3)), TubeError);
  }

  TEST_CASE("uniaxial projection recovers the base point along normals") {
    const auto p = make_landau_de_gennes(-0.5, 1.0, 1.0);
    const VacuumManifold& m = p->manifold();
    Rng rng(31);
    for (int s = 0; s < 30; ++s) {
      const Vec q = m.sample(rng);
      const Mat nb = m.normal_basis(q);
      Vec xi = Vec::Zero(5);
      for (int c = 0; c < nb.cols(); ++c) xi += rng.normal() * nb.col(c);
      const Vec z = q + 0.3 * m.tubular_radius() * xi.normalized();
      CHECK((m.project(z) - q).norm() <= 1e-9);
      CHECK(m.distance(z) == doctest::Approx(0.3 * m.tubular_radius()).epsilon(1e-8));
    }
  }
}

TEST_SUITE("normal form") {
  TEST_CASE("GL k = 1 closed form (2 + t)^2") {
    const auto p = make_ginzburg_landau(1);
    for (double t : {0.1, 0.05, -0.2, 0.3}) {
      const Vec z = vc({1.0 + t});
      CHECK(std::abs(normal_form(*p, z, 16)(0, 0) - ((2 + t) * (2 + t))) <= 1e-12);
    }
  }

  TEST_CASE("on N it is half the Hessian") {
    const auto p = make_ginzburg_landau(3);
    const Vec q = vc({0.0, 0.6, 0.8});
    CHECK((normal_form(*p, q, 16) - 0.5 * p->hess(q)).norm() <= 1e-13);
  }

  TEST_CASE("reproduces f in the tube") {
    const auto p = make_ginzburg_landau(3);
    const Vec z = vc({1.05, 0.0, 0.0});
    const Vec perp = z - p->manifold().project(z);
    CHECK(std::abs(perp.dot(normal_form(*p, z, 16) * perp) - (p->eval(z))) <= 1e-10);

    const auto ldg = make_landau_de_gennes(-0.5, 1.0, 1.0);
    Rng rng(41);
    for (int s = 0; s < 50; ++s) {
      const Vec q = ldg->manifold().sample(rng);
      const Vec w = q + random_vec(rng, 5, 0.05);
      const Vec wp = w - ldg->manifold().project(w);
      CHECK(std::abs(wp.dot(normal_form(*ldg, w, 16) * wp) - (ldg->eval(w))) <= 1e-8);
    }
  }

  TEST_CASE("outside the tube throws") {
    CHECK_THROWS_AS(normal_form(*make_ginzburg_landau(3), vc({0.2, 0.0, 0.0})), TubeError);
  }

  TEST_CASE("Gauss-Legendre integrates polynomials up to degree 2m - 1") {
    for (int m : {2, 5, 16}) {
      const auto q = gauss_legendre_unit(m);
      for (int d = 0; d <= 2 * m - 1; ++d) {
        double sum = 0.0;
        for (int i = 0; i < m; ++i) sum += q.weights[i] * std::pow(q.nodes[i], d);
        CHECK(sum == doctest::Approx(1.0 / (d + 1)).epsilon(1e-13));
      }
    }
  }
}

TEST_SUITE("hypotheses") {
  TEST_CASE("zero potential violates nondegeneracy") {
    const auto rep = verify_hypotheses(FlatPotential{}, 200, 1);
    CHECK(!rep.nondegeneracy_violations.empty());
    CHECK(!rep.ok());
  }

  TEST_CASE("decaying potential violates radial growth") {
    const auto rep = verify_hypotheses(DecayingPotential{}, 400, 2);
    CHECK(!rep.growth_violations.empty());
  }

  TEST_CASE("fitted alpha0 is positive and below the value on N") {
    const auto p = make_ginzburg_landau(3);
    const double a0 = estimate_alpha0(*p, 200, 3);
    CHECK(a0 > 0.0);
    CHECK(a0 <= 4.0 + 1e-9);
  }
}

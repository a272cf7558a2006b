// Serial reference vs OpenMP kernels on a hedgehog field.
//   relaxlab_bench [h] [repeats]

#include "relaxlab/experiments.hpp"
#include "relaxlab/kernels.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

using namespace relaxlab;

namespace {

template <class F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const double h = argc > 1 ? std::atof(argv[1]) : 1.0 / 32.0;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
  const auto p = make_ginzburg_landau(3);
  const Point c = Point::Zero(3);
  const auto dom = build_domain(DomainRequest{BallShape{c, 1.0}, ball_grid(c, 1.0, h)});
  const Field u = initial_guess(dom, hedgehog_boundary(*p, c), *p);
  std::vector<double> g(u.raw().size());
  const double eps = 0.2;

  std::printf("h = %g, %lld interior nodes, max threads %d\n", h, static_cast<long long>(dom->interior().size()),
              omp_get_max_threads());
  const double es = best_of(repeats, [&] { kernels::energy_serial(u, p.get(), eps); });
  const double gs = best_of(repeats, [&] { kernels::gradient_serial(u, p.get(), eps, g); });
  std::printf("%-10s %8s %12s %12s\n", "kernel", "threads", "seconds", "speedup");
  std::printf("%-10s %8s %12.6f %12s\n", "energy", "serial", es, "1.00");
  std::printf("%-10s %8s %12.6f %12s\n", "gradient", "serial", gs, "1.00");
  const int max_threads = omp_get_max_threads();
  for (int t = 1; t <= max_threads; t *= 2) {
    omp_set_num_threads(t);
    const double ep = best_of(repeats, [&] { kernels::energy(u, p.get(), eps); });
    const double gp = best_of(repeats, [&] { kernels::gradient(u, p.get(), eps, g); });
    std::printf("%-10s %8d %12.6f %12.2f\n", "energy", t, ep, es / ep);
    std::printf("%-10s %8d %12.6f %12.2f\n", "gradient", t, gp, gs / gp);
  }
  omp_set_num_threads(max_threads);
  const double ep = kernels::energy(u, p.get(), eps).total(), er = kernels::energy_serial(u, p.get(), eps).total();
  std::printf("relative difference parallel vs serial energy: %.3g\n", std::abs(ep - er) / er);
  return std::abs(ep - er) <= 1e-12 * er ? 0 : 1;
}

// Times the OpenMP marginal likelihood and data-cloning chains against their
// serial references and checks that both paths give identical numbers.
#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "betamix/dataclone.hpp"
#include "betamix/marginal.hpp"
#include "betamix/simulate.hpp"

using namespace betamix;

namespace {

double seconds(const std::function<void()>& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void bench_case(const char* label, const SimResult& sim, IntegrationSettings settings, int reps) {
  double par = 0.0, ser = 0.0;
  const double tp = seconds([&] { par = marginal_loglik(sim.data, sim.spec, sim.truth, settings); }, reps);
  const double ts = seconds([&] { ser = marginal_loglik_serial(sim.data, sim.spec, sim.truth, settings); }, reps);
  std::printf("%-28s %-8s serial %9.3f ms  openmp %9.3f ms  speedup %5.2f  identical %s\n", label,
              std::string(method_name(settings.method)).c_str(), 1e3 * ts, 1e3 * tp, ts / tp,
              par == ser ? "yes" : "NO");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  SimDesign iqvt;
  iqvt.seed = 11;
  const auto a = simulate(iqvt);
  SimDesign iqvt_slope = iqvt;
  iqvt_slope.cov = CovKind::InterceptSlope;
  const auto b = simulate(iqvt_slope);
  SimDesign iqa;
  iqa.preset = Preset::Iqa;
  iqa.seed = 11;
  const auto c = simulate(iqa);

  for (const auto& [label, sim] : {std::pair<const char*, const SimResult*>{"iqvt random intercept", &a},
                                   {"iqvt intercept+slope", &b},
                                   {"iqa quarter-within-plant", &c}}) {
    bench_case(label, *sim, {Method::Laplace, 15, 4096}, 20);
    bench_case(label, *sim, {Method::AGHQ, sim->spec.q_b() > 2 ? 5 : 15, 4096}, 5);
    bench_case(label, *sim, {Method::QMC, 15, 4096}, 5);
  }

  SamplerSettings s;
  s.iters = 600;
  s.burnin = 200;
  s.chains = 3;
  s.seed = 5;
  CloneRun par, ser;
  const double tp = seconds([&] { par = dc_sample(a.data, a.spec, 10, {}, s); }, 1);
  s.parallel = false;
  const double ts = seconds([&] { ser = dc_sample(a.data, a.spec, 10, {}, s); }, 1);
  bool same = par.chains.size() == ser.chains.size();
  for (std::size_t i = 0; same && i < par.chains.size(); ++i) same = par.chains[i] == ser.chains[i];
  std::printf("%-28s %-8s serial %9.3f ms  openmp %9.3f ms  speedup %5.2f  identical %s\n", "dc chains K=10", "mcmc",
              1e3 * ts, 1e3 * tp, ts / tp, same ? "yes" : "NO");
  return 0;
}

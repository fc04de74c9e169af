// detection.cpp — implementation of the detector models.

#include "qubus/detection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qubus/elements.hpp"

namespace qubus {

namespace {

void check_eff(const ApdModel& apd, const char* who) {
  if (!(apd.eta_d >= 0.0 && apd.eta_d <= 1.0))
    throw std::invalid_argument(std::string(who) +
                                ": detector efficiency outside [0, 1]");
}

Complex expi(double x) { return {std::cos(x), std::sin(x)}; }

}  // namespace

// ------------------------ kernels ------------------------

BusKernel no_click_kernel(const ApdModel& apd) {
  check_eff(apd, "no_click_kernel");
  const double eta = apd.eta_d;
  return [eta](Complex a, Complex b) -> Complex {
    // ⟨b|Π₀|a⟩ = e^{−η(|a|²+|b|²)/2} ⟨√(1−η) b|√(1−η) a⟩; the split keeps the
    // a = b case exact and the cross terms cancellation-free.
    const double damp = -0.5 * eta * (std::norm(a) + std::norm(b));
    const double t = std::sqrt(1.0 - eta);
    const Complex rest = coherent_overlap(t * a, t * b);
    if (damp < -700.0 || rest == Complex(0.0, 0.0)) return {0.0, 0.0};
    return std::exp(damp) * rest;
  };
}

BusKernel click_kernel(const ApdModel& apd) {
  auto k0 = no_click_kernel(apd);
  return [k0](Complex a, Complex b) {
    return coherent_overlap(a, b) - k0(a, b);
  };
}

BusKernel fock_kernel(int n) {
  if (n < 0) throw std::invalid_argument("fock_kernel: negative photon number");
  return [n](Complex a, Complex b) -> Complex {
    // ⟨b|n⟩⟨n|a⟩ = e^{−(|a|²+|b|²)/2} aⁿ b̄ⁿ / n!
    const double na = std::abs(a), nb = std::abs(b);
    if (n == 0) {
      const double e = -0.5 * (na * na + nb * nb);
      return e < -700.0 ? Complex(0.0, 0.0) : Complex(std::exp(e), 0.0);
    }
    if (na == 0.0 || nb == 0.0) return {0.0, 0.0};
    const double mag = -0.5 * (na * na + nb * nb) +
                       n * (std::log(na) + std::log(nb)) - std::lgamma(n + 1.0);
    if (mag < -700.0) return {0.0, 0.0};
    return std::exp(mag) * expi(n * (std::arg(a) - std::arg(b)));
  };
}

BusKernel ideal_off_kernel(double tol) {
  return [tol](Complex a, Complex b) -> Complex {
    return (std::abs(a) < tol && std::abs(b) < tol) ? Complex(1.0, 0.0)
                                                    : Complex(0.0, 0.0);
  };
}

BusKernel ideal_on_kernel(double tol) {
  return [tol](Complex a, Complex b) -> Complex {
    if (std::abs(a) < tol || std::abs(b) < tol) return {0.0, 0.0};
    return coherent_overlap(a, b);
  };
}

// ------------------------ expectation / collapse ------------------------

double kernel_expectation(const MixedState& rho, BusMode bus,
                          const BusKernel& kernel) {
  if (!rho.reg || bus >= rho.reg->bus_count())
    throw std::invalid_argument("kernel_expectation: unknown bus mode");
  double acc = 0.0;
  for (const auto& br : rho.branches) {
    Complex e(0.0, 0.0);
    const auto& terms = br.ket.terms;
    for (const auto& tj : terms) {    // bra side
      for (const auto& tk : terms) {  // ket side
        if (!(tj.dv == tk.dv)) continue;
        Complex f = std::conj(tj.coeff) * tk.coeff;
        for (std::size_t b = 0; b < tj.bus.size(); ++b) {
          if (f == Complex(0.0, 0.0)) break;
          if (static_cast<BusMode>(b) == bus)
            f *= kernel(tk.bus[b], tj.bus[b]);
          else
            f *= coherent_overlap(tk.bus[b], tj.bus[b]);
        }
        e += f;
      }
    }
    acc += br.weight * e.real();
  }
  return acc;
}

std::pair<double, MixedState> collapse_with_kernel(const MixedState& rho,
                                                   BusMode bus,
                                                   const BusKernel& kernel) {
  PatternKernel pk = [&kernel](std::span<const Complex> ket_pat,
                               std::span<const Complex> bra_pat) {
    return kernel(ket_pat[0], bra_pat[0]);
  };
  PatternRewrite to_vacuum = [](std::span<Complex> pat) {
    pat[0] = Complex(0.0, 0.0);
  };
  return reduce_bus_modes(rho, {bus}, pk, to_vacuum);
}

// ------------------------ detector front-ends ------------------------

double apd_no_click_probability(const MixedState& rho, BusMode bus,
                                const ApdModel& apd) {
  const double p = kernel_expectation(rho, bus, no_click_kernel(apd));
  return std::clamp(p, 0.0, 1.0);
}

namespace {

DetectionRecord sample_binary(const MixedState& rho, BusMode bus,
                              const BusKernel& off, const BusKernel& on,
                              Rng& rng) {
  const double p0 = std::clamp(kernel_expectation(rho, bus, off), 0.0, 1.0);
  DetectionRecord rec;
  rec.seed = rng.position();
  const bool click = rng.uniform() >= p0;
  rec.outcome = click ? 1 : 0;
  rec.true_outcome = rec.outcome;
  auto [p, post] = collapse_with_kernel(rho, bus, click ? on : off);
  rec.probability = p;
  rec.post = std::move(post);
  return rec;
}

}  // namespace

DetectionRecord measure_threshold(const MixedState& rho, BusMode bus,
                                  const ApdModel& apd, Rng& rng) {
  return sample_binary(rho, bus, no_click_kernel(apd), click_kernel(apd), rng);
}

DetectionRecord measure_threshold_ideal(const MixedState& rho, BusMode bus,
                                        Rng& rng) {
  return sample_binary(rho, bus, ideal_off_kernel(), ideal_on_kernel(), rng);
}

DetectionRecord qnd_compare(const MixedState& rho, BusMode probe, BusMode ref,
                            const ApdModel& apd, Rng& rng) {
  MixedState mixed = apply(rho, Bs50BusOp{probe, ref});
  return measure_threshold(mixed, probe, apd, rng);
}

DetectionRecord qnd_compare_ideal(const MixedState& rho, BusMode probe,
                                  BusMode ref, Rng& rng) {
  MixedState mixed = apply(rho, Bs50BusOp{probe, ref});
  return measure_threshold_ideal(mixed, probe, rng);
}

namespace {

int pnr_cutoff(const MixedState& rho, BusMode bus) {
  double mu = 0.0;
  for (const auto& br : rho.branches)
    for (const auto& t : br.ket.terms) mu = std::max(mu, std::norm(t.bus[bus]));
  return static_cast<int>(std::ceil(mu + 12.0 * std::sqrt(mu) + 30.0));
}

}  // namespace

std::vector<double> pnr_distribution(const MixedState& rho, BusMode bus,
                                     double tail_eps) {
  const int cap = pnr_cutoff(rho, bus);
  std::vector<double> p;
  double cum = 0.0;
  for (int n = 0; n <= cap; ++n) {
    p.push_back(std::max(0.0, kernel_expectation(rho, bus, fock_kernel(n))));
    cum += p.back();
    if (cum >= 1.0 - tail_eps) return p;
  }
  throw std::runtime_error("pnr_distribution: truncation failure, tail too heavy");
}

DetectionRecord measure_pnr(const MixedState& rho, BusMode bus, Rng& rng,
                            double tail_eps) {
  const std::vector<double> dist = pnr_distribution(rho, bus, tail_eps);
  DetectionRecord rec;
  rec.seed = rng.position();
  const double u = rng.uniform();
  double cum = 0.0;
  int n = static_cast<int>(dist.size()) - 1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cum += dist[i];
    if (u < cum) {
      n = static_cast<int>(i);
      break;
    }
  }
  rec.outcome = rec.true_outcome = n;
  auto [p, post] = collapse_with_kernel(rho, bus, fock_kernel(n));
  rec.probability = p;
  rec.post = std::move(post);
  return rec;
}

double qnd_pnr_signal(int n, Complex gamma, double theta, const ApdModel& apd) {
  check_eff(apd, "qnd_pnr_signal");
  if (n < 0) throw std::invalid_argument("qnd_pnr_signal: negative count");
  const Complex d = gamma * (expi(n * theta) - Complex(1.0, 0.0));
  const double x = apd.eta_d * 0.5 * std::norm(d);
  return 1.0 - std::exp(-x);
}

bool pnr_signals_distinct(Complex gamma, double theta, int n_max,
                          double min_gap, const ApdModel& apd) {
  if (n_max < 1) throw std::invalid_argument("pnr_signals_distinct: n_max < 1");
  if (n_max * theta > kPi) return false;  // outside the monotone window
  double prev = qnd_pnr_signal(0, gamma, theta, apd);
  for (int n = 1; n <= n_max; ++n) {
    const double s = qnd_pnr_signal(n, gamma, theta, apd);
    if (s - prev <= min_gap) return false;
    prev = s;
  }
  return true;
}

DetectionRecord measure_pnr_indirect(const MixedState& rho, BusMode bus,
                                     Complex probe_gamma, double theta,
                                     double sigma, const ApdModel& apd,
                                     Rng& rng) {
  if (sigma < 0.0)
    throw std::invalid_argument("measure_pnr_indirect: negative noise width");
  DetectionRecord rec = measure_pnr(rho, bus, rng);
  const int support = pnr_cutoff(rho, bus);
  if (support * theta > kPi)
    throw std::domain_error(
        "measure_pnr_indirect: readout not monotone over the support");
  const double s =
      qnd_pnr_signal(rec.true_outcome, probe_gamma, theta, apd) +
      sigma * rng.normal();
  int best = 0;
  double best_err = std::abs(s - qnd_pnr_signal(0, probe_gamma, theta, apd));
  for (int n = 1; n <= support; ++n) {
    const double err = std::abs(s - qnd_pnr_signal(n, probe_gamma, theta, apd));
    if (err < best_err) {
      best = n;
      best_err = err;
    }
  }
  rec.outcome = best;
  return rec;
}

}  // namespace qubus

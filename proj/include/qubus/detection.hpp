// detection.hpp — photodetector models and measurement back-ends.
//
// Detectors act on one bus mode at a time. Each POVM element is expressed as
// a closed-form kernel on pairs of coherent labels, K(γ_ket, γ_bra) =
// ⟨γ_bra|Π|γ_ket⟩, so probabilities are exact label-algebra sums and the
// post-measurement state on the remaining modes comes out of the shared
// reduction engine (the measured bus is consumed: reset to vacuum).
//
// Two detector idealizations coexist:
//   * POVM detectors: quantum efficiency η_D, no-click element
//     ⟨b|Π₀|a⟩ = exp(−|a|²/2 − |b|²/2 + (1−η_D) b̄ a), click = complement.
//   * label-projective ("ideal") detectors: vacuum labels and displaced
//     labels are treated as perfectly distinguishable. Valid when every
//     displaced label satisfies η_D|γ|² ≥ ln(1/ε); the caller checks that.

#pragma once

#include "qubus/hybrid_state.hpp"
#include "qubus/rng.hpp"

namespace qubus {

struct ApdModel {
  double eta_d = 1.0;  // single-photon detection efficiency in [0, 1]
};

// Smallest misidentification budget accepted by ideal-detector call sites.
inline constexpr double kHeraldEps = 1e-12;

struct DetectionRecord {
  int outcome = 0;       // threshold: 0 no-click / 1 click; counter: photon number
  int true_outcome = 0;  // actual photon number behind a noisy readout
  double probability = 0.0;
  MixedState post;  // conditional state, measured bus reset to vacuum
  SeedPath seed;    // stream position consumed for this decision
};

// ------------------------ kernels ------------------------

using BusKernel = std::function<Complex(Complex ket, Complex bra)>;

BusKernel no_click_kernel(const ApdModel& apd);          // ⟨b|Π₀|a⟩
BusKernel click_kernel(const ApdModel& apd);             // ⟨b|(1−Π₀)|a⟩
BusKernel fock_kernel(int n);                            // ⟨b|n⟩⟨n|a⟩
BusKernel ideal_off_kernel(double tol = kTolAmp);        // both labels vacuum
BusKernel ideal_on_kernel(double tol = kTolAmp);         // both labels displaced

// ⟨Π⟩ for a single-bus kernel.
double kernel_expectation(const MixedState& rho, BusMode bus,
                          const BusKernel& kernel);

// (probability, conditional state); the bus is consumed. Zero-probability
// outcomes return an empty state.
std::pair<double, MixedState> collapse_with_kernel(const MixedState& rho,
                                                   BusMode bus,
                                                   const BusKernel& kernel);

// ------------------------ detector front-ends ------------------------

// Probability that an η_D photodetector on `bus` stays silent.
double apd_no_click_probability(const MixedState& rho, BusMode bus,
                                const ApdModel& apd);

DetectionRecord measure_threshold(const MixedState& rho, BusMode bus,
                                  const ApdModel& apd, Rng& rng);
DetectionRecord measure_threshold_ideal(const MixedState& rho, BusMode bus,
                                        Rng& rng);

// Interfere `probe` against `ref` on a balanced splitter and threshold-detect
// the difference port (`probe`): outcome 1 means the labels differed. The sum
// lands in `ref` and stays live.
DetectionRecord qnd_compare(const MixedState& rho, BusMode probe, BusMode ref,
                            const ApdModel& apd, Rng& rng);
DetectionRecord qnd_compare_ideal(const MixedState& rho, BusMode probe,
                                  BusMode ref, Rng& rng);

// Photon-number distribution of `bus` up to the adaptive cutoff; the sum is
// ≥ 1 − tail_eps or the function throws (truncation failure).
std::vector<double> pnr_distribution(const MixedState& rho, BusMode bus,
                                     double tail_eps = 1e-12);

// Ideal photon-number-resolving measurement of `bus`.
DetectionRecord measure_pnr(const MixedState& rho, BusMode bus, Rng& rng,
                            double tail_eps = 1e-12);

// Expected click signal of the number-probe readout: a probe |γ⟩ picks up
// phase nθ against its reference, is interfered on a balanced splitter, and
// the difference port hits an η_D detector:
//   s(n) = 1 − exp(−η_D |γ(e^{inθ} − 1)|² / 2).
double qnd_pnr_signal(int n, Complex gamma, double theta, const ApdModel& apd);

// True when s(0..n_max) is strictly increasing with adjacent gaps > min_gap
// (requires n_max·θ ≤ π, the monotone window of the readout).
bool pnr_signals_distinct(Complex gamma, double theta, int n_max,
                          double min_gap, const ApdModel& apd);

// Indirect number measurement: the true count is drawn from the exact
// distribution, the classical readout s(n) + N(0, σ) is decoded back to the
// nearest expected signal. The conditional state follows the true count;
// `outcome` carries the decoded count, `true_outcome` the actual one.
DetectionRecord measure_pnr_indirect(const MixedState& rho, BusMode bus,
                                     Complex probe_gamma, double theta,
                                     double sigma, const ApdModel& apd,
                                     Rng& rng);

}  // namespace qubus

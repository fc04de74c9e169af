// test_detection.cpp — detector kernels, collapses and number readouts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "qubus/detection.hpp"
#include "qubus/fock_oracle.hpp"
#include "qubus/hybrid_state.hpp"
#include "qubus/rng.hpp"

using namespace qubus;

namespace {

RegistryPtr one_bus_reg() {
  auto reg = std::make_shared<Registry>();
  reg->add_dv_mode("m0");
  reg->add_bus_mode("sig");
  return reg;
}

RegistryPtr two_bus_reg() {
  auto reg = std::make_shared<Registry>();
  reg->add_dv_mode("m0");
  reg->add_bus_mode("sig");
  reg->add_bus_mode("ref");
  return reg;
}

// (|H⟩|ga⟩ + |V⟩|gb⟩)/√2 — the canonical which-branch-marked state.
MixedState marked_pair(const RegistryPtr& reg, Complex ga, Complex gb) {
  const HybridKet vac = vacuum_ket(reg);
  return as_mixed(normalized(
      set_bus(add_photon(vac, 0, Pol::H), 0, ga) +
      set_bus(add_photon(vac, 0, Pol::V), 0, gb)));
}

double poisson(double mu, int n) {
  double p = std::exp(-mu);
  for (int k = 1; k <= n; ++k) p *= mu / static_cast<double>(k);
  return p;
}

}  // namespace

TEST_CASE("silence kernel matches its closed form and sums with the click") {
  const ApdModel apd{0.73};
  const BusKernel off = no_click_kernel(apd);
  const BusKernel on = click_kernel(apd);
  Rng rng(2);
  for (int t = 0; t < 40; ++t) {
    const Complex a(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    const Complex b(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    const Complex expect = std::exp(-0.5 * std::norm(a) - 0.5 * std::norm(b) +
                                    (1.0 - apd.eta_d) * std::conj(b) * a);
    CHECK(std::abs(off(a, b) - expect) < 1e-14);
    // Π₀ + (1 − Π₀) resolve the identity on coherent pairs.
    CHECK(std::abs(off(a, b) + on(a, b) - coherent_overlap(a, b)) < 1e-14);
  }
  // Diagonal element is the textbook no-click probability.
  const Complex g(1.1, -0.6);
  CHECK(std::abs(off(g, g) - std::exp(-apd.eta_d * std::norm(g))) < 1e-14);
  CHECK(std::abs(off(Complex(0, 0), Complex(0, 0)) - 1.0) < 1e-15);
}

TEST_CASE("counting kernels resolve the identity over photon number") {
  const Complex a(0.9, 0.4), b(-0.2, 0.8);
  Complex acc(0, 0);
  for (int n = 0; n < 60; ++n) acc += fock_kernel(n)(a, b);
  CHECK(std::abs(acc - coherent_overlap(a, b)) < 1e-12);
  // ⟨b|n⟩⟨n|a⟩ against the explicit amplitude product.
  const auto amp = [](Complex g, int n) {
    Complex p(1, 0);
    for (int k = 1; k <= n; ++k) p *= g / std::sqrt(static_cast<double>(k));
    return std::exp(-0.5 * std::norm(g)) * p;
  };
  for (int n = 0; n < 6; ++n)
    CHECK(std::abs(fock_kernel(n)(a, b) - std::conj(amp(b, n)) * amp(a, n)) <
          1e-14);
}

TEST_CASE("ideal kernels act as exact vacuum/displaced projections") {
  const BusKernel off = ideal_off_kernel();
  const BusKernel on = ideal_on_kernel();
  const Complex g(0.8, 0.3), h(0.5, -0.9);
  CHECK(off(Complex(0, 0), Complex(0, 0)) == Complex(1, 0));
  CHECK(off(g, Complex(0, 0)) == Complex(0, 0));
  CHECK(off(g, h) == Complex(0, 0));
  CHECK(on(Complex(0, 0), Complex(0, 0)) == Complex(0, 0));
  CHECK(on(g, Complex(0, 0)) == Complex(0, 0));
  // Displaced-displaced keeps the exact coherent overlap, so tracing the
  // bus later still decoheres cross terms correctly.
  CHECK(std::abs(on(g, h) - coherent_overlap(g, h)) < 1e-15);
  CHECK(on(g, g) == Complex(1, 0));
}

TEST_CASE("kernel collapse reproduces the two-branch arithmetic") {
  const RegistryPtr reg = one_bus_reg();
  const Complex ga(0.0, 0.0), gb(1.4, -0.3);
  const MixedState rho = marked_pair(reg, ga, gb);
  const ApdModel apd{0.8};
  const double p_expect =
      0.5 * (std::exp(-apd.eta_d * std::norm(ga)) +
             std::exp(-apd.eta_d * std::norm(gb)));
  CHECK(std::abs(apd_no_click_probability(rho, 0, apd) - p_expect) < 1e-13);
  const auto [p, post] = collapse_with_kernel(rho, 0, no_click_kernel(apd));
  CHECK(std::abs(p - p_expect) < 1e-13);
  CHECK(std::abs(total_weight(post) - 1.0) < 1e-12);
  // Measured bus is consumed: every branch parks it in vacuum.
  for (const auto& br : post.branches)
    for (const auto& term : br.ket.terms) CHECK(std::abs(term.bus[0]) == 0.0);
  // Click + no-click probabilities are complete.
  const auto [pc, postc] = collapse_with_kernel(rho, 0, click_kernel(apd));
  CHECK(std::abs(p + pc - 1.0) < 1e-13);
}

TEST_CASE("ideal threshold readout decides vacuum versus displaced exactly") {
  const RegistryPtr reg = one_bus_reg();
  const MixedState rho = marked_pair(reg, Complex(0, 0), Complex(2.0, 0));
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  const HybridKet v = add_photon(vacuum_ket(reg), 0, Pol::V);
  int seen[2] = {0, 0};
  for (std::uint64_t s = 0; s < 40; ++s) {
    Rng rng(s);
    const DetectionRecord rec = measure_threshold_ideal(rho, 0, rng);
    REQUIRE((rec.outcome == 0 || rec.outcome == 1));
    ++seen[rec.outcome];
    CHECK(std::abs(rec.probability - 0.5) < 1e-12);  // exact branch weights
    const HybridKet& expect = rec.outcome == 0 ? h : v;
    CHECK(std::abs(fidelity(rec.post, expect) - 1.0) < 1e-12);
  }
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
  // Pure vacuum label never clicks; a lone displaced label always does.
  Rng quiet(1);
  CHECK(measure_threshold_ideal(as_mixed(set_bus(h, 0, Complex(0, 0))), 0, quiet)
            .outcome == 0);
  CHECK(measure_threshold_ideal(as_mixed(set_bus(h, 0, Complex(1.5, 0))), 0, quiet)
            .outcome == 1);
}

TEST_CASE("threshold readout with finite efficiency keeps exact statistics") {
  const RegistryPtr reg = one_bus_reg();
  const Complex gb(1.2, 0.5);
  const MixedState rho = marked_pair(reg, Complex(0, 0), gb);
  const ApdModel apd{0.6};
  const double p_off = 0.5 * (1.0 + std::exp(-apd.eta_d * std::norm(gb)));
  Rng rng(5);
  const DetectionRecord rec = measure_threshold(rho, 0, apd, rng);
  CHECK(std::abs(rec.probability - (rec.outcome == 0 ? p_off : 1.0 - p_off)) <
        1e-13);
  CHECK(std::abs(total_weight(rec.post) - 1.0) < 1e-12);
  // Deterministic replay: same seed, same record.
  Rng rng2(5);
  const DetectionRecord rep = measure_threshold(rho, 0, apd, rng2);
  CHECK(rep.outcome == rec.outcome);
  CHECK(rep.probability == rec.probability);
  CHECK(state_checksum(rep.post) == state_checksum(rec.post));
}

TEST_CASE("comparator clicks exactly when the two labels differ") {
  const RegistryPtr reg = two_bus_reg();
  const HybridKet base = add_photon(vacuum_ket(reg), 0, Pol::H);
  const Complex g(1.3, -0.4);
  Rng rng(7);
  // Equal labels: the difference port is exactly dark.
  const MixedState same =
      as_mixed(set_bus(set_bus(base, 0, g), 1, g));
  const DetectionRecord eq = qnd_compare_ideal(same, 0, 1, rng);
  CHECK(eq.outcome == 0);
  CHECK(eq.probability == 1.0);
  // The reference port keeps the sum, ready for further use.
  REQUIRE(eq.post.branches.size() == 1);
  const Complex kept = eq.post.branches[0].ket.terms[0].bus[1];
  CHECK(std::abs(kept - g * std::sqrt(2.0)) < 1e-12);
  // Separated labels: certain click.
  const MixedState diff =
      as_mixed(set_bus(set_bus(base, 0, g), 1, -g));
  const DetectionRecord ne = qnd_compare_ideal(diff, 0, 1, rng);
  CHECK(ne.outcome == 1);
  CHECK(ne.probability == 1.0);
  // POVM comparator on equal labels is silent with probability one too.
  const DetectionRecord pq = qnd_compare(same, 0, 1, ApdModel{0.9}, rng);
  CHECK(pq.outcome == 0);
  CHECK(std::abs(pq.probability - 1.0) < 1e-13);
}

TEST_CASE("number distribution of a coherent label is the photon-count law") {
  const RegistryPtr reg = one_bus_reg();
  const double mag = 1.7;
  const MixedState rho =
      as_mixed(set_bus(add_photon(vacuum_ket(reg), 0, Pol::H), 0,
                       Complex(0.0, mag)));
  const std::vector<double> dist = pnr_distribution(rho, 0);
  const double mu = mag * mag;
  double sum = 0.0;
  for (std::size_t n = 0; n < dist.size(); ++n) {
    CHECK(std::abs(dist[n] - poisson(mu, static_cast<int>(n))) < 1e-12);
    sum += dist[n];
  }
  CHECK(sum >= 1.0 - 1e-12);
  CHECK(sum <= 1.0 + 1e-12);
}

TEST_CASE("counting a sign-marked superposition heralds the photon parity") {
  // (|H⟩|iκ⟩ + |V⟩|−iκ⟩)/√2: counts are blind to the sign, but the
  // conditional photon state flips its relative phase as (−1)ⁿ.
  const RegistryPtr reg = one_bus_reg();
  const double kappa = 1.1;
  const MixedState rho =
      marked_pair(reg, Complex(0, kappa), Complex(0, -kappa));
  const std::vector<double> dist = pnr_distribution(rho, 0);
  const double mu = kappa * kappa;
  for (std::size_t n = 0; n < dist.size() && n < 12; ++n)
    CHECK(std::abs(dist[n] - poisson(mu, static_cast<int>(n))) < 1e-12);
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  const HybridKet v = add_photon(vacuum_ket(reg), 0, Pol::V);
  const double r = 1.0 / std::sqrt(2.0);
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(100 + s);
    const DetectionRecord rec = measure_pnr(rho, 0, rng);
    CHECK(rec.outcome == rec.true_outcome);
    CHECK(std::abs(rec.probability - dist[static_cast<std::size_t>(rec.outcome)]) <
          1e-12);
    const double sign = rec.outcome % 2 == 0 ? 1.0 : -1.0;
    const HybridKet expect =
        canonical(Complex(r, 0) * h + Complex(sign * r, 0) * v);
    CHECK(std::abs(fidelity(rec.post, expect) - 1.0) < 1e-12);
  }
}

TEST_CASE("probe readout signals are ordered and decode the true count") {
  const ApdModel apd{1.0};
  // Bright enough to resolve nine levels, dim enough that none saturate.
  const Complex probe(5.0, 0.0);
  const double theta = 0.05;
  CHECK(qnd_pnr_signal(0, probe, theta, apd) == 0.0);
  for (int n = 0; n < 6; ++n) {
    const double lo = qnd_pnr_signal(n, probe, theta, apd);
    const double hi = qnd_pnr_signal(n + 1, probe, theta, apd);
    CHECK(hi > lo);
    const double expect =
        1.0 - std::exp(-0.5 * apd.eta_d *
                       std::norm(probe * (std::exp(Complex(0, n * theta)) -
                                          Complex(1, 0))));
    CHECK(std::abs(lo - expect) < 1e-13);
  }
  CHECK(pnr_signals_distinct(probe, theta, 8, 1e-3, apd));
  // A dead probe phase makes every signal identical: not distinct.
  CHECK_FALSE(pnr_signals_distinct(probe, 0.0, 8, 1e-3, apd));

  const RegistryPtr reg = one_bus_reg();
  const MixedState rho = marked_pair(reg, Complex(0, 1.1), Complex(0, -1.1));
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const DetectionRecord rec =
        measure_pnr_indirect(rho, 0, probe, theta, 0.0, apd, rng);
    CHECK(rec.outcome == rec.true_outcome);  // noiseless readout decodes exactly
  }
}

TEST_CASE("detector statistics agree with explicit number sums") {
  const RegistryPtr reg = one_bus_reg();
  Rng rng(13);
  const auto rand_state = [&]() {
    const HybridKet vac = vacuum_ket(reg);
    const Complex g1(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    const Complex g2(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    return normalized(canonical(
        Complex(0.4 + rng.uniform(), 0) * set_bus(add_photon(vac, 0, Pol::H), 0, g1) +
        Complex(0.4 + rng.uniform(), 0) * set_bus(add_photon(vac, 0, Pol::V), 0, g2)));
  };
  for (int t = 0; t < 8; ++t) {
    const HybridKet x = rand_state();
    const FockSpace space = build_space(reg, {x}, {}, {0}, 44);
    const Vector v = encode(space, x);
    const ApdModel apd{0.7};
    CHECK(std::abs(apd_no_click_probability(as_mixed(x), 0, apd) -
                   oracle_no_click_prob(space, 0, apd, v)) < 1e-10);
    const std::vector<double> lib = pnr_distribution(as_mixed(x), 0);
    const std::vector<double> orc =
        oracle_pnr_probs(space, 0, v, static_cast<int>(lib.size()) - 1);
    for (std::size_t n = 0; n < lib.size(); ++n)
      CHECK(std::abs(lib[n] - orc[n]) < 1e-10);
  }
}

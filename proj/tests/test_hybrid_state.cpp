// test_hybrid_state.cpp — hybrid ket algebra, overlaps, reductions.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "qubus/fock_oracle.hpp"
#include "qubus/hybrid_state.hpp"
#include "qubus/rng.hpp"

using namespace qubus;

namespace {

RegistryPtr pair_reg() {
  auto reg = std::make_shared<Registry>();
  reg->add_dv_mode("left");
  reg->add_dv_mode("right");
  reg->add_bus_mode("bus0");
  reg->add_bus_mode("bus1");
  return reg;
}

Complex rand_amp(Rng& rng, double scale) {
  return {scale * (2.0 * rng.uniform() - 1.0),
          scale * (2.0 * rng.uniform() - 1.0)};
}

HybridKet rand_ket(const RegistryPtr& reg, Rng& rng) {
  const HybridKet vac = vacuum_ket(reg);
  HybridKet a = add_photon(vac, 0, Pol::H);
  HybridKet b = add_photon(vac, 0, Pol::V);
  for (BusMode m = 0; m < reg->bus_count(); ++m) {
    a = set_bus(std::move(a), m, rand_amp(rng, 1.0));
    b = set_bus(std::move(b), m, rand_amp(rng, 1.0));
  }
  const Complex ca(0.4 + rng.uniform(), rng.uniform() - 0.5);
  const Complex cb(0.4 + rng.uniform(), rng.uniform() - 0.5);
  return normalized(canonical(ca * std::move(a) + cb * std::move(b)));
}

}  // namespace

TEST_CASE("coherent overlap matches the closed form and its exact edges") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const Complex a = rand_amp(rng, 2.0);
    const Complex b = rand_amp(rng, 2.0);
    const Complex expect =
        std::exp(-0.5 * std::norm(a) - 0.5 * std::norm(b) + std::conj(b) * a);
    CHECK(std::abs(coherent_overlap(a, b) - expect) < 1e-14);
  }
  // Equal labels give exactly one, not one up to rounding.
  CHECK(coherent_overlap(Complex(1.3, -0.7), Complex(1.3, -0.7)) ==
        Complex(1.0, 0.0));
  // Separations past the exponent floor give exactly zero.
  CHECK(coherent_overlap(Complex(0.0, 0.0), Complex(60.0, 0.0)) ==
        Complex(0.0, 0.0));
  // |⟨b|a⟩| depends only on the separation |a−b|.
  const Complex s(0.4, 0.9);
  CHECK(std::abs(std::abs(coherent_overlap(s, Complex(0, 0))) -
                 std::exp(-0.5 * std::norm(s))) < 1e-15);
}

TEST_CASE("construction yields normalized single-term kets") {
  const RegistryPtr reg = pair_reg();
  HybridKet x = vacuum_ket(reg);
  CHECK(x.terms.size() == 1);
  CHECK(std::abs(inner(x, x) - Complex(1, 0)) < 1e-15);
  x = add_photon(std::move(x), 0, Pol::H);
  x = set_bus(std::move(x), 1, Complex(0.8, -0.2));
  CHECK(std::abs(inner(x, x) - Complex(1, 0)) < 1e-15);
  CHECK(x.terms[0].dv.occupies(0));
  CHECK_FALSE(x.terms[0].dv.occupies(1));
  CHECK_THROWS_AS(add_photon(x, 0, Pol::V), std::invalid_argument);
}

TEST_CASE("diagonal-basis photons expand onto H/V with equal weight") {
  const RegistryPtr reg = pair_reg();
  const HybridKet plus = add_photon(vacuum_ket(reg), 0, DiagPol::Plus);
  const HybridKet minus = add_photon(vacuum_ket(reg), 0, DiagPol::Minus);
  CHECK(plus.terms.size() == 2);
  CHECK(std::abs(inner(plus, plus) - Complex(1, 0)) < 1e-15);
  CHECK(std::abs(inner(plus, minus)) < 1e-15);
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  CHECK(std::abs(inner(h, plus) - Complex(1.0 / std::sqrt(2.0), 0)) < 1e-15);
}

TEST_CASE("inner products factor into photon orthogonality and bus overlaps") {
  const RegistryPtr reg = pair_reg();
  const HybridKet vac = vacuum_ket(reg);
  const HybridKet h = add_photon(vac, 0, Pol::H);
  const HybridKet v = add_photon(vac, 0, Pol::V);
  CHECK(inner(h, v) == Complex(0, 0));

  const Complex ga(0.3, 0.2), gb(-0.1, 0.5);
  const HybridKet x = set_bus(h, 0, ga);
  const HybridKet y = set_bus(h, 0, gb);
  CHECK(std::abs(inner(y, x) - coherent_overlap(ga, gb)) < 1e-15);
  CHECK(std::abs(inner(x, y) - std::conj(inner(y, x))) < 1e-15);

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const HybridKet a = rand_ket(reg, rng);
    const HybridKet b = rand_ket(reg, rng);
    CHECK(std::abs(inner(a, b) - std::conj(inner(b, a))) < 1e-13);
  }
}

TEST_CASE("canonical merges duplicates, prunes dust and fixes term order") {
  const RegistryPtr reg = pair_reg();
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  const HybridKet v = add_photon(vacuum_ket(reg), 0, Pol::V);
  HybridKet x = canonical(Complex(0.5, 0) * h + Complex(0.5, 0) * h +
                          Complex(1e-15, 0) * v);
  CHECK(x.terms.size() == 1);
  CHECK(std::abs(x.terms[0].coeff - Complex(1.0, 0)) < 1e-14);

  // Order is structural, not insertion order.
  const HybridKet ab = canonical(Complex(0.6, 0) * v + Complex(0.8, 0) * h);
  const HybridKet ba = canonical(Complex(0.8, 0) * h + Complex(0.6, 0) * v);
  REQUIRE(ab.terms.size() == 2);
  CHECK(ab.terms[0].dv == ba.terms[0].dv);
  CHECK(ab.terms[1].dv == ba.terms[1].dv);
  CHECK(state_checksum(normalized(ab)) == state_checksum(normalized(ba)));

  CHECK_THROWS_AS(normalized(Complex(0, 0) * h), std::domain_error);
  CHECK_THROWS_AS(canonical(set_bus(h, 0, Complex(2e6, 0))), std::domain_error);
}

TEST_CASE("subtraction of equal kets cancels exactly") {
  const RegistryPtr reg = pair_reg();
  Rng rng(7);
  const HybridKet a = rand_ket(reg, rng);
  const HybridKet diff = canonical(a - a);
  CHECK(diff.terms.empty());
}

TEST_CASE("photon-subspace weight and projection agree and renormalize") {
  const RegistryPtr reg = pair_reg();
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  const HybridKet v = add_photon(vacuum_ket(reg), 0, Pol::V);
  const MixedState rho =
      as_mixed(normalized(Complex(0.6, 0) * h + Complex(0.8, 0) * v));
  const auto is_h = [](const DvLabel& d) {
    const Photon* p = d.find(0);
    return p != nullptr && p->pol == Pol::H;
  };
  CHECK(std::abs(dv_weight(rho, is_h) - 0.36) < 1e-14);
  const auto [p, post] = project_dv(rho, is_h);
  CHECK(std::abs(p - 0.36) < 1e-14);
  REQUIRE(post.branches.size() == 1);
  CHECK(std::abs(fidelity(post, h) - 1.0) < 1e-14);
  CHECK(std::abs(total_weight(post) - 1.0) < 1e-14);

  const auto never = [](const DvLabel&) { return false; };
  const auto [pz, empty] = project_dv(rho, never);
  CHECK(pz == 0.0);
  CHECK(empty.branches.empty());
}

TEST_CASE("tracing a bus out of a correlated ket yields the Gram mixture") {
  // (|H⟩|γa⟩ + |V⟩|γb⟩)/√2 reduced over the bus mixes with weights
  // (1 ± |⟨γb|γa⟩|)/2 — the eigenvalues of the 2×2 Gram matrix.
  const RegistryPtr reg = pair_reg();
  const Complex ga(0.3, 0.2), gb(-0.7, 0.5);
  const HybridKet x = normalized(
      set_bus(add_photon(vacuum_ket(reg), 0, Pol::H), 0, ga) +
      set_bus(add_photon(vacuum_ket(reg), 0, Pol::V), 0, gb));
  const MixedState red = trace_out_bus(x, {0});
  REQUIRE(red.branches.size() == 2);
  CHECK(std::abs(total_weight(red) - 1.0) < 1e-12);
  const double s = std::abs(coherent_overlap(ga, gb));
  const double w0 = std::max(red.branches[0].weight, red.branches[1].weight);
  const double w1 = std::min(red.branches[0].weight, red.branches[1].weight);
  CHECK(std::abs(w0 - 0.5 * (1.0 + s)) < 1e-12);
  CHECK(std::abs(w1 - 0.5 * (1.0 - s)) < 1e-12);
  // Traced buses are parked in vacuum.
  for (const auto& br : red.branches)
    for (const auto& term : br.ket.terms)
      CHECK(std::abs(term.bus[0]) == 0.0);
}

TEST_CASE("tracing an uncorrelated bus leaves a pure state") {
  const RegistryPtr reg = pair_reg();
  Rng rng(19);
  const HybridKet base = rand_ket(reg, rng);
  // Same label on bus 1 in every term → bus 1 factors out.
  HybridKet x = base;
  for (auto& term : x.terms) term.bus[1] = Complex(0.4, -0.9);
  x = normalized(canonical(std::move(x)));
  const MixedState red = trace_out_bus(x, {1});
  REQUIRE(red.branches.size() == 1);
  CHECK(std::abs(red.branches[0].weight - 1.0) < 1e-12);
}

TEST_CASE("merging equivalent branches collapses the mixture") {
  const RegistryPtr reg = pair_reg();
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  MixedState rho;
  rho.reg = reg;
  rho.branches.push_back({0.5, h});
  rho.branches.push_back({0.5, h});
  const MixedState merged = merge_branches(rho);
  CHECK(merged.branches.size() == 1);
  CHECK(std::abs(merged.branches[0].weight - 1.0) < 1e-14);
}

TEST_CASE("mixed fidelity averages branch overlaps with the target") {
  const RegistryPtr reg = pair_reg();
  const HybridKet h = add_photon(vacuum_ket(reg), 0, Pol::H);
  const HybridKet v = add_photon(vacuum_ket(reg), 0, Pol::V);
  MixedState rho;
  rho.reg = reg;
  rho.branches.push_back({0.75, h});
  rho.branches.push_back({0.25, v});
  CHECK(std::abs(fidelity(rho, h) - 0.75) < 1e-14);
  CHECK(std::abs(pure_fidelity(h, v)) < 1e-15);
  CHECK(std::abs(pure_fidelity(h, h) - 1.0) < 1e-15);
}

TEST_CASE("checksums are stable across runs and sensitive to labels") {
  const RegistryPtr reg = pair_reg();
  Rng a(5), b(5), c(6);
  CHECK(state_checksum(rand_ket(reg, a)) == state_checksum(rand_ket(reg, b)));
  Rng d(5);
  CHECK(state_checksum(rand_ket(reg, d)) != state_checksum(rand_ket(reg, c)));
  const HybridKet base = add_photon(vacuum_ket(reg), 0, Pol::H);
  CHECK(state_checksum(set_bus(base, 0, Complex(0.1, 0))) !=
        state_checksum(set_bus(base, 0, Complex(0.1000001, 0))));
}

TEST_CASE("rng streams are deterministic, bounded and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  // Substreams do not advance the parent and differ from it.
  Rng parent(9);
  const Rng child = parent.substream(0);
  Rng parent2(9);
  CHECK(parent.uniform() == parent2.uniform());
  Rng child2 = parent2.substream(0);
  Rng child1 = child;
  CHECK(child1.uniform() == child2.uniform());
  CHECK(Rng(9).uniform() != Rng(10).uniform());
}

TEST_CASE("label-side overlaps agree with explicit number-basis sums") {
  const RegistryPtr reg = pair_reg();
  Rng rng(23);
  for (int t = 0; t < 10; ++t) {
    const HybridKet a = rand_ket(reg, rng);
    const HybridKet b = rand_ket(reg, rng);
    const FockSpace space = build_space(reg, {a, b}, {}, {0, 1}, 42);
    const Complex lib = inner(a, b);
    const Complex orc = encode(space, a).dot(encode(space, b));
    CHECK(std::abs(lib - orc) < 1e-10);
  }
  Rng rng2(29);
  for (int t = 0; t < 30; ++t) {
    const Complex a = rand_amp(rng2, 2.0);
    const Complex b = rand_amp(rng2, 2.0);
    CHECK(std::abs(coherent_overlap(a, b) - oracle_overlap(48, a, b)) < 1e-10);
  }
}

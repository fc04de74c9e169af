// test_fock_oracle.cpp — number-basis reference engine sanity.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "qubus/detection.hpp"
#include "qubus/elements.hpp"
#include "qubus/fock_oracle.hpp"
#include "qubus/hybrid_state.hpp"
#include "qubus/rng.hpp"

using namespace qubus;

namespace {

RegistryPtr small_reg(int dv, int buses) {
  auto reg = std::make_shared<Registry>();
  for (int i = 0; i < dv; ++i) reg->add_dv_mode("m" + std::to_string(i));
  for (int i = 0; i < buses; ++i) reg->add_bus_mode("b" + std::to_string(i));
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

TEST_CASE("truncated overlaps converge to the closed form") {
  Rng rng(2);
  for (int t = 0; t < 25; ++t) {
    const Complex a = rand_amp(rng, 2.0);
    const Complex b = rand_amp(rng, 2.0);
    CHECK(std::abs(oracle_overlap(48, a, b) - coherent_overlap(a, b)) < 1e-10);
  }
  // A short cutoff is refused outright rather than silently wrong.
  const Complex big(2.0, 0.0);
  CHECK_THROWS_AS(oracle_overlap(3, big, -big), std::domain_error);
}

TEST_CASE("cutoff policy grows with the label and bounds the residual") {
  CHECK(default_cutoff(0.5) == 40);
  CHECK(default_cutoff(2.0) >= 44);
  CHECK(default_cutoff(4.0) > default_cutoff(2.0));
  // Residual of |γ|² Poisson mass above the cutoff stays tiny.
  const double mag = 3.0;
  const int cut = default_cutoff(mag);
  double mass = std::exp(-mag * mag);
  double term = mass;
  for (int n = 1; n <= cut; ++n) {
    term *= mag * mag / static_cast<double>(n);
    mass += term;
  }
  CHECK(1.0 - mass < 1e-12);
}

TEST_CASE("encoding normalized kets gives unit vectors") {
  const RegistryPtr reg = small_reg(1, 2);
  Rng rng(5);
  for (int t = 0; t < 8; ++t) {
    const HybridKet x = rand_ket(reg, rng);
    const FockSpace space = build_space(reg, {x}, {}, {0, 1}, 44);
    CHECK(std::abs(encode(space, x).norm() - 1.0) < 1e-10);
  }
}

TEST_CASE("encoding rejects labels whose truncation residual is visible") {
  const RegistryPtr reg = small_reg(1, 1);
  const HybridKet hot =
      set_bus(add_photon(vacuum_ket(reg), 0, Pol::H), 0, Complex(5.0, 0.0));
  const FockSpace space = build_space(reg, {hot}, {}, {0}, 8);
  CHECK_THROWS(encode(space, hot));
}

TEST_CASE("element matrices are unitary on the encoded space") {
  const RegistryPtr reg = small_reg(3, 2);
  const std::vector<ElementOp> ops = {
      PbsOp{0, PbsOp::kNone, 1, 2}, HwpOp{0, 0.4},   Bs50DvOp{0, 1},
      Bs50BusOp{0, 1},              PhaseOp{1, 0.9}, XpmOp{0, 0, 0.5},
  };
  Rng rng(7);
  for (int t = 0; t < 5; ++t) {
    const HybridKet x = rand_ket(reg, rng);
    const FockSpace space = build_space(reg, {x}, ops, {0, 1}, 44);
    Vector v = encode(space, x);
    for (const ElementOp& op : ops) {
      v = oracle_apply(space, op, v);
      CHECK(std::abs(v.norm() - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("kraus branches of the loss channel carry the full trace") {
  const RegistryPtr reg = small_reg(1, 2);
  Rng rng(11);
  for (int t = 0; t < 5; ++t) {
    const HybridKet x = rand_ket(reg, rng);
    const FockSpace space = build_space(reg, {x}, {}, {0, 1}, 44);
    const Vector v = encode(space, x);
    for (const double eta : {0.3, 0.85}) {
      double trace = 0.0;
      for (const Vector& k : oracle_damp(space, {0, 1}, eta, v))
        trace += k.squaredNorm();
      CHECK(std::abs(trace - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("count distributions and projections resolve the identity") {
  const RegistryPtr reg = small_reg(1, 1);
  Rng rng(13);
  for (int t = 0; t < 5; ++t) {
    const HybridKet x = rand_ket(reg, rng);
    const FockSpace space = build_space(reg, {x}, {}, {0}, 44);
    const Vector v = encode(space, x);
    const std::vector<double> probs = oracle_pnr_probs(space, 0, v, 44);
    double sum = 0.0;
    for (const double p : probs) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-10);
    double proj_sum = 0.0;
    for (int n = 0; n <= 10; ++n) {
      const Vector proj = oracle_project_pnr(space, 0, n, v);
      CHECK(std::abs(proj.squaredNorm() -
                     probs[static_cast<std::size_t>(n)]) < 1e-12);
      proj_sum += proj.squaredNorm();
    }
    CHECK(proj_sum <= 1.0 + 1e-12);
  }
}

TEST_CASE("reduced expectations match tracing the bus out on the label side") {
  const RegistryPtr reg = small_reg(1, 1);
  Rng rng(17);
  for (int t = 0; t < 5; ++t) {
    const HybridKet x = rand_ket(reg, rng);
    // Probe living on the photon side only (measured bus in vacuum).
    HybridKet probe =
        trace_out_bus(rand_ket(reg, rng), {0}).branches.front().ket;
    const FockSpace space = build_space(reg, {x, probe}, {}, {0}, 44);
    const Vector v = encode(space, x);
    const Vector pv = encode(space, probe);
    // All-ones weights: Π = identity, so this is ⟨probe|Tr_bus ρ|probe⟩.
    const std::vector<double> ones(static_cast<std::size_t>(space.cutoff) + 1,
                                   1.0);
    const double orc = oracle_reduced_expectation(space, 0, ones, v, pv);
    const MixedState red = trace_out_bus(x, {0});
    double lib = 0.0;
    for (const auto& br : red.branches)
      lib += br.weight * std::norm(inner(probe, br.ket));
    CHECK(std::abs(orc - lib) < 1e-10);
  }
}

TEST_CASE("no-click statistics agree between kernel and number sum") {
  const RegistryPtr reg = small_reg(1, 1);
  Rng rng(19);
  for (int t = 0; t < 5; ++t) {
    const HybridKet x = rand_ket(reg, rng);
    const FockSpace space = build_space(reg, {x}, {}, {0}, 44);
    const Vector v = encode(space, x);
    for (const double eff : {0.5, 1.0}) {
      const ApdModel apd{eff};
      CHECK(std::abs(apd_no_click_probability(as_mixed(x), 0, apd) -
                     oracle_no_click_prob(space, 0, apd, v)) < 1e-10);
    }
  }
}

TEST_CASE("space construction is closed under the op list") {
  // Routing ops move photons to new configurations; the basis must follow.
  const RegistryPtr reg = small_reg(3, 1);
  const std::vector<ElementOp> ops = {PbsOp{0, PbsOp::kNone, 1, 2},
                                      Bs50DvOp{1, 2}};
  const HybridKet x = set_bus(add_photon(vacuum_ket(reg), 0, Pol::H), 0,
                              Complex(0.7, 0.2));
  const FockSpace space = build_space(reg, {x}, ops, {0}, 40);
  Vector v = encode(space, x);
  for (const ElementOp& op : ops) v = oracle_apply(space, op, v);
  CHECK(std::abs(v.norm() - 1.0) < 1e-10);
  CHECK(space.dv_basis.size() >= 3);  // start, two route targets at least
}

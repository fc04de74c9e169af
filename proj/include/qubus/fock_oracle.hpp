// fock_oracle.hpp — truncated number-basis re-derivation of the label algebra.
//
// Everything here rebuilds the element maps, the loss channel and the
// detector POVMs directly on number-state amplitudes — no coherent-label
// shortcuts, photon routing re-derived from the optical definitions — so the
// fast label algebra can be cross-checked on small instances (at most two
// bus modes, labels |γ| ≲ 2) to tight tolerance. Keep instances small: the
// state dimension is dv_count · (cutoff+1)^buses.

#pragma once

#include "qubus/detection.hpp"
#include "qubus/elements.hpp"
#include "qubus/hybrid_state.hpp"

namespace qubus {

struct FockSpace {
  RegistryPtr reg;
  std::vector<DvLabel> dv_basis;  // ordered photon configurations
  std::vector<BusMode> buses;     // represented buses (≤ 2); others stay vacuum
  int cutoff = 40;                // highest photon number kept per bus

  Eigen::Index dim() const;
  Eigen::Index dv_index(const DvLabel& dv) const;  // throws when absent
  int bus_position(BusMode bus) const;             // throws when absent
  // Flat index of (photon configuration, per-bus counts).
  Eigen::Index index(Eigen::Index dv, std::span<const int> counts) const;
};

// max(40, ⌈|γ|² + 10|γ| + 20⌉): keeps the truncation residual of every
// coherent state with |label| ≤ max_abs_label far below 1e-12.
int default_cutoff(double max_abs_label);

// Space whose photon-configuration basis is closed under the listed ops,
// seeded with the configurations appearing in `seeds`.
FockSpace build_space(const RegistryPtr& reg,
                      const std::vector<HybridKet>& seeds,
                      const std::vector<ElementOp>& ops,
                      const std::vector<BusMode>& buses, int cutoff);

// Number-basis amplitudes of a hybrid ket. Throws when a label's truncation
// residual reaches 1e-12 or an unrepresented bus is driven.
Vector encode(const FockSpace& space, const HybridKet& x);

// Truncated ⟨b|a⟩ via explicit amplitude sums.
Complex oracle_overlap(int cutoff, Complex a, Complex b);

// Unitary element action on encoded amplitudes.
Vector oracle_apply(const FockSpace& space, const ElementOp& op, const Vector& v);

// Loss channel on one bus as explicit Kraus branches (unnormalized pure
// vectors; their squared norms sum to ‖v‖²). Branches lighter than
// prune_eps are dropped.
std::vector<Vector> oracle_damp(const FockSpace& space, BusMode bus, double eta,
                                const Vector& v, double prune_eps = 1e-18);
std::vector<Vector> oracle_damp(const FockSpace& space,
                                const std::vector<BusMode>& modes, double eta,
                                const Vector& v, double prune_eps = 1e-18);

// ⟨probe|ρ|probe⟩ for ρ = Σ_k |ψ_k⟩⟨ψ_k| given as branches.
double branches_expectation(const std::vector<Vector>& branches,
                            const Vector& probe);

// Detector statistics evaluated by explicit number sums.
double oracle_no_click_prob(const FockSpace& space, BusMode bus,
                            const ApdModel& apd, const Vector& v);
std::vector<double> oracle_pnr_probs(const FockSpace& space, BusMode bus,
                                     const Vector& v, int n_max);

// Unnormalized conditional vector after counting exactly n photons on `bus`;
// the measured bus is reset to vacuum (matching the label-side convention).
Vector oracle_project_pnr(const FockSpace& space, BusMode bus, int n,
                          const Vector& v);

// ⟨probe| Tr_bus(Π ρ) |probe⟩ for a photon-number-diagonal POVM element
// Π = Σ_n w_n |n⟩⟨n| on `bus` and ρ = |v⟩⟨v|. `probe` must not drive `bus`.
double oracle_reduced_expectation(const FockSpace& space, BusMode bus,
                                  std::span<const double> weights,
                                  const Vector& v, const Vector& probe);

}  // namespace qubus

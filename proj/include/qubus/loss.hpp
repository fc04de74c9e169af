// loss.hpp — amplitude-damping (photon loss) channel and its closed forms.
//
// Transmission with power transmittance η maps a coherent dyad to
//
//   |γ_j⟩⟨γ_k| → ⟨√(1−η) γ_k | √(1−η) γ_j⟩ · |√η γ_j⟩⟨√η γ_k| ,
//
// i.e. labels shrink by √η and cross terms pick up the overlap of the lost
// fields. The channel output is rebuilt as a proper mixture through the
// shared reduction engine. Closed-form success/fidelity laws of the
// protocol's parity gate under loss live here too.

#pragma once

#include "qubus/hybrid_state.hpp"

namespace qubus {

struct ChannelParams {
  double eta = 1.0;  // power transmittance in (0, 1]

  // η = e^{−γ·Δt} for a rate-time description of the same line.
  static ChannelParams from_rate(double gamma, double dt);
};

double eta_from_rate(double gamma, double dt);

// Apply loss with transmittance `eta` to the listed bus modes (same η each).
MixedState damp(const MixedState& rho, const std::vector<BusMode>& modes,
                double eta);
MixedState damp(const HybridKet& x, const std::vector<BusMode>& modes,
                double eta);

// |ξ|² = exp(−(1−η)|α e^{iθ} − α|²): the surviving coherence between the two
// bus label patterns of the parity gate after loss η.
double xi_squared(double alpha, double theta, double eta);

// Parity-gate output fidelity under loss: F = (1 + |ξ|²)/2.
double fidelity_after_loss(double alpha, double theta, double eta);

// Photon-counting backend success law: P = 1 − (2F−1)^{2η/(1−η)},
// the complement of the vacuum-error probability at operating fidelity F.
double success_pnr(double fidelity_target, double eta);

// Unambiguous-discrimination backend success law:
// P = ½(1 − (2F−1)^{η/(1−η)}).
double success_usd(double fidelity_target, double eta);

// Transmittance required to reach success P at fidelity F (inverts
// success_pnr in η; the law is strictly increasing in η).
double eta_for_success(double fidelity_target, double success_target);

// Bus-pair frame change that turns the parity-gate label patterns into a
// vacuum-vs-displaced pair: (a, b) → ((a−b)/√2, (a+b)/√2), and its inverse.
HybridKet to_cat_frame(const HybridKet& x, BusMode a, BusMode b);
HybridKet from_cat_frame(const HybridKet& x, BusMode a, BusMode b);

}  // namespace qubus

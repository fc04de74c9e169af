// hybrid_state.hpp — hybrid photon ⊗ coherent-bus state algebra.
//
// A pure state is a finite sum of terms
//
//     c · |photons⟩ ⊗ |γ_1⟩|γ_2⟩…|γ_B⟩ ,
//
// where |photons⟩ places at most one polarized photon (H or V) in each
// spatial mode and every bus mode of the registry carries exactly one
// coherent label per term. Coherent states are never expanded in the number
// basis here; every inner product reduces to the closed-form overlap
//
//     ⟨b|a⟩ = exp(−|a|²/2 − |b|²/2 + b̄·a) ,
//
// so the algebra stays exact for arbitrarily large label magnitudes. Mixed
// states are weighted lists of pure branches. Reduction (partial trace,
// measurement collapse, loss) goes through a Gram-matrix eigendecomposition
// that re-expresses the reduced operator as a proper mixture of pure kets.

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qubus/registry.hpp"

namespace qubus {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr double kTolAmp = 1e-9;   // label merge / term pruning tolerance
inline constexpr double kMaxAmp = 1e6;    // largest representable label magnitude
inline constexpr double kTolNorm = 1e-12; // norm / trace / weight budget
inline constexpr double kWeightFloor = 1e-14;  // mixture branches below are dropped

enum class Pol : std::uint8_t { H, V };
// Diagonal-basis sugar: |±⟩ = (|H⟩ ± |V⟩)/√2. Expanded on construction;
// canonical storage is always H/V.
enum class DiagPol : std::uint8_t { Plus, Minus };

inline char pol_char(Pol p) { return p == Pol::H ? 'H' : 'V'; }

struct Photon {
  DvMode mode;
  Pol pol;
  friend bool operator==(const Photon&, const Photon&) = default;
};

// Photon configuration of one term: sorted by mode, at most one photon per
// mode. Empty label = no photons anywhere.
struct DvLabel {
  std::vector<Photon> photons;

  bool occupies(DvMode m) const {
    for (const auto& p : photons)
      if (p.mode == m) return true;
    return false;
  }
  // nullptr when the mode is empty.
  const Photon* find(DvMode m) const {
    for (const auto& p : photons)
      if (p.mode == m) return &p;
    return nullptr;
  }

  friend bool operator==(const DvLabel&, const DvLabel&) = default;
};

// Strict total order for canonical term sorting.
bool dv_less(const DvLabel& a, const DvLabel& b);

struct HybridTerm {
  Complex coeff;
  DvLabel dv;
  std::vector<Complex> bus;  // one label per registry bus mode
};

struct HybridKet {
  RegistryPtr reg;
  std::vector<HybridTerm> terms;
};

struct MixedState {
  struct Branch {
    double weight;
    HybridKet ket;  // normalized
  };
  RegistryPtr reg;
  std::vector<Branch> branches;
};

// ------------------------ construction ------------------------

// Single term, coefficient 1, no photons, every bus in vacuum.
HybridKet vacuum_ket(RegistryPtr reg);

// Place a photon in an empty spatial mode of every term.
HybridKet add_photon(HybridKet x, DvMode mode, Pol pol);
// Diagonal polarizations expand to (… H … ± … V …)/√2.
HybridKet add_photon(HybridKet x, DvMode mode, DiagPol pol);

// Replace the vacuum label of a bus mode by `amp` in every term.
// Errors if any term already drives that bus.
HybridKet set_bus(HybridKet x, BusMode bus, Complex amp);

// Wrap a normalized ket as a single-branch mixed state.
MixedState as_mixed(HybridKet x);

// ------------------------ ket arithmetic ------------------------

HybridKet operator*(Complex c, HybridKet x);
HybridKet operator+(HybridKet x, const HybridKet& y);
HybridKet operator-(HybridKet x, const HybridKet& y);

// ------------------------ scalar ops ------------------------

// ⟨b|a⟩ for coherent labels. The real exponent is evaluated as −|a−b|²/2
// (cancellation-free); exponents below −700 underflow to exactly 0.
Complex coherent_overlap(Complex a, Complex b);

// ⟨x|y⟩ over all terms; photon labels are orthonormal, bus labels overlap.
Complex inner(const HybridKet& x, const HybridKet& y);

double norm(const HybridKet& x);  // sqrt(⟨x|x⟩)

// Sort terms, merge terms whose photon labels match exactly and whose bus
// labels agree within `tol` per mode (coefficients summed), drop terms with
// |coeff| < tol. Errors on non-finite or > kMaxAmp labels.
HybridKet canonical(HybridKet x, double tol = kTolAmp);

// x / ‖x‖; errors when ‖x‖ < kTolNorm.
HybridKet normalized(HybridKet x);

// |⟨x̂|ŷ⟩|² of the normalized kets.
double pure_fidelity(const HybridKet& x, const HybridKet& y);
// sqrt(1 − |⟨x̂|ŷ⟩|²): 0 iff equal up to global phase.
double pure_distance(const HybridKet& x, const HybridKet& y);

// Σ_m w_m |⟨target|v_m⟩|². `target` must be normalized within 1e-9.
double fidelity(const MixedState& rho, const HybridKet& target);

double total_weight(const MixedState& rho);

// Total weight of the projection onto photon configurations selected by
// `pred` (a photon-label subspace measurement).
double dv_weight(const MixedState& rho,
                 const std::function<bool(const DvLabel&)>& pred);

// Project onto the photon-label subspace selected by `pred` and renormalize:
// (outcome probability, conditional state). Zero-probability outcomes return
// an empty state.
std::pair<double, MixedState> project_dv(
    const MixedState& rho, const std::function<bool(const DvLabel&)>& pred);

// ------------------------ mixture machinery ------------------------

// Given component kets r_j and a Hermitian PSD coefficient matrix R with
// ρ = Σ_jk R_jk |r_j⟩⟨r_k|, return ρ as a mixture of orthonormal pure kets:
// eigendecompose the Gram matrix G_jk = ⟨r_j|r_k⟩, orthonormalize the span,
// diagonalize ρ there. Branch weights sum to tr ρ; branches lighter than
// `weight_floor` are dropped. Branches come back sorted heaviest first.
std::vector<std::pair<double, HybridKet>> mixture_from_components(
    const std::vector<HybridKet>& parts, const Matrix& coeffs,
    double weight_floor = kWeightFloor);

// Kernel K(ket_pattern, bra_pattern) acting on the labels of the reduced bus
// modes, and a rewrite giving the labels those modes keep afterwards.
using PatternKernel =
    std::function<Complex(std::span<const Complex>, std::span<const Complex>)>;
using PatternRewrite = std::function<void(std::span<Complex>)>;

// Shared reduction engine: group terms by their label pattern on `modes`,
// weight pattern pairs by `kernel`, rewrite the kept labels, and rebuild the
// result as a mixture. Returns (total weight, normalized mixture). The
// weight is tr(K ρ): 1 for a trace-preserving kernel, the outcome
// probability for a POVM kernel.
std::pair<double, MixedState> reduce_bus_modes(const MixedState& rho,
                                               const std::vector<BusMode>& modes,
                                               const PatternKernel& kernel,
                                               const PatternRewrite& rewrite);

// Partial trace over `modes`: discards those beams. The traced modes remain
// in the registry and are reset to vacuum labels (a vacuum factor is
// inner-product-neutral, so downstream algebra sees exactly the reduced
// operator). Trace is preserved within kTolNorm.
MixedState trace_out_bus(const MixedState& rho, const std::vector<BusMode>& modes);
MixedState trace_out_bus(const HybridKet& x, const std::vector<BusMode>& modes);

// Combine branches whose kets agree up to a global phase.
MixedState merge_branches(MixedState rho, double tol = 1e-12);

// ------------------------ diagnostics ------------------------

// Checksum of the canonical form, amplitudes quantized at 1e-12; stable
// across runs and platforms with IEEE doubles.
std::uint64_t state_checksum(const HybridKet& x);
std::uint64_t state_checksum(const MixedState& rho);

// Throws std::invalid_argument when structural invariants are violated
// (registry mismatch, bus vector length, duplicate photon modes, unsorted
// photons, non-finite labels). Used by tests and at API boundaries.
void validate(const HybridKet& x);
void validate(const MixedState& rho);

}  // namespace qubus

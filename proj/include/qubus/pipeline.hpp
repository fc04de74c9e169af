// pipeline.hpp — the entangling protocol end to end.
//
// Stage 1 routes an arbitrary (possibly mixed, possibly entangled) photon
// pair through a which-path interferometer per side and heralds a port pair
// with two QND comparators; the conditional two-photon state at the ports is
// a fixed Bell-state superposition independent of the input. Stage 2 is the
// double-XPM parity gate: two bright bus beams pick up conditional phases at
// both locations, travel through a lossy channel, interfere on a balanced
// splitter, and one of three detection back-ends (number-resolving,
// threshold comparator, discrimination circuit) heralds a Bell state.
//
// Everything before detection is exact label algebra; detection outcomes are
// the only sampled events.

#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "qubus/detection.hpp"
#include "qubus/elements.hpp"
#include "qubus/hybrid_state.hpp"
#include "qubus/loss.hpp"
#include "qubus/rng.hpp"

namespace qubus {

// Which basis the stage-1 interferometer splits over: kHV routes H/V
// components (all four port pairs herald the same superposition); kDiagonal
// routes |±⟩ components (the heralded superposition depends on the ports).
enum class Design : std::uint8_t { kHV, kDiagonal };

enum class Backend : std::uint8_t { kPnr, kThreshold, kUsd };

enum class BellLabel : std::uint8_t { kPhiPlus, kPhiMinus, kPsiPlus, kPsiMinus };

const char* to_string(Design d);
const char* to_string(Backend b);
const char* to_string(BellLabel l);
Design design_from_string(std::string_view s);
Backend backend_from_string(std::string_view s);

constexpr bool is_even_parity(BellLabel l) {
  return l == BellLabel::kPhiPlus || l == BellLabel::kPhiMinus;
}
constexpr bool is_plus_sign(BellLabel l) {
  return l == BellLabel::kPhiPlus || l == BellLabel::kPsiPlus;
}
constexpr BellLabel make_label(bool even, bool plus) {
  return even ? (plus ? BellLabel::kPhiPlus : BellLabel::kPhiMinus)
              : (plus ? BellLabel::kPsiPlus : BellLabel::kPsiMinus);
}
constexpr BellLabel flip_sign(BellLabel l) {
  return make_label(is_even_parity(l), !is_plus_sign(l));
}
constexpr BellLabel flip_parity(BellLabel l) {
  return make_label(!is_even_parity(l), is_plus_sign(l));
}

// The labeled two-photon state on modes (ma, mb):
//   Φ± = (|HH⟩ ± |VV⟩)/√2,  Ψ± = (|HV⟩ ± |VH⟩)/√2.
HybridKet bell_ket(const RegistryPtr& reg, BellLabel label, DvMode ma, DvMode mb);

// ------------------------ input states ------------------------

// Rank-≤4 polarization state of the photon pair: weights σ_i with pure
// components Σ_k coeffs(i,k)|k⟩ over the product basis {HH, HV, VH, VV}.
struct InputPairState {
  Eigen::Vector4d sigmas = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
  Eigen::Matrix4cd coeffs = Eigen::Matrix4cd::Identity();  // row i = component i

  // Throws std::invalid_argument unless σ ≥ 0, Σσ = 1 within kTolNorm and
  // every row is unit-norm within kTolNorm.
  void validate() const;

  static InputPairState pure(const Eigen::Vector4cd& c);
  static InputPairState basis(int k);  // k over {HH, HV, VH, VV}
};

// Weights from a simplex sample, components from a Haar-random unitary;
// reproducible from the stream state.
InputPairState random_input(Rng& rng, int rank);

// ------------------------ mode layout ------------------------

// One shared registry covers both designs: per side an input mode, two track
// modes (diagonal design), four interaction paths, the two output ports and a
// dark merge port; plus a shared path pair and dark port for the parity gate.
// Bus modes: per side a QND probe/reference pair, the two gate beams and two
// comparison beams.
struct ProtocolModes {
  RegistryPtr reg;

  struct Side {
    DvMode in, p1, p2, p3, p4, track_p, track_m, k, r, dark;
    BusMode probe, ref;
  };
  Side a, b;

  DvMode t1, t2, gate_dark;       // parity-gate path pair + merge dark port
  BusMode q1, q2, aux1, aux2;     // gate beams and comparison beams
};

// Built once, shared by every state of the process.
const ProtocolModes& protocol_modes();

// MixedState of the input pair on modes (a.in, b.in), buses vacuum.
MixedState input_state(const InputPairState& in);

// ------------------------ configuration ------------------------

struct ProtocolConfig {
  Design design = Design::kHV;
  Backend backend = Backend::kPnr;
  double alpha = 1000.0;  // bus amplitude, real
  double theta = 0.01;    // cross-Kerr phase per photon
  double eta = 1.0;       // channel transmission of the gate beams
  ApdModel apd{};         // threshold-detector efficiency (all detectors)

  // Ideal heralding treats vacuum/displaced labels as perfectly
  // distinguishable; requires η_D·(separation)² /2 ≥ ln(1/herald_eps) and
  // throws std::domain_error otherwise. Switch off for exact POVM heralding
  // (mixed conditional states).
  bool ideal_heralding = true;
  double herald_eps = kHeraldEps;

  // Number readout through a bright probe: decoded from a noisy classical
  // signal instead of an exact Fock projection.
  bool indirect_pnr = false;
  double readout_gamma = 1.0e4;  // probe amplitude of the readout module
  double readout_sigma = 0.0;    // Gaussian noise on the classical signal

  void validate() const;  // throws std::invalid_argument
};

// ------------------------ stage 1 ------------------------

// Heralded frame: where the photons sit and which Bell states the even/odd
// projections of the port state yield. The port state is
// (|even⟩ + odd_sign·|odd⟩)/√2; odd_sign is unobservable global phase once a
// parity branch is isolated, recorded for audit.
struct HeraldFrame {
  DvMode port_a = 0, port_b = 0;
  BellLabel even_label = BellLabel::kPhiPlus;
  BellLabel odd_label = BellLabel::kPsiPlus;
  int odd_sign = +1;
};

// (|even⟩ + odd_sign·|odd⟩)/√2 on the frame's ports.
HybridKet frame_ket(const RegistryPtr& reg, const HeraldFrame& frame);

struct StageOneResult {
  bool on_a = false, on_b = false;  // comparator responses
  HeraldFrame frame;
  double probability = 0.0;  // of this response pattern
  MixedState state;          // conditional state, stage-1 buses consumed
};

// "off-off", "off-on", "on-off", "on-on".
const char* pattern_name(bool on_a, bool on_b);

// The state after both interferometers and XPM couplings, with the QND
// probe/reference beams still live (pre-measurement).
MixedState stage1_before_heralding(const InputPairState& in,
                                   const ProtocolConfig& cfg);

// Deterministic projection onto one response pattern.
StageOneResult stage1_project(const MixedState& pre, bool on_a, bool on_b,
                              const ProtocolConfig& cfg);

// All four patterns, indexed by on_a·2 + on_b; probabilities sum to 1 up to
// the heralding budget.
std::array<StageOneResult, 4> stage1_patterns(const InputPairState& in,
                                              const ProtocolConfig& cfg);

// Sample the two comparators (two uniforms) and return the realized pattern.
StageOneResult stage1_decompose(const InputPairState& in,
                                const ProtocolConfig& cfg, Rng& rng);

// ------------------------ stage 2 ------------------------

struct EntangleOutcome {
  bool success = false;
  std::optional<BellLabel> bell;  // heralded label when success
  MixedState pair_state;          // exact conditional pair state, photons only
  DvMode port_a = 0, port_b = 0;  // where pair_state lives
  std::optional<int> photon_count;       // number readout (decoded if indirect)
  std::optional<int> true_photon_count;  // actual count behind a noisy readout
  double probability = 0.0;  // of the realized detection record
  double fidelity = 0.0;     // ⟨bell|ρ|bell⟩ when labeled
  // Parity split before detection. Under soft heralding a little misrouted
  // weight belongs to neither class, so the two need not sum to one.
  double even_weight = 0.0, odd_weight = 0.0;
  std::string note;          // human-readable failure reason
};

// The pre-detection gate state: both beams at |α⟩, conditional phases at B,
// channel loss, conditional phases at A, −θ phase shifters, balanced
// splitter. The couplers act on (port_a, port_b); components whose photon
// sits elsewhere pass through unmarked. Gate buses must start vacuum.
MixedState parity_gate_state(const MixedState& ports, DvMode port_a,
                             DvMode port_b, const ProtocolConfig& cfg);

// Detection back-ends on a pre-detection gate state.
EntangleOutcome pnr_backend(const MixedState& pre, const HeraldFrame& frame,
                            const ProtocolConfig& cfg, Rng& rng);
EntangleOutcome threshold_backend(const MixedState& pre,
                                  const HeraldFrame& frame,
                                  const ProtocolConfig& cfg, Rng& rng);
EntangleOutcome usd_backend(const MixedState& pre, const HeraldFrame& frame,
                            const ProtocolConfig& cfg, Rng& rng);

// Build the gate state from a stage-1 herald and run the configured back-end.
EntangleOutcome parity_gate(const StageOneResult& stage1,
                            const ProtocolConfig& cfg, Rng& rng);

// Optional feed-forward: single-qubit Pauli frame rotation on port_b mapping
// the heralded label to `target`; updates state, label and fidelity.
// Requires a labeled success outcome.
EntangleOutcome pauli_frame_correct(EntangleOutcome out, BellLabel target);

// Parity diagnostics on a two-photon region. Components with a photon off
// either port count as neither parity class.
double odd_parity_weight(const MixedState& rho, DvMode ma, DvMode mb);
std::pair<double, MixedState> project_parity(const MixedState& rho, DvMode ma,
                                             DvMode mb, bool odd);

// ------------------------ end to end ------------------------

// One line per pipeline stage; probability is conditional on the stages
// before it.
struct StageRecord {
  std::uint64_t run = 0;
  std::string stage;
  std::string outcome;
  double probability = 1.0;
  std::uint64_t checksum = 0;
};

// Append-only, safe for concurrent appends; per-run record order is the
// append order of that run.
class TraceSink {
 public:
  void append(StageRecord rec);
  std::vector<StageRecord> records() const;

 private:
  mutable std::mutex mu_;
  std::vector<StageRecord> records_;
};

struct RunResult {
  StageOneResult stage1;
  EntangleOutcome outcome;
};

// stage1_decompose → parity_gate with per-stage trace records.
RunResult run_end_to_end(const InputPairState& in, const ProtocolConfig& cfg,
                         Rng& rng, TraceSink* trace = nullptr,
                         std::uint64_t run_id = 0);

}  // namespace qubus

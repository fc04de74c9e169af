// elements.hpp — linear-optical and cross-Kerr element maps on hybrid states.
//
// Every element is a unitary on the hybrid space that acts term-by-term:
// photon routing and polarization rotations rewrite the discrete labels,
// passive bus optics rewrite coherent labels linearly, and the cross-Kerr
// coupling imprints a conditional phase on a bus label. Each op is exposed
// both as a direct function and as a descriptor (for replay, logging and the
// number-basis cross-checks).

#pragma once

#include <variant>

#include "qubus/hybrid_state.hpp"

namespace qubus {

inline constexpr double kPi = 3.14159265358979323846;
// Half-wave-plate preset that swaps H and V (fast axis at 45°).
inline constexpr double kHwpSwapAngle = kPi / 4.0;

// Polarizing beam splitter, transmits H and reflects V:
//   H at in1 → out1, V at in1 → out2, H at in2 → out2, V at in2 → out1.
// kNone as in2 models the split usage (one dark input port).
struct PbsOp {
  static constexpr DvMode kNone = 255;
  DvMode in1, in2, out1, out2;
};

// Diagonal-basis polarizing beam splitter, transmits |+⟩ and reflects |−⟩:
//   |+⟩ at in1 → out1, |−⟩ at in1 → out2, |+⟩ at in2 → out2, |−⟩ at in2 → out1.
struct PbsPmOp {
  static constexpr DvMode kNone = 255;
  DvMode in1, in2, out1, out2;
};

// Half-wave plate with fast axis at `angle` to H:
//   |H⟩ → cos2φ|H⟩ + sin2φ|V⟩,  |V⟩ → sin2φ|H⟩ − cos2φ|V⟩.
struct HwpOp {
  DvMode mode;
  double angle = kHwpSwapAngle;
};

// Balanced beam splitter on two photon paths, polarization preserved:
//   at c → (c + d)/√2,  at d → (c − d)/√2.
struct Bs50DvOp {
  DvMode c, d;
};

// Balanced beam splitter on two bus modes:
//   (a, b) → ((a − b)/√2, (a + b)/√2).
struct Bs50BusOp {
  BusMode a, b;
};

// Phase shifter on a bus mode: label → e^{iφ}·label.
struct PhaseOp {
  BusMode bus;
  double phi;
};

// Cross-Kerr coupling: when the spatial mode holds a photon, the bus label
// picks up phase e^{iθ} (occupation-number coupling, one photon at most).
struct XpmOp {
  DvMode mode;
  BusMode bus;
  double theta;
};

using ElementOp =
    std::variant<PbsOp, PbsPmOp, HwpOp, Bs50DvOp, Bs50BusOp, PhaseOp, XpmOp>;

// ------------------------ direct forms ------------------------

HybridKet apply_pbs(const HybridKet& x, DvMode in, DvMode out_h, DvMode out_v);
HybridKet apply_pbs(const HybridKet& x, DvMode in1, DvMode in2, DvMode out1,
                    DvMode out2);
HybridKet apply_pbs_pm(const HybridKet& x, DvMode in, DvMode out_p, DvMode out_m);
HybridKet apply_pbs_pm(const HybridKet& x, DvMode in1, DvMode in2, DvMode out1,
                       DvMode out2);
HybridKet apply_hwp(const HybridKet& x, DvMode mode, double angle = kHwpSwapAngle);
HybridKet apply_bs50_dv(const HybridKet& x, DvMode c, DvMode d);
HybridKet apply_bs50_bus(const HybridKet& x, BusMode a, BusMode b);
HybridKet apply_phase(const HybridKet& x, BusMode bus, double phi);
HybridKet apply_xpm(const HybridKet& x, DvMode mode, BusMode bus, double theta);

// ------------------------ descriptor forms ------------------------

HybridKet apply(const HybridKet& x, const ElementOp& op);
MixedState apply(const MixedState& rho, const ElementOp& op);
HybridKet apply_all(HybridKet x, const std::vector<ElementOp>& ops);
MixedState apply_all(MixedState rho, const std::vector<ElementOp>& ops);

}  // namespace qubus

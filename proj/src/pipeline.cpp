// pipeline.cpp — stage-1 heralding, parity gate and detection back-ends.

#include "qubus/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <utility>

#include <Eigen/QR>

namespace qubus {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Per-branch set_bus.
MixedState with_bus(MixedState rho, BusMode bus, Complex amp) {
  for (auto& br : rho.branches) br.ket = set_bus(std::move(br.ket), bus, amp);
  return rho;
}

// Photons only: trace out every bus mode of the registry.
MixedState dv_only(const MixedState& rho) {
  std::vector<BusMode> all(rho.reg->bus_count());
  std::iota(all.begin(), all.end(), BusMode{0});
  return merge_branches(trace_out_bus(rho, all));
}

// Parity of the photon pair at the two heralded ports. Soft heralding keeps
// a little weight on misrouted components with a photon off either port;
// those belong to neither parity class and can never earn a herald label —
// they ride along and show up as lost fidelity.
enum class PairClass { kEven, kOdd, kAstray };

PairClass classify_pair(const DvLabel& dv, DvMode ma, DvMode mb) {
  const Photon* pa = dv.find(ma);
  const Photon* pb = dv.find(mb);
  if (pa == nullptr || pb == nullptr) return PairClass::kAstray;
  return pa->pol != pb->pol ? PairClass::kOdd : PairClass::kEven;
}

ProtocolModes build_modes() {
  auto reg = std::make_shared<Registry>();
  ProtocolModes m;
  auto make_side = [&reg](const std::string& s) {
    ProtocolModes::Side sd;
    sd.in = reg->add_dv_mode(s + "_in");
    sd.p1 = reg->add_dv_mode(s + "_p1");
    sd.p2 = reg->add_dv_mode(s + "_p2");
    sd.p3 = reg->add_dv_mode(s + "_p3");
    sd.p4 = reg->add_dv_mode(s + "_p4");
    sd.track_p = reg->add_dv_mode(s + "_trk+");
    sd.track_m = reg->add_dv_mode(s + "_trk-");
    sd.k = reg->add_dv_mode(s + "_K");
    sd.r = reg->add_dv_mode(s + "_R");
    sd.dark = reg->add_dv_mode(s + "_dark");
    sd.probe = reg->add_bus_mode(s + "_probe");
    sd.ref = reg->add_bus_mode(s + "_ref");
    return sd;
  };
  m.a = make_side("A");
  m.b = make_side("B");
  m.t1 = reg->add_dv_mode("gate_t1");
  m.t2 = reg->add_dv_mode("gate_t2");
  m.gate_dark = reg->add_dv_mode("gate_dark");
  m.q1 = reg->add_bus_mode("q1");
  m.q2 = reg->add_bus_mode("q2");
  m.aux1 = reg->add_bus_mode("aux1");
  m.aux2 = reg->add_bus_mode("aux2");
  m.reg = std::move(reg);
  return m;
}

// One side of stage 1, QND measurement excluded. Both designs spread the
// marked component over two paths that each cross the probe, so every term
// picks up exactly one phase θ and the marked port receives a fixed
// polarization superposition.
std::vector<ElementOp> side_circuit(const ProtocolModes::Side& sd,
                                    Design design, double theta) {
  if (design == Design::kHV) {
    // H spreads over (p1, p2) → port K; V over (p3, p4) → port R with the
    // probe phase. Wave plates restore the (|H⟩ + |V⟩)/√2 shape on merge.
    return {
        PbsOp{sd.in, PbsOp::kNone, sd.p1, sd.p3},
        Bs50DvOp{sd.p1, sd.p2},
        Bs50DvOp{sd.p3, sd.p4},
        XpmOp{sd.p3, sd.probe, theta},
        XpmOp{sd.p4, sd.probe, theta},
        HwpOp{sd.p2, kHwpSwapAngle},
        HwpOp{sd.p4, kHwpSwapAngle},
        PbsOp{sd.p1, sd.p2, sd.k, sd.dark},
        PbsOp{sd.p4, sd.p3, sd.r, sd.dark},
    };
  }
  // |+⟩ routes to port K untouched; |−⟩ crosses the probe on both of its
  // H/V paths and merges into port R. No wave plates: the ports carry |±⟩.
  return {
      PbsPmOp{sd.in, PbsPmOp::kNone, sd.track_p, sd.track_m},
      PbsOp{sd.track_p, PbsOp::kNone, sd.p1, sd.p2},
      PbsOp{sd.track_m, PbsOp::kNone, sd.p3, sd.p4},
      XpmOp{sd.p3, sd.probe, theta},
      XpmOp{sd.p4, sd.probe, theta},
      PbsOp{sd.p1, sd.p2, sd.k, sd.dark},
      PbsOp{sd.p3, sd.p4, sd.r, sd.dark},
  };
}

// Ideal heralding misreads a response with probability ≈ e^{−η_D·|label|²};
// demand that stays under herald_eps.
void check_stage1_separation(const ProtocolConfig& cfg) {
  if (!cfg.ideal_heralding) return;
  const Complex on_label =
      cfg.alpha * (std::exp(Complex(0.0, cfg.theta)) - 1.0) * kInvSqrt2;
  if (cfg.apd.eta_d * std::norm(on_label) < std::log(1.0 / cfg.herald_eps))
    throw std::domain_error(
        "stage1: response separation below the heralding budget; raise "
        "alpha*theta or disable ideal_heralding");
}

// Same budget for the two threshold-backend detectors: the beam-1 monitor
// sees |√(2η)α sinθ|², the beam-2 comparator |√η α(1 − cosθ)|².
void check_gate_separation(const ProtocolConfig& cfg) {
  if (!cfg.ideal_heralding) return;
  const double budget = std::log(1.0 / cfg.herald_eps);
  const double s1 = cfg.alpha * std::sin(cfg.theta);
  const double s2 = cfg.alpha * (1.0 - std::cos(cfg.theta));
  if (cfg.apd.eta_d * 2.0 * cfg.eta * s1 * s1 < budget ||
      cfg.apd.eta_d * cfg.eta * s2 * s2 < budget)
    throw std::domain_error(
        "threshold_backend: beam separation below the heralding budget; "
        "raise alpha*theta^2 or disable ideal_heralding");
}

// Interfere the probe against its reference and collapse the difference port
// onto the requested comparator response.
std::pair<double, MixedState> qnd_project(const MixedState& rho, BusMode probe,
                                          BusMode ref, bool on,
                                          const ProtocolConfig& cfg) {
  const MixedState mixed = apply(rho, Bs50BusOp{probe, ref});
  const BusKernel kernel =
      cfg.ideal_heralding ? (on ? ideal_on_kernel() : ideal_off_kernel())
                          : (on ? click_kernel(cfg.apd) : no_click_kernel(cfg.apd));
  return collapse_with_kernel(mixed, probe, kernel);
}

HeraldFrame herald_frame(Design design, bool on_a, bool on_b) {
  const auto& m = protocol_modes();
  HeraldFrame f;
  f.port_a = on_a ? m.a.r : m.a.k;
  f.port_b = on_b ? m.b.r : m.b.k;
  if (design == Design::kDiagonal) {
    // |++⟩ = (Φ⁺+Ψ⁺)/√2, |−−⟩ = (Φ⁺−Ψ⁺)/√2,
    // |+−⟩ = (Φ⁻−Ψ⁻)/√2, |−+⟩ = (Φ⁻+Ψ⁻)/√2.
    const bool cross = on_a != on_b;
    f.even_label = cross ? BellLabel::kPhiMinus : BellLabel::kPhiPlus;
    f.odd_label = cross ? BellLabel::kPsiMinus : BellLabel::kPsiPlus;
    f.odd_sign = on_b ? -1 : +1;
  }
  return f;
}

StageOneResult assemble_stage1(MixedState after, double prob, bool on_a,
                               bool on_b, Design design) {
  const auto& m = protocol_modes();
  StageOneResult r;
  r.on_a = on_a;
  r.on_b = on_b;
  r.frame = herald_frame(design, on_a, on_b);
  r.probability = prob;
  if (prob > 0.0) {
    r.state = merge_branches(
        trace_out_bus(after, {m.a.probe, m.a.ref, m.b.probe, m.b.ref}));
  } else {
    r.state = MixedState{m.reg, {}};
  }
  return r;
}

EntangleOutcome dispatch_backend(const MixedState& pre,
                                 const HeraldFrame& frame,
                                 const ProtocolConfig& cfg, Rng& rng) {
  switch (cfg.backend) {
    case Backend::kPnr:
      return pnr_backend(pre, frame, cfg, rng);
    case Backend::kThreshold:
      return threshold_backend(pre, frame, cfg, rng);
    case Backend::kUsd:
      return usd_backend(pre, frame, cfg, rng);
  }
  throw std::logic_error("parity_gate: unknown back-end");
}

EntangleOutcome begin_outcome(const MixedState& pre, const HeraldFrame& frame) {
  EntangleOutcome out;
  out.port_a = frame.port_a;
  out.port_b = frame.port_b;
  out.odd_weight = dv_weight(pre, [&frame](const DvLabel& dv) {
    return classify_pair(dv, frame.port_a, frame.port_b) == PairClass::kOdd;
  });
  out.even_weight = dv_weight(pre, [&frame](const DvLabel& dv) {
    return classify_pair(dv, frame.port_a, frame.port_b) == PairClass::kEven;
  });
  return out;
}

std::string detect_text(const EntangleOutcome& out) {
  std::string s;
  if (out.photon_count) s += "n=" + std::to_string(*out.photon_count) + " ";
  if (out.success && out.bell)
    s += std::string("herald ") + to_string(*out.bell);
  else
    s += out.note.empty() ? std::string("failure") : "failure: " + out.note;
  return s;
}

}  // namespace

// ------------------------ labels ------------------------

const char* to_string(Design d) {
  return d == Design::kHV ? "hv" : "diagonal";
}

const char* to_string(Backend b) {
  switch (b) {
    case Backend::kPnr:
      return "pnr";
    case Backend::kThreshold:
      return "threshold";
    case Backend::kUsd:
      return "usd";
  }
  return "?";
}

const char* to_string(BellLabel l) {
  switch (l) {
    case BellLabel::kPhiPlus:
      return "Phi+";
    case BellLabel::kPhiMinus:
      return "Phi-";
    case BellLabel::kPsiPlus:
      return "Psi+";
    case BellLabel::kPsiMinus:
      return "Psi-";
  }
  return "?";
}

Design design_from_string(std::string_view s) {
  if (s == "hv") return Design::kHV;
  if (s == "diagonal") return Design::kDiagonal;
  throw std::invalid_argument("design_from_string: expected hv|diagonal");
}

Backend backend_from_string(std::string_view s) {
  if (s == "pnr") return Backend::kPnr;
  if (s == "threshold") return Backend::kThreshold;
  if (s == "usd") return Backend::kUsd;
  throw std::invalid_argument("backend_from_string: expected pnr|threshold|usd");
}

HybridKet bell_ket(const RegistryPtr& reg, BellLabel label, DvMode ma,
                   DvMode mb) {
  const HybridKet vac = vacuum_ket(reg);
  const bool even = is_even_parity(label);
  HybridKet first = add_photon(add_photon(vac, ma, Pol::H), mb,
                               even ? Pol::H : Pol::V);
  HybridKet second = add_photon(add_photon(vac, ma, Pol::V), mb,
                                even ? Pol::V : Pol::H);
  const Complex c1(kInvSqrt2, 0.0);
  const Complex c2(is_plus_sign(label) ? kInvSqrt2 : -kInvSqrt2, 0.0);
  return canonical(c1 * std::move(first) + c2 * std::move(second));
}

// ------------------------ input states ------------------------

void InputPairState::validate() const {
  if (!sigmas.allFinite() || !coeffs.allFinite())
    throw std::invalid_argument("InputPairState: non-finite entries");
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (sigmas(i) < 0.0)
      throw std::invalid_argument("InputPairState: weights must be ≥ 0");
    sum += sigmas(i);
  }
  if (std::abs(sum - 1.0) > kTolNorm)
    throw std::invalid_argument("InputPairState: weights must sum to 1");
  for (int i = 0; i < 4; ++i)
    if (std::abs(coeffs.row(i).norm() - 1.0) > kTolNorm)
      throw std::invalid_argument("InputPairState: components must be unit-norm");
}

InputPairState InputPairState::pure(const Eigen::Vector4cd& c) {
  const double n = c.norm();
  if (!c.allFinite() || n < kTolNorm)
    throw std::invalid_argument("InputPairState::pure: null component");
  InputPairState in;
  in.sigmas = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
  in.coeffs = Eigen::Matrix4cd::Identity();
  in.coeffs.row(0) = (c / n).transpose();
  return in;
}

InputPairState InputPairState::basis(int k) {
  if (k < 0 || k > 3)
    throw std::invalid_argument("InputPairState::basis: k outside 0..3");
  InputPairState in;
  in.sigmas = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
  in.coeffs = Eigen::Matrix4cd::Zero();
  for (int i = 0; i < 4; ++i) in.coeffs(i, (k + i) % 4) = 1.0;
  return in;
}

InputPairState random_input(Rng& rng, int rank) {
  if (rank < 1 || rank > 4)
    throw std::invalid_argument("random_input: rank outside 1..4");
  // Ginibre → QR with the R-diagonal phase fix: Haar-distributed unitary.
  Eigen::Matrix4cd g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double re = rng.normal();
      const double im = rng.normal();
      g(i, j) = Complex(re, im) * kInvSqrt2;
    }
  Eigen::HouseholderQR<Eigen::Matrix4cd> qr(g);
  Eigen::Matrix4cd q = qr.householderQ();
  const Eigen::Matrix4cd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < 4; ++j) {
    const double mag = std::abs(r(j, j));
    q.col(j) *= mag > 0.0 ? r(j, j) / mag : Complex(1.0, 0.0);
  }
  InputPairState in;
  in.coeffs = q.transpose();  // row i = i-th Haar column
  Eigen::Vector4d s = Eigen::Vector4d::Zero();
  double sum = 0.0;
  for (int i = 0; i < rank; ++i) {
    s(i) = -std::log1p(-rng.uniform());  // Exp(1)
    sum += s(i);
  }
  if (sum <= 0.0) {
    s(0) = 1.0;
    sum = 1.0;
  }
  s /= sum;
  std::sort(s.data(), s.data() + 4, std::greater<double>());
  in.sigmas = s;
  in.validate();
  return in;
}

// ------------------------ mode layout ------------------------

const ProtocolModes& protocol_modes() {
  static const ProtocolModes m = build_modes();
  return m;
}

MixedState input_state(const InputPairState& in) {
  in.validate();
  const auto& m = protocol_modes();
  const HybridKet vac = vacuum_ket(m.reg);
  std::array<HybridKet, 4> basis;
  int k = 0;
  for (Pol pa : {Pol::H, Pol::V})
    for (Pol pb : {Pol::H, Pol::V})
      basis[k++] = add_photon(add_photon(vac, m.a.in, pa), m.b.in, pb);
  MixedState rho;
  rho.reg = m.reg;
  for (int i = 0; i < 4; ++i) {
    if (in.sigmas(i) <= 0.0) continue;
    HybridKet comp{m.reg, {}};
    for (int j = 0; j < 4; ++j) {
      const Complex c = in.coeffs(i, j);
      if (c == Complex(0.0, 0.0)) continue;
      comp = std::move(comp) + c * basis[j];
    }
    rho.branches.push_back({in.sigmas(i), normalized(canonical(std::move(comp)))});
  }
  return rho;
}

// ------------------------ configuration ------------------------

void ProtocolConfig::validate() const {
  if (!std::isfinite(alpha) || alpha <= 0.0 || alpha > 0.5 * kMaxAmp)
    throw std::invalid_argument("ProtocolConfig: alpha outside (0, 5e5]");
  if (!std::isfinite(theta) || theta <= 0.0 || theta > 0.5 * kPi)
    throw std::invalid_argument("ProtocolConfig: theta outside (0, pi/2]");
  if (!std::isfinite(eta) || eta <= 0.0 || eta > 1.0)
    throw std::invalid_argument("ProtocolConfig: eta outside (0, 1]");
  if (!std::isfinite(apd.eta_d) || apd.eta_d <= 0.0 || apd.eta_d > 1.0)
    throw std::invalid_argument(
        "ProtocolConfig: detector efficiency outside (0, 1]");
  if (!std::isfinite(herald_eps) || herald_eps <= 0.0 || herald_eps >= 1.0)
    throw std::invalid_argument("ProtocolConfig: herald_eps outside (0, 1)");
  if (indirect_pnr) {
    if (!std::isfinite(readout_gamma) || readout_gamma <= 0.0 ||
        readout_gamma > kMaxAmp)
      throw std::invalid_argument("ProtocolConfig: readout_gamma outside (0, 1e6]");
    if (!std::isfinite(readout_sigma) || readout_sigma < 0.0)
      throw std::invalid_argument("ProtocolConfig: readout_sigma negative");
  }
}

// ------------------------ stage 1 ------------------------

HybridKet frame_ket(const RegistryPtr& reg, const HeraldFrame& frame) {
  const Complex even(kInvSqrt2, 0.0);
  const Complex odd(frame.odd_sign >= 0 ? kInvSqrt2 : -kInvSqrt2, 0.0);
  return canonical(
      even * bell_ket(reg, frame.even_label, frame.port_a, frame.port_b) +
      odd * bell_ket(reg, frame.odd_label, frame.port_a, frame.port_b));
}

const char* pattern_name(bool on_a, bool on_b) {
  return on_a ? (on_b ? "on-on" : "on-off") : (on_b ? "off-on" : "off-off");
}

MixedState stage1_before_heralding(const InputPairState& in,
                                   const ProtocolConfig& cfg) {
  cfg.validate();
  const auto& m = protocol_modes();
  MixedState rho = input_state(in);
  for (const ProtocolModes::Side* sd : {&m.a, &m.b}) {
    rho = with_bus(std::move(rho), sd->probe, Complex(cfg.alpha, 0.0));
    rho = with_bus(std::move(rho), sd->ref, Complex(cfg.alpha, 0.0));
    rho = apply_all(std::move(rho), side_circuit(*sd, cfg.design, cfg.theta));
  }
  return rho;
}

StageOneResult stage1_project(const MixedState& pre, bool on_a, bool on_b,
                              const ProtocolConfig& cfg) {
  cfg.validate();
  check_stage1_separation(cfg);
  const auto& m = protocol_modes();
  auto [pa, after_a] = qnd_project(pre, m.a.probe, m.a.ref, on_a, cfg);
  if (pa <= 0.0)
    return assemble_stage1(MixedState{m.reg, {}}, 0.0, on_a, on_b, cfg.design);
  auto [pb, after_b] = qnd_project(after_a, m.b.probe, m.b.ref, on_b, cfg);
  return assemble_stage1(std::move(after_b), pa * pb, on_a, on_b, cfg.design);
}

std::array<StageOneResult, 4> stage1_patterns(const InputPairState& in,
                                              const ProtocolConfig& cfg) {
  const MixedState pre = stage1_before_heralding(in, cfg);
  std::array<StageOneResult, 4> out;
  for (int i = 0; i < 4; ++i)
    out[i] = stage1_project(pre, (i & 2) != 0, (i & 1) != 0, cfg);
  return out;
}

StageOneResult stage1_decompose(const InputPairState& in,
                                const ProtocolConfig& cfg, Rng& rng) {
  const MixedState pre = stage1_before_heralding(in, cfg);
  check_stage1_separation(cfg);
  const auto& m = protocol_modes();
  const ProtocolModes::Side* side[2] = {&m.a, &m.b};
  MixedState cur = pre;
  double prob = 1.0;
  bool on[2] = {false, false};
  for (int s = 0; s < 2; ++s) {
    auto [p_off, post_off] =
        qnd_project(cur, side[s]->probe, side[s]->ref, false, cfg);
    on[s] = rng.uniform() >= std::clamp(p_off, 0.0, 1.0);
    if (on[s]) {
      auto [p_on, post_on] =
          qnd_project(cur, side[s]->probe, side[s]->ref, true, cfg);
      prob *= p_on;
      cur = std::move(post_on);
    } else {
      prob *= p_off;
      cur = std::move(post_off);
    }
  }
  return assemble_stage1(std::move(cur), prob, on[0], on[1], cfg.design);
}

// ------------------------ stage 2 ------------------------

MixedState parity_gate_state(const MixedState& ports, DvMode port_a,
                             DvMode port_b, const ProtocolConfig& cfg) {
  cfg.validate();
  const auto& m = protocol_modes();
  require_same_registry(ports.reg, m.reg, "parity_gate_state");
  MixedState rho = with_bus(with_bus(ports, m.q1, Complex(cfg.alpha, 0.0)),
                            m.q2, Complex(cfg.alpha, 0.0));
  // Location B: beam 1 crosses the V path, beam 2 the H path.
  rho = apply_all(std::move(rho), {
                                      PbsOp{port_b, PbsOp::kNone, m.t1, m.t2},
                                      XpmOp{m.t2, m.q1, cfg.theta},
                                      XpmOp{m.t1, m.q2, cfg.theta},
                                      PbsOp{m.t1, m.t2, port_b, m.gate_dark},
                                  });
  // Both beams travel B → A through the lossy channel.
  if (cfg.eta < 1.0) rho = damp(rho, {m.q1, m.q2}, cfg.eta);
  // Location A: beam 1 crosses the H path, beam 2 the V path. The −θ
  // shifters re-center the even-parity labels on |α⟩-like values and the
  // balanced splitter routes all parity information into beam 1:
  // even → (0, √(2η)α), odd → (±i√(2η)α sinθ, √(2η)α cosθ).
  rho = apply_all(std::move(rho), {
                                      PbsOp{port_a, PbsOp::kNone, m.t1, m.t2},
                                      XpmOp{m.t1, m.q1, cfg.theta},
                                      XpmOp{m.t2, m.q2, cfg.theta},
                                      PbsOp{m.t1, m.t2, port_a, m.gate_dark},
                                      PhaseOp{m.q1, -cfg.theta},
                                      PhaseOp{m.q2, -cfg.theta},
                                      Bs50BusOp{m.q1, m.q2},
                                  });
  return rho;
}

EntangleOutcome pnr_backend(const MixedState& pre, const HeraldFrame& frame,
                            const ProtocolConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& m = protocol_modes();
  EntangleOutcome out = begin_outcome(pre, frame);
  const DetectionRecord rec =
      cfg.indirect_pnr
          ? measure_pnr_indirect(pre, m.q1, Complex(cfg.readout_gamma, 0.0),
                                 cfg.theta, cfg.readout_sigma, cfg.apd, rng)
          : measure_pnr(pre, m.q1, rng);
  out.photon_count = rec.outcome;
  out.true_photon_count = rec.true_outcome;
  out.probability = rec.probability;
  // n = 0 keeps the even branch (plus the undetectable odd remnant); n ≥ 1
  // heralds the odd branch, whose superposition sign flips with the parity
  // of n through the ±i count amplitudes.
  out.success = true;
  out.bell = rec.outcome == 0
                 ? frame.even_label
                 : (rec.outcome % 2 == 0 ? frame.odd_label
                                         : flip_sign(frame.odd_label));
  out.pair_state = dv_only(rec.post);
  out.fidelity = fidelity(
      out.pair_state, bell_ket(m.reg, *out.bell, frame.port_a, frame.port_b));
  return out;
}

EntangleOutcome threshold_backend(const MixedState& pre,
                                  const HeraldFrame& frame,
                                  const ProtocolConfig& cfg, Rng& rng) {
  cfg.validate();
  check_gate_separation(cfg);
  const auto& m = protocol_modes();
  EntangleOutcome out = begin_outcome(pre, frame);
  // Beam-1 monitor: any surviving displacement flags odd parity.
  const DetectionRecord r1 = cfg.ideal_heralding
                                 ? measure_threshold_ideal(pre, m.q1, rng)
                                 : measure_threshold(pre, m.q1, cfg.apd, rng);
  // Beam 2 against a local reference at the odd-parity amplitude: a
  // mismatch click flags even parity.
  const MixedState staged = with_bus(
      r1.post, m.aux1,
      Complex(std::sqrt(2.0 * cfg.eta) * cfg.alpha * std::cos(cfg.theta), 0.0));
  const DetectionRecord r2 =
      cfg.ideal_heralding ? qnd_compare_ideal(staged, m.q2, m.aux1, rng)
                          : qnd_compare(staged, m.q2, m.aux1, cfg.apd, rng);
  out.probability = r1.probability * r2.probability;
  out.pair_state = dv_only(r2.post);
  const bool odd_flag = r1.outcome == 1;
  const bool even_flag = r2.outcome == 1;
  if (!odd_flag && even_flag) {
    out.success = true;
    out.bell = frame.even_label;
    out.fidelity = fidelity(
        out.pair_state, bell_ket(m.reg, *out.bell, frame.port_a, frame.port_b));
  } else if (odd_flag && !even_flag) {
    out.note = "beam monitor fired: odd parity, superposition sign unresolved";
  } else if (!odd_flag && !even_flag) {
    out.note = "no detector fired: parity unresolved";
  } else {
    out.note = "both detectors fired: inconsistent herald";
  }
  return out;
}

EntangleOutcome usd_backend(const MixedState& pre, const HeraldFrame& frame,
                            const ProtocolConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& m = protocol_modes();
  EntangleOutcome out = begin_outcome(pre, frame);
  // Split beam 1 against vacuum and beam 2 against the even-parity
  // amplitude; the even branch leaves both detectors exactly dark, so any
  // click heralds odd parity, and the count amplitudes of the dominant
  // beam-1 port flip the superposition sign. The click labels are faint by
  // design, so the exact detector POVM is always used here.
  MixedState staged =
      with_bus(pre, m.aux2, Complex(std::sqrt(2.0 * cfg.eta) * cfg.alpha, 0.0));
  staged = apply(staged, Bs50BusOp{m.q1, m.aux1});
  staged = apply(staged, Bs50BusOp{m.q2, m.aux2});
  const DetectionRecord r1 = measure_threshold(staged, m.q1, cfg.apd, rng);
  const DetectionRecord r2 = measure_threshold(r1.post, m.q2, cfg.apd, rng);
  out.probability = r1.probability * r2.probability;
  out.pair_state = dv_only(r2.post);
  if (r1.outcome == 1 || r2.outcome == 1) {
    out.success = true;
    out.bell = flip_sign(frame.odd_label);
    out.fidelity = fidelity(
        out.pair_state, bell_ket(m.reg, *out.bell, frame.port_a, frame.port_b));
  } else {
    out.note = "no detector fired: discrimination inconclusive";
  }
  return out;
}

EntangleOutcome parity_gate(const StageOneResult& stage1,
                            const ProtocolConfig& cfg, Rng& rng) {
  if (stage1.probability <= 0.0 || stage1.state.branches.empty())
    throw std::invalid_argument("parity_gate: the stage-1 pattern carries no state");
  const MixedState pre = parity_gate_state(stage1.state, stage1.frame.port_a,
                                           stage1.frame.port_b, cfg);
  return dispatch_backend(pre, stage1.frame, cfg, rng);
}

EntangleOutcome pauli_frame_correct(EntangleOutcome out, BellLabel target) {
  if (!out.success || !out.bell)
    throw std::invalid_argument("pauli_frame_correct: unlabeled outcome");
  const BellLabel cur = *out.bell;
  const bool flip_x = is_even_parity(cur) != is_even_parity(target);
  const bool flip_z = is_plus_sign(cur) != is_plus_sign(target);
  if (flip_x || flip_z) {
    // X_B toggles parity, Z_B toggles the sign; Z acts before X.
    for (auto& br : out.pair_state.branches) {
      for (auto& t : br.ket.terms)
        for (auto& p : t.dv.photons) {
          if (p.mode != out.port_b) continue;
          if (flip_z && p.pol == Pol::V) t.coeff = -t.coeff;
          if (flip_x) p.pol = p.pol == Pol::H ? Pol::V : Pol::H;
        }
      br.ket = canonical(std::move(br.ket));
    }
  }
  out.bell = target;
  out.fidelity = fidelity(out.pair_state, bell_ket(out.pair_state.reg, target,
                                                   out.port_a, out.port_b));
  return out;
}

double odd_parity_weight(const MixedState& rho, DvMode ma, DvMode mb) {
  return dv_weight(rho, [ma, mb](const DvLabel& dv) {
    return classify_pair(dv, ma, mb) == PairClass::kOdd;
  });
}

std::pair<double, MixedState> project_parity(const MixedState& rho, DvMode ma,
                                             DvMode mb, bool odd) {
  const PairClass want = odd ? PairClass::kOdd : PairClass::kEven;
  return project_dv(rho, [ma, mb, want](const DvLabel& dv) {
    return classify_pair(dv, ma, mb) == want;
  });
}

// ------------------------ end to end ------------------------

void TraceSink::append(StageRecord rec) {
  const std::lock_guard<std::mutex> lock(mu_);
  records_.push_back(std::move(rec));
}

std::vector<StageRecord> TraceSink::records() const {
  const std::lock_guard<std::mutex> lock(mu_);
  return records_;
}

RunResult run_end_to_end(const InputPairState& in, const ProtocolConfig& cfg,
                         Rng& rng, TraceSink* trace, std::uint64_t run_id) {
  RunResult rr;
  rr.stage1 = stage1_decompose(in, cfg, rng);
  if (trace) {
    trace->append({run_id, "input", "prepared", 1.0,
                   state_checksum(input_state(in))});
    trace->append({run_id, "stage1",
                   pattern_name(rr.stage1.on_a, rr.stage1.on_b),
                   rr.stage1.probability, state_checksum(rr.stage1.state)});
  }
  const MixedState pre = parity_gate_state(
      rr.stage1.state, rr.stage1.frame.port_a, rr.stage1.frame.port_b, cfg);
  if (trace)
    trace->append({run_id, "gate", "pre-detection", 1.0, state_checksum(pre)});
  rr.outcome = dispatch_backend(pre, rr.stage1.frame, cfg, rng);
  if (trace)
    trace->append({run_id, "detect", detect_text(rr.outcome),
                   rr.outcome.probability, state_checksum(rr.outcome.pair_state)});
  return rr;
}

}  // namespace qubus

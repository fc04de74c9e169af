// loss.cpp — implementation of the loss channel and its closed forms.

#include "qubus/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "qubus/elements.hpp"

namespace qubus {

namespace {

void check_eta(double eta, const char* who) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::domain_error(std::string(who) +
                            ": transmittance outside (0, 1]");
}

void check_fid(double f, const char* who) {
  if (!(f > 0.5 && f <= 1.0))
    throw std::domain_error(std::string(who) + ": fidelity outside (1/2, 1]");
}

}  // namespace

ChannelParams ChannelParams::from_rate(double gamma, double dt) {
  return ChannelParams{eta_from_rate(gamma, dt)};
}

double eta_from_rate(double gamma, double dt) {
  if (gamma < 0.0 || dt < 0.0)
    throw std::domain_error("eta_from_rate: negative rate or duration");
  return std::exp(-gamma * dt);
}

MixedState damp(const MixedState& rho, const std::vector<BusMode>& modes,
                double eta) {
  check_eta(eta, "damp");
  const double keep = std::sqrt(eta);
  const double lose = std::sqrt(1.0 - eta);
  PatternKernel kernel = [lose](std::span<const Complex> ket_pat,
                                std::span<const Complex> bra_pat) {
    Complex f(1.0, 0.0);
    for (std::size_t i = 0; i < ket_pat.size(); ++i)
      f *= coherent_overlap(lose * ket_pat[i], lose * bra_pat[i]);
    return f;
  };
  PatternRewrite shrink = [keep](std::span<Complex> pat) {
    for (auto& v : pat) v *= keep;
  };
  auto [w, out] = reduce_bus_modes(rho, modes, kernel, shrink);
  if (std::abs(w - total_weight(rho)) > kTolNorm * (1.0 + rho.branches.size()))
    throw std::runtime_error("damp: channel did not preserve trace");
  return out;
}

MixedState damp(const HybridKet& x, const std::vector<BusMode>& modes,
                double eta) {
  return damp(as_mixed(x), modes, eta);
}

double xi_squared(double alpha, double theta, double eta) {
  check_eta(eta, "xi_squared");
  const double s = 2.0 * alpha * std::sin(0.5 * theta);  // |αe^{iθ} − α|
  return std::exp(-(1.0 - eta) * s * s);
}

double fidelity_after_loss(double alpha, double theta, double eta) {
  return 0.5 * (1.0 + xi_squared(alpha, theta, eta));
}

double success_pnr(double fidelity_target, double eta) {
  check_fid(fidelity_target, "success_pnr");
  if (!(eta > 0.0 && eta < 1.0))
    throw std::domain_error("success_pnr: transmittance outside (0, 1)");
  return 1.0 - std::pow(2.0 * fidelity_target - 1.0, 2.0 * eta / (1.0 - eta));
}

double success_usd(double fidelity_target, double eta) {
  check_fid(fidelity_target, "success_usd");
  if (!(eta > 0.0 && eta < 1.0))
    throw std::domain_error("success_usd: transmittance outside (0, 1)");
  return 0.5 * (1.0 - std::pow(2.0 * fidelity_target - 1.0, eta / (1.0 - eta)));
}

double eta_for_success(double fidelity_target, double success_target) {
  check_fid(fidelity_target, "eta_for_success");
  if (!(success_target > 0.0 && success_target < 1.0))
    throw std::domain_error("eta_for_success: success outside (0, 1)");
  double lo = 1e-12, hi = 1.0 - 1e-12;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (success_pnr(fidelity_target, mid) < success_target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

HybridKet to_cat_frame(const HybridKet& x, BusMode a, BusMode b) {
  return apply_bs50_bus(x, a, b);
}

HybridKet from_cat_frame(const HybridKet& x, BusMode a, BusMode b) {
  if (a == b)
    throw std::invalid_argument("from_cat_frame: ports must be distinct");
  const double s = 1.0 / std::sqrt(2.0);
  HybridKet out = x;
  for (auto& t : out.terms) {
    const Complex va = t.bus[a], vb = t.bus[b];
    t.bus[a] = s * (va + vb);
    t.bus[b] = s * (vb - va);
  }
  return canonical(std::move(out));
}

}  // namespace qubus

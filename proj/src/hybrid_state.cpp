// hybrid_state.cpp — implementation of the hybrid state algebra.

#include "qubus/hybrid_state.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace qubus {

namespace {

bool complex_less(const Complex& a, const Complex& b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

bool bus_less(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (a[i] != b[i]) return complex_less(a[i], b[i]);
  }
  return a.size() < b.size();
}

bool bus_close(const std::vector<Complex>& a, const std::vector<Complex>& b,
               double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) >= tol) return false;
  return true;
}

void check_label(Complex v, const char* who) {
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
    throw std::domain_error(std::string(who) + ": non-finite label");
  if (std::abs(v) > kMaxAmp)
    throw std::domain_error(std::string(who) + ": label magnitude exceeds limit");
}

}  // namespace

bool dv_less(const DvLabel& a, const DvLabel& b) {
  if (a.photons.size() != b.photons.size())
    return a.photons.size() < b.photons.size();
  for (std::size_t i = 0; i < a.photons.size(); ++i) {
    const Photon &p = a.photons[i], &q = b.photons[i];
    if (p.mode != q.mode) return p.mode < q.mode;
    if (p.pol != q.pol) return p.pol < q.pol;
  }
  return false;
}

// ------------------------ construction ------------------------

HybridKet vacuum_ket(RegistryPtr reg) {
  if (!reg) throw std::invalid_argument("vacuum_ket: null registry");
  HybridKet x;
  x.reg = std::move(reg);
  HybridTerm t;
  t.coeff = Complex(1.0, 0.0);
  t.bus.assign(x.reg->bus_count(), Complex(0.0, 0.0));
  x.terms.push_back(std::move(t));
  return x;
}

HybridKet add_photon(HybridKet x, DvMode mode, Pol pol) {
  if (!x.reg || mode >= x.reg->dv_count())
    throw std::invalid_argument("add_photon: unknown photon mode");
  for (auto& t : x.terms) {
    if (t.dv.occupies(mode))
      throw std::invalid_argument("add_photon: mode already occupied");
    auto it = std::lower_bound(
        t.dv.photons.begin(), t.dv.photons.end(), mode,
        [](const Photon& p, DvMode m) { return p.mode < m; });
    t.dv.photons.insert(it, Photon{mode, pol});
  }
  return x;
}

HybridKet add_photon(HybridKet x, DvMode mode, DiagPol pol) {
  const double s = 1.0 / std::sqrt(2.0);
  const double sign = (pol == DiagPol::Plus) ? 1.0 : -1.0;
  HybridKet h = add_photon(x, mode, Pol::H);
  HybridKet v = add_photon(std::move(x), mode, Pol::V);
  return canonical(Complex(s, 0.0) * std::move(h) +
                   Complex(sign * s, 0.0) * std::move(v));
}

HybridKet set_bus(HybridKet x, BusMode bus, Complex amp) {
  if (!x.reg || bus >= x.reg->bus_count())
    throw std::invalid_argument("set_bus: unknown bus mode");
  check_label(amp, "set_bus");
  for (auto& t : x.terms) {
    if (t.bus[bus] != Complex(0.0, 0.0))
      throw std::invalid_argument("set_bus: bus already driven");
    t.bus[bus] = amp;
  }
  return x;
}

MixedState as_mixed(HybridKet x) {
  MixedState rho;
  rho.reg = x.reg;
  rho.branches.push_back({1.0, normalized(std::move(x))});
  return rho;
}

// ------------------------ ket arithmetic ------------------------

HybridKet operator*(Complex c, HybridKet x) {
  for (auto& t : x.terms) t.coeff *= c;
  return x;
}

HybridKet operator+(HybridKet x, const HybridKet& y) {
  require_same_registry(x.reg, y.reg, "operator+");
  x.terms.insert(x.terms.end(), y.terms.begin(), y.terms.end());
  return x;
}

HybridKet operator-(HybridKet x, const HybridKet& y) {
  return std::move(x) + Complex(-1.0, 0.0) * y;
}

// ------------------------ scalar ops ------------------------

Complex coherent_overlap(Complex a, Complex b) {
  check_label(a, "coherent_overlap");
  check_label(b, "coherent_overlap");
  if (a == b) return Complex(1.0, 0.0);  // keep self-overlaps exact
  // Re part as −|a−b|²/2 avoids catastrophic cancellation for close labels.
  const double re = -0.5 * std::norm(a - b);
  if (re < -700.0) return Complex(0.0, 0.0);  // underflow: exactly zero
  const double im = std::conj(b).real() * a.imag() + std::conj(b).imag() * a.real();
  return std::exp(re) * Complex(std::cos(im), std::sin(im));
}

Complex inner(const HybridKet& x, const HybridKet& y) {
  require_same_registry(x.reg, y.reg, "inner");
  Complex acc(0.0, 0.0);
  for (const auto& tx : x.terms) {
    for (const auto& ty : y.terms) {
      if (!(tx.dv == ty.dv)) continue;
      Complex f = std::conj(tx.coeff) * ty.coeff;
      for (std::size_t b = 0; b < tx.bus.size() && f != Complex(0.0, 0.0); ++b)
        f *= coherent_overlap(ty.bus[b], tx.bus[b]);  // ⟨x_b|y_b⟩
      acc += f;
    }
  }
  return acc;
}

double norm(const HybridKet& x) {
  const double n2 = inner(x, x).real();
  return std::sqrt(std::max(0.0, n2));
}

HybridKet canonical(HybridKet x, double tol) {
  if (!x.reg) throw std::invalid_argument("canonical: null registry");
  for (const auto& t : x.terms) {
    if (t.bus.size() != x.reg->bus_count())
      throw std::invalid_argument("canonical: bus label count mismatch");
    if (!std::isfinite(t.coeff.real()) || !std::isfinite(t.coeff.imag()))
      throw std::domain_error("canonical: non-finite coefficient");
    for (const auto& v : t.bus) check_label(v, "canonical");
  }
  std::sort(x.terms.begin(), x.terms.end(),
            [](const HybridTerm& a, const HybridTerm& b) {
              if (!(a.dv == b.dv)) return dv_less(a.dv, b.dv);
              return bus_less(a.bus, b.bus);
            });
  std::vector<HybridTerm> merged;
  merged.reserve(x.terms.size());
  for (auto& t : x.terms) {
    if (!merged.empty() && merged.back().dv == t.dv &&
        bus_close(merged.back().bus, t.bus, tol)) {
      merged.back().coeff += t.coeff;
    } else {
      merged.push_back(std::move(t));
    }
  }
  std::erase_if(merged,
                [tol](const HybridTerm& t) { return std::abs(t.coeff) < tol; });
  x.terms = std::move(merged);
  return x;
}

HybridKet normalized(HybridKet x) {
  const double n = norm(x);
  if (n < kTolNorm) throw std::domain_error("normalized: zero-norm state");
  return Complex(1.0 / n, 0.0) * std::move(x);
}

double pure_fidelity(const HybridKet& x, const HybridKet& y) {
  const double nx = norm(x), ny = norm(y);
  if (nx < kTolNorm || ny < kTolNorm)
    throw std::domain_error("pure_fidelity: zero-norm state");
  const double f = std::norm(inner(x, y)) / (nx * nx * ny * ny);
  return std::min(1.0, f);
}

double pure_distance(const HybridKet& x, const HybridKet& y) {
  return std::sqrt(std::max(0.0, 1.0 - pure_fidelity(x, y)));
}

double fidelity(const MixedState& rho, const HybridKet& target) {
  require_same_registry(rho.reg, target.reg, "fidelity");
  if (std::abs(norm(target) - 1.0) > 1e-9)
    throw std::invalid_argument("fidelity: target not normalized");
  double acc = 0.0;
  for (const auto& br : rho.branches)
    acc += br.weight * std::norm(inner(target, br.ket));
  return std::min(1.0, acc);
}

double total_weight(const MixedState& rho) {
  double w = 0.0;
  for (const auto& br : rho.branches) w += br.weight;
  return w;
}

double dv_weight(const MixedState& rho,
                 const std::function<bool(const DvLabel&)>& pred) {
  double acc = 0.0;
  for (const auto& br : rho.branches) {
    HybridKet sub;
    sub.reg = br.ket.reg;
    for (const auto& t : br.ket.terms)
      if (pred(t.dv)) sub.terms.push_back(t);
    if (!sub.terms.empty()) {
      const double n = norm(sub);
      acc += br.weight * n * n;
    }
  }
  return acc;
}

std::pair<double, MixedState> project_dv(
    const MixedState& rho, const std::function<bool(const DvLabel&)>& pred) {
  MixedState out;
  out.reg = rho.reg;
  double total = 0.0;
  for (const auto& br : rho.branches) {
    HybridKet sub;
    sub.reg = br.ket.reg;
    for (const auto& t : br.ket.terms)
      if (pred(t.dv)) sub.terms.push_back(t);
    if (sub.terms.empty()) continue;
    const double n = norm(sub);
    const double w = br.weight * n * n;
    if (w <= kWeightFloor) continue;
    total += w;
    out.branches.push_back({w, normalized(std::move(sub))});
  }
  if (total <= 0.0) return {0.0, MixedState{rho.reg, {}}};
  for (auto& br : out.branches) br.weight /= total;
  return {total, merge_branches(std::move(out))};
}

// ------------------------ mixture machinery ------------------------

std::vector<std::pair<double, HybridKet>> mixture_from_components(
    const std::vector<HybridKet>& parts, const Matrix& coeffs,
    double weight_floor) {
  const Eigen::Index n = static_cast<Eigen::Index>(parts.size());
  if (n == 0) return {};
  if (coeffs.rows() != n || coeffs.cols() != n)
    throw std::invalid_argument("mixture_from_components: coefficient shape");

  Matrix gram(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j; k < n; ++k) {
      gram(j, k) = inner(parts[j], parts[k]);
      gram(k, j) = std::conj(gram(j, k));
    }
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("mixture_from_components: Gram eigensolve failed");
  const Eigen::VectorXd lam = es.eigenvalues();
  const double lam_max = lam.maxCoeff();
  if (lam_max <= 0.0) return {};
  const double rank_eps = lam_max * 1e-12;

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (lam(i) > rank_eps) keep.push_back(i);
  const Eigen::Index r = static_cast<Eigen::Index>(keep.size());

  Matrix s(n, r);  // orthonormalizing map: |e_a⟩ = Σ_j S_ja |r_j⟩
  for (Eigen::Index a = 0; a < r; ++a)
    s.col(a) = es.eigenvectors().col(keep[a]) / std::sqrt(lam(keep[a]));

  Matrix m = s.adjoint() * gram * coeffs * gram * s;  // ⟨e_a|ρ|e_b⟩
  m = Complex(0.5, 0.0) * (m + m.adjoint().eval());

  Eigen::SelfAdjointEigenSolver<Matrix> es2(m);
  if (es2.info() != Eigen::Success)
    throw std::runtime_error("mixture_from_components: mixture eigensolve failed");

  const Matrix comb = s * es2.eigenvectors();  // column m over the parts
  std::vector<std::pair<double, HybridKet>> out;
  for (Eigen::Index i = r - 1; i >= 0; --i) {  // heaviest first
    const double w = es2.eigenvalues()(i);
    if (w < weight_floor) continue;
    HybridKet v;
    v.reg = parts[0].reg;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (comb(j, i) == Complex(0.0, 0.0)) continue;
      HybridKet scaled = comb(j, i) * parts[j];
      v.terms.insert(v.terms.end(), scaled.terms.begin(), scaled.terms.end());
    }
    v = canonical(std::move(v), kTolAmp * 1e-3);
    out.emplace_back(w, normalized(std::move(v)));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return out;
}

std::pair<double, MixedState> reduce_bus_modes(const MixedState& rho,
                                               const std::vector<BusMode>& modes,
                                               const PatternKernel& kernel,
                                               const PatternRewrite& rewrite) {
  if (!rho.reg) throw std::invalid_argument("reduce_bus_modes: null registry");
  for (BusMode m : modes)
    if (m >= rho.reg->bus_count())
      throw std::invalid_argument("reduce_bus_modes: unknown bus mode");

  double total = 0.0;
  MixedState out;
  out.reg = rho.reg;

  for (const auto& br : rho.branches) {
    // Group the branch's terms by their label pattern on the reduced modes.
    struct Entry {
      std::vector<Complex> pat;
      HybridTerm term;
    };
    std::vector<Entry> entries;
    entries.reserve(br.ket.terms.size());
    for (const auto& t : br.ket.terms) {
      Entry e;
      e.pat.reserve(modes.size());
      for (BusMode m : modes) e.pat.push_back(t.bus[m]);
      e.term = t;
      entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return bus_less(a.pat, b.pat); });

    std::vector<std::vector<Complex>> patterns;  // group representatives
    std::vector<HybridKet> parts;
    for (auto& e : entries) {
      // Rewrite the reduced modes' labels on the stored term.
      std::vector<Complex> kept = e.pat;
      rewrite(std::span<Complex>(kept));
      HybridTerm t = std::move(e.term);
      for (std::size_t i = 0; i < modes.size(); ++i) t.bus[modes[i]] = kept[i];
      if (!patterns.empty() && bus_close(patterns.back(), e.pat, kTolAmp)) {
        parts.back().terms.push_back(std::move(t));
      } else {
        patterns.push_back(e.pat);
        HybridKet part;
        part.reg = rho.reg;
        part.terms.push_back(std::move(t));
        parts.push_back(std::move(part));
      }
    }

    const Eigen::Index g = static_cast<Eigen::Index>(parts.size());
    if (g == 0) continue;
    Matrix r(g, g);
    for (Eigen::Index a = 0; a < g; ++a)
      for (Eigen::Index b = 0; b < g; ++b)
        r(a, b) = kernel(std::span<const Complex>(patterns[a]),
                         std::span<const Complex>(patterns[b]));
    r = Complex(0.5, 0.0) * (r + r.adjoint().eval());

    auto mix = mixture_from_components(parts, r);
    for (auto& [w, ket] : mix) {
      total += br.weight * w;
      out.branches.push_back({br.weight * w, std::move(ket)});
    }
  }

  if (total <= 0.0) return {0.0, MixedState{rho.reg, {}}};
  for (auto& b : out.branches) b.weight /= total;
  return {total, merge_branches(std::move(out))};
}

MixedState trace_out_bus(const MixedState& rho, const std::vector<BusMode>& modes) {
  PatternKernel overlap_kernel = [](std::span<const Complex> ket_pat,
                                    std::span<const Complex> bra_pat) {
    Complex f(1.0, 0.0);
    for (std::size_t i = 0; i < ket_pat.size(); ++i)
      f *= coherent_overlap(ket_pat[i], bra_pat[i]);  // ⟨bra|ket⟩
    return f;
  };
  PatternRewrite to_vacuum = [](std::span<Complex> pat) {
    for (auto& v : pat) v = Complex(0.0, 0.0);
  };
  auto [w, red] = reduce_bus_modes(rho, modes, overlap_kernel, to_vacuum);
  if (std::abs(w - total_weight(rho)) > kTolNorm * (1.0 + rho.branches.size()))
    throw std::runtime_error("trace_out_bus: trace not preserved");
  return red;
}

MixedState trace_out_bus(const HybridKet& x, const std::vector<BusMode>& modes) {
  return trace_out_bus(as_mixed(x), modes);
}

MixedState merge_branches(MixedState rho, double tol) {
  MixedState out;
  out.reg = rho.reg;
  for (auto& br : rho.branches) {
    bool joined = false;
    for (auto& kept : out.branches) {
      const double ov = std::abs(inner(kept.ket, br.ket));
      if (std::abs(ov - 1.0) < tol) {
        kept.weight += br.weight;
        joined = true;
        break;
      }
    }
    if (!joined) out.branches.push_back(std::move(br));
  }
  std::stable_sort(out.branches.begin(), out.branches.end(),
                   [](const auto& a, const auto& b) { return a.weight > b.weight; });
  return out;
}

// ------------------------ diagnostics ------------------------

namespace {

std::uint64_t fnv_init() { return 0xcbf29ce484222325ull; }

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
}

void fnv_quantized(std::uint64_t& h, double x) {
  // 1e-12 grid; collapses ±0 and sampling noise below the tolerance ladder.
  const auto q = static_cast<std::int64_t>(std::llround(x * 1e12));
  fnv_bytes(h, &q, sizeof(q));
}

void fnv_ket(std::uint64_t& h, const HybridKet& x) {
  const std::uint64_t n = x.terms.size();
  fnv_bytes(h, &n, sizeof(n));
  for (const auto& t : x.terms) {
    const std::uint64_t np = t.dv.photons.size();
    fnv_bytes(h, &np, sizeof(np));
    for (const auto& p : t.dv.photons) {
      fnv_bytes(h, &p.mode, sizeof(p.mode));
      const std::uint8_t pol = static_cast<std::uint8_t>(p.pol);
      fnv_bytes(h, &pol, sizeof(pol));
    }
    fnv_quantized(h, t.coeff.real());
    fnv_quantized(h, t.coeff.imag());
    for (const auto& v : t.bus) {
      fnv_quantized(h, v.real());
      fnv_quantized(h, v.imag());
    }
  }
}

}  // namespace

std::uint64_t state_checksum(const HybridKet& x) {
  std::uint64_t h = fnv_init();
  fnv_ket(h, canonical(x));
  return h;
}

std::uint64_t state_checksum(const MixedState& rho) {
  std::uint64_t h = fnv_init();
  const std::uint64_t n = rho.branches.size();
  fnv_bytes(h, &n, sizeof(n));
  for (const auto& br : rho.branches) {
    fnv_quantized(h, br.weight);
    fnv_ket(h, canonical(br.ket));
  }
  return h;
}

void validate(const HybridKet& x) {
  if (!x.reg) throw std::invalid_argument("validate: null registry");
  for (const auto& t : x.terms) {
    if (t.bus.size() != x.reg->bus_count())
      throw std::invalid_argument("validate: bus label count mismatch");
    if (!std::isfinite(t.coeff.real()) || !std::isfinite(t.coeff.imag()))
      throw std::invalid_argument("validate: non-finite coefficient");
    for (const auto& v : t.bus) check_label(v, "validate");
    for (std::size_t i = 0; i < t.dv.photons.size(); ++i) {
      if (t.dv.photons[i].mode >= x.reg->dv_count())
        throw std::invalid_argument("validate: unknown photon mode");
      if (i > 0 && t.dv.photons[i - 1].mode >= t.dv.photons[i].mode)
        throw std::invalid_argument("validate: photon modes not strictly sorted");
    }
  }
}

void validate(const MixedState& rho) {
  if (!rho.reg) throw std::invalid_argument("validate: null registry");
  double sum = 0.0;
  for (const auto& br : rho.branches) {
    if (!(br.weight >= -kTolNorm))
      throw std::invalid_argument("validate: negative branch weight");
    require_same_registry(rho.reg, br.ket.reg, "validate");
    validate(br.ket);
    if (std::abs(norm(br.ket) - 1.0) > 1e-9)
      throw std::invalid_argument("validate: branch ket not normalized");
    sum += br.weight;
  }
  if (!rho.branches.empty() && std::abs(sum - 1.0) > 1e-10)
    throw std::invalid_argument("validate: branch weights do not sum to 1");
}

}  // namespace qubus

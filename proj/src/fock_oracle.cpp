// fock_oracle.cpp — implementation of the number-basis cross-check.

#include "qubus/fock_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace qubus {

namespace {

Complex expi(double x) { return {std::cos(x), std::sin(x)}; }

// Independent photon-routing images, written from the optical definitions.
std::vector<std::pair<Complex, DvLabel>> dv_images(const ElementOp& op,
                                                   const DvLabel& dv);

// One photon's weighted destinations under a routing element.
struct Hop {
  Complex factor;
  Photon dest;
};

DvLabel place_or_throw(DvLabel dv, Photon p) {
  auto it = std::lower_bound(dv.photons.begin(), dv.photons.end(), p.mode,
                             [](const Photon& q, DvMode m) { return q.mode < m; });
  if (it != dv.photons.end() && it->mode == p.mode)
    throw std::domain_error("fock_oracle: photon collision outside the space");
  dv.photons.insert(it, p);
  return dv;
}

std::vector<std::pair<Complex, DvLabel>> expand_hops(
    const DvLabel& dv, const std::vector<DvMode>& sources,
    const std::function<std::vector<Hop>(Photon)>& image) {
  DvLabel rest;
  std::vector<Photon> moving;
  for (const auto& p : dv.photons) {
    if (std::find(sources.begin(), sources.end(), p.mode) != sources.end())
      moving.push_back(p);
    else
      rest.photons.push_back(p);
  }
  std::vector<std::pair<Complex, DvLabel>> out{{Complex(1.0, 0.0), rest}};
  for (const Photon& p : moving) {
    std::vector<std::pair<Complex, DvLabel>> next;
    for (const auto& [c, d] : out)
      for (const Hop& h : image(p)) {
        if (h.factor == Complex(0.0, 0.0)) continue;
        next.emplace_back(c * h.factor, place_or_throw(d, h.dest));
      }
    out = std::move(next);
  }
  return out;
}

std::vector<std::pair<Complex, DvLabel>> dv_images(const ElementOp& op,
                                                   const DvLabel& dv) {
  return std::visit(
      [&](const auto& o) -> std::vector<std::pair<Complex, DvLabel>> {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, PbsOp>) {
          std::vector<DvMode> src{o.in1};
          if (o.in2 != PbsOp::kNone) src.push_back(o.in2);
          return expand_hops(dv, src, [&](Photon p) -> std::vector<Hop> {
            const bool first = (p.mode == o.in1);
            const DvMode dh = first ? o.out1 : o.out2;
            const DvMode dvp = first ? o.out2 : o.out1;
            return {{Complex(1.0, 0.0),
                     Photon{p.pol == Pol::H ? dh : dvp, p.pol}}};
          });
        } else if constexpr (std::is_same_v<T, PbsPmOp>) {
          std::vector<DvMode> src{o.in1};
          if (o.in2 != PbsPmOp::kNone) src.push_back(o.in2);
          return expand_hops(dv, src, [&](Photon p) -> std::vector<Hop> {
            const bool first = (p.mode == o.in1);
            const DvMode dp = first ? o.out1 : o.out2;
            const DvMode dm = first ? o.out2 : o.out1;
            const double sm = (p.pol == Pol::H) ? 0.5 : -0.5;
            return {{Complex(0.5, 0.0), Photon{dp, Pol::H}},
                    {Complex(0.5, 0.0), Photon{dp, Pol::V}},
                    {Complex(sm, 0.0), Photon{dm, Pol::H}},
                    {Complex(-sm, 0.0), Photon{dm, Pol::V}}};
          });
        } else if constexpr (std::is_same_v<T, HwpOp>) {
          const double c = std::cos(2.0 * o.angle), s = std::sin(2.0 * o.angle);
          return expand_hops(dv, {o.mode}, [&](Photon p) -> std::vector<Hop> {
            if (p.pol == Pol::H)
              return {{Complex(c, 0.0), Photon{o.mode, Pol::H}},
                      {Complex(s, 0.0), Photon{o.mode, Pol::V}}};
            return {{Complex(s, 0.0), Photon{o.mode, Pol::H}},
                    {Complex(-c, 0.0), Photon{o.mode, Pol::V}}};
          });
        } else if constexpr (std::is_same_v<T, Bs50DvOp>) {
          const double s = 1.0 / std::sqrt(2.0);
          if (dv.occupies(o.c) && dv.occupies(o.d))
            throw std::domain_error(
                "fock_oracle: two photons across a path splitter");
          return expand_hops(dv, {o.c, o.d}, [&](Photon p) -> std::vector<Hop> {
            const double sign = (p.mode == o.c) ? 1.0 : -1.0;
            return {{Complex(s, 0.0), Photon{o.c, p.pol}},
                    {Complex(sign * s, 0.0), Photon{o.d, p.pol}}};
          });
        } else {
          return {{Complex(1.0, 0.0), dv}};
        }
      },
      op);
}

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

// ------------------------ space ------------------------

Eigen::Index FockSpace::dim() const {
  Eigen::Index d = static_cast<Eigen::Index>(dv_basis.size());
  for (std::size_t i = 0; i < buses.size(); ++i) d *= (cutoff + 1);
  return d;
}

Eigen::Index FockSpace::dv_index(const DvLabel& dv) const {
  for (std::size_t i = 0; i < dv_basis.size(); ++i)
    if (dv_basis[i] == dv) return static_cast<Eigen::Index>(i);
  throw std::out_of_range("FockSpace::dv_index: configuration not in basis");
}

int FockSpace::bus_position(BusMode bus) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i] == bus) return static_cast<int>(i);
  throw std::out_of_range("FockSpace::bus_position: bus not represented");
}

Eigen::Index FockSpace::index(Eigen::Index dv, std::span<const int> counts) const {
  Eigen::Index idx = dv;
  for (std::size_t i = 0; i < buses.size(); ++i) idx = idx * (cutoff + 1) + counts[i];
  return idx;
}

int default_cutoff(double max_abs_label) {
  const double g = std::abs(max_abs_label);
  return std::max(40, static_cast<int>(std::ceil(g * g + 10.0 * g + 20.0)));
}

FockSpace build_space(const RegistryPtr& reg,
                      const std::vector<HybridKet>& seeds,
                      const std::vector<ElementOp>& ops,
                      const std::vector<BusMode>& buses, int cutoff) {
  if (buses.size() > 2)
    throw std::invalid_argument("build_space: more than two bus modes");
  if (cutoff < 1) throw std::invalid_argument("build_space: cutoff < 1");
  FockSpace space;
  space.reg = reg;
  space.buses = buses;
  space.cutoff = cutoff;

  std::vector<DvLabel> labels;
  auto add = [&labels](const DvLabel& dv) {
    for (const auto& l : labels)
      if (l == dv) return false;
    labels.push_back(dv);
    return true;
  };
  for (const auto& k : seeds)
    for (const auto& t : k.terms) add(t.dv);
  // Close the configuration set under all op images.
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.size() > 4096)
      throw std::runtime_error("build_space: configuration closure exploded");
    for (const auto& op : ops) {
      const DvLabel current = labels[i];  // labels may reallocate below
      for (const auto& [c, dv] : dv_images(op, current)) add(dv);
    }
  }
  std::sort(labels.begin(), labels.end(), dv_less);
  space.dv_basis = std::move(labels);
  return space;
}

// ------------------------ encode ------------------------

namespace {

// e^{−|γ|²/2} γⁿ/√(n!) for n = 0..cutoff, with a residual guard.
std::vector<Complex> coherent_amps(Complex gamma, int cutoff) {
  std::vector<Complex> a(cutoff + 1);
  a[0] = Complex(std::exp(-0.5 * std::norm(gamma)), 0.0);
  double sum = std::norm(a[0]);
  for (int n = 1; n <= cutoff; ++n) {
    a[n] = a[n - 1] * gamma / std::sqrt(static_cast<double>(n));
    sum += std::norm(a[n]);
  }
  if (1.0 - sum >= 1e-12)
    throw std::domain_error("encode: coherent label truncation residual too large");
  return a;
}

}  // namespace

Vector encode(const FockSpace& space, const HybridKet& x) {
  require_same_registry(space.reg, x.reg, "encode");
  Vector v = Vector::Zero(space.dim());
  const int c = space.cutoff;
  for (const auto& t : x.terms) {
    for (BusMode b = 0; b < static_cast<BusMode>(x.reg->bus_count()); ++b) {
      if (std::find(space.buses.begin(), space.buses.end(), b) !=
          space.buses.end())
        continue;
      if (t.bus[b] != Complex(0.0, 0.0))
        throw std::invalid_argument("encode: unrepresented bus is driven");
    }
    const Eigen::Index d = space.dv_index(t.dv);
    if (space.buses.empty()) {
      v(d) += t.coeff;
      continue;
    }
    std::vector<std::vector<Complex>> amps;
    for (BusMode b : space.buses) amps.push_back(coherent_amps(t.bus[b], c));
    if (space.buses.size() == 1) {
      for (int n = 0; n <= c; ++n) {
        const int counts[] = {n};
        v(space.index(d, counts)) += t.coeff * amps[0][n];
      }
    } else {
      for (int n1 = 0; n1 <= c; ++n1)
        for (int n2 = 0; n2 <= c; ++n2) {
          const int counts[] = {n1, n2};
          v(space.index(d, counts)) += t.coeff * amps[0][n1] * amps[1][n2];
        }
    }
  }
  return v;
}

Complex oracle_overlap(int cutoff, Complex a, Complex b) {
  const auto va = coherent_amps(a, cutoff);
  const auto vb = coherent_amps(b, cutoff);
  Complex acc(0.0, 0.0);
  for (int n = 0; n <= cutoff; ++n) acc += std::conj(vb[n]) * va[n];
  return acc;
}

// ------------------------ unitary action ------------------------

namespace {

// Iterate the flat index as (dv, digit at pos, remainder-stride structure).
struct BusView {
  Eigen::Index outer;   // combined size of indices left of the digit
  Eigen::Index stride;  // stride of the digit
  int levels;           // cutoff + 1

  Eigen::Index at(Eigen::Index o, int n, Eigen::Index r) const {
    return (o * levels + n) * stride + r;
  }
};

BusView bus_view(const FockSpace& s, int pos) {
  const int levels = s.cutoff + 1;
  Eigen::Index stride = 1;
  for (std::size_t i = s.buses.size(); i-- > static_cast<std::size_t>(pos) + 1;)
    stride *= levels;
  Eigen::Index outer = static_cast<Eigen::Index>(s.dv_basis.size());
  for (int i = 0; i < pos; ++i) outer *= levels;
  return {outer, stride, levels};
}

Vector apply_bus_diagonal(const FockSpace& s, int pos, const Vector& v,
                          const std::function<Complex(int)>& f,
                          const std::vector<bool>* dv_mask) {
  const BusView view = bus_view(s, pos);
  const Eigen::Index dv_block = view.outer / static_cast<Eigen::Index>(s.dv_basis.size());
  Vector out = v;
  for (Eigen::Index o = 0; o < view.outer; ++o) {
    if (dv_mask && !(*dv_mask)[static_cast<std::size_t>(o / dv_block)]) continue;
    for (int n = 0; n < view.levels; ++n) {
      const Complex g = f(n);
      for (Eigen::Index r = 0; r < view.stride; ++r) out(view.at(o, n, r)) *= g;
    }
  }
  return out;
}

}  // namespace

Vector oracle_apply(const FockSpace& space, const ElementOp& op, const Vector& v) {
  if (v.size() != space.dim())
    throw std::invalid_argument("oracle_apply: dimension mismatch");

  if (const auto* ph = std::get_if<PhaseOp>(&op)) {
    const int pos = space.bus_position(ph->bus);
    const double phi = ph->phi;
    return apply_bus_diagonal(space, pos, v,
                              [phi](int n) { return expi(n * phi); }, nullptr);
  }
  if (const auto* xp = std::get_if<XpmOp>(&op)) {
    const int pos = space.bus_position(xp->bus);
    const double th = xp->theta;
    std::vector<bool> mask(space.dv_basis.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = space.dv_basis[i].occupies(xp->mode);
    return apply_bus_diagonal(space, pos, v,
                              [th](int n) { return expi(n * th); }, &mask);
  }
  if (const auto* bs = std::get_if<Bs50BusOp>(&op)) {
    if (space.buses.size() != 2)
      throw std::invalid_argument("oracle_apply: bus splitter needs two buses");
    const int pa = space.bus_position(bs->a);
    const int pb = space.bus_position(bs->b);
    const int c = space.cutoff;
    const int levels = c + 1;
    // exp((π/4)(a b† − a† b)) maps labels (γ_a, γ_b) to
    // ((γ_a − γ_b)/√2, (γ_a + γ_b)/√2); built per total-count block from the
    // tridiagonal generator and applied blockwise.
    Vector out = Vector::Zero(v.size());
    const Eigen::Index dvn = static_cast<Eigen::Index>(space.dv_basis.size());
    std::vector<Matrix> blocks(2 * c + 1);
    for (int total = 0; total <= 2 * c; ++total) {
      const int k_lo = std::max(0, total - c), k_hi = std::min(total, c);
      const int m = k_hi - k_lo + 1;
      Matrix h = Matrix::Zero(m, m);  // i·(a b† − a† b) restricted, Hermitian
      for (int k = k_lo; k < k_hi; ++k) {
        // ⟨k, total−k | a b† | k+1, total−k−1⟩ = √((k+1)(total−k))
        const double t = std::sqrt(static_cast<double>(k + 1) *
                                   static_cast<double>(total - k));
        h(k - k_lo, k + 1 - k_lo) = Complex(0.0, t);
        h(k + 1 - k_lo, k - k_lo) = Complex(0.0, -t);
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(h);
      Matrix u = Matrix::Zero(m, m);
      for (int i = 0; i < m; ++i)
        u += expi(-kPi / 4.0 * es.eigenvalues()(i)) *
             (es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint());
      blocks[total] = std::move(u);
    }
    auto flat = [&](Eigen::Index d, int na, int nb) {
      int counts[2];
      counts[pa] = na;
      counts[pb] = nb;
      return space.index(d, counts);
    };
    for (Eigen::Index d = 0; d < dvn; ++d) {
      for (int total = 0; total <= 2 * c; ++total) {
        const int k_lo = std::max(0, total - c), k_hi = std::min(total, c);
        const int m = k_hi - k_lo + 1;
        Vector in_block(m);
        for (int k = k_lo; k <= k_hi; ++k)
          in_block(k - k_lo) = v(flat(d, k, total - k));
        Vector out_block = blocks[total] * in_block;
        for (int k = k_lo; k <= k_hi; ++k)
          out(flat(d, k, total - k)) = out_block(k - k_lo);
      }
    }
    (void)levels;
    return out;
  }

  // Photon-routing ops: rewrite configuration blocks.
  Vector out = Vector::Zero(v.size());
  Eigen::Index block = 1;
  for (std::size_t i = 0; i < space.buses.size(); ++i) block *= (space.cutoff + 1);
  for (std::size_t d = 0; d < space.dv_basis.size(); ++d) {
    const auto images = dv_images(op, space.dv_basis[d]);
    for (const auto& [f, dv] : images) {
      const Eigen::Index td = space.dv_index(dv);
      out.segment(td * block, block) += f * v.segment(d * block, block);
    }
  }
  return out;
}

// ------------------------ loss channel ------------------------

std::vector<Vector> oracle_damp(const FockSpace& space, BusMode bus, double eta,
                                const Vector& v, double prune_eps) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::domain_error("oracle_damp: transmittance outside (0, 1]");
  const int pos = space.bus_position(bus);
  const BusView view = bus_view(space, pos);
  const int c = space.cutoff;
  std::vector<Vector> out;
  for (int j = 0; j <= c; ++j) {  // photons lost
    if (j > 0 && eta == 1.0) break;
    Vector w = Vector::Zero(v.size());
    double mass = 0.0;
    for (int n = j; n <= c; ++n) {
      // ⟨n−j|E_j|n⟩ = √( C(n,j) η^{n−j} (1−η)^j )
      double lc = 0.5 * (log_binom(n, j) + (n - j) * std::log(eta));
      if (j > 0) lc += 0.5 * j * std::log(1.0 - eta);
      const double coef = std::exp(lc);
      for (Eigen::Index o = 0; o < view.outer; ++o)
        for (Eigen::Index r = 0; r < view.stride; ++r) {
          const Complex amp = coef * v(view.at(o, n, r));
          w(view.at(o, n - j, r)) += amp;
          mass += std::norm(amp);
        }
    }
    if (mass > prune_eps) out.push_back(std::move(w));
  }
  return out;
}

std::vector<Vector> oracle_damp(const FockSpace& space,
                                const std::vector<BusMode>& modes, double eta,
                                const Vector& v, double prune_eps) {
  std::vector<Vector> branches{v};
  for (BusMode m : modes) {
    std::vector<Vector> next;
    for (const auto& b : branches) {
      auto sub = oracle_damp(space, m, eta, b, prune_eps);
      next.insert(next.end(), std::make_move_iterator(sub.begin()),
                  std::make_move_iterator(sub.end()));
    }
    branches = std::move(next);
  }
  return branches;
}

double branches_expectation(const std::vector<Vector>& branches,
                            const Vector& probe) {
  double acc = 0.0;
  for (const auto& b : branches) acc += std::norm(probe.dot(b));
  return acc;
}

// ------------------------ detector statistics ------------------------

double oracle_no_click_prob(const FockSpace& space, BusMode bus,
                            const ApdModel& apd, const Vector& v) {
  const int pos = space.bus_position(bus);
  const BusView view = bus_view(space, pos);
  double acc = 0.0;
  for (Eigen::Index o = 0; o < view.outer; ++o)
    for (int n = 0; n < view.levels; ++n) {
      const double w = std::pow(1.0 - apd.eta_d, n);
      for (Eigen::Index r = 0; r < view.stride; ++r)
        acc += w * std::norm(v(view.at(o, n, r)));
    }
  return acc;
}

std::vector<double> oracle_pnr_probs(const FockSpace& space, BusMode bus,
                                     const Vector& v, int n_max) {
  const int pos = space.bus_position(bus);
  const BusView view = bus_view(space, pos);
  std::vector<double> p(n_max + 1, 0.0);
  for (int n = 0; n <= n_max && n < view.levels; ++n)
    for (Eigen::Index o = 0; o < view.outer; ++o)
      for (Eigen::Index r = 0; r < view.stride; ++r)
        p[n] += std::norm(v(view.at(o, n, r)));
  return p;
}

Vector oracle_project_pnr(const FockSpace& space, BusMode bus, int n,
                          const Vector& v) {
  const int pos = space.bus_position(bus);
  const BusView view = bus_view(space, pos);
  if (n < 0 || n >= view.levels)
    throw std::invalid_argument("oracle_project_pnr: count outside cutoff");
  Vector out = Vector::Zero(v.size());
  for (Eigen::Index o = 0; o < view.outer; ++o)
    for (Eigen::Index r = 0; r < view.stride; ++r)
      out(view.at(o, 0, r)) = v(view.at(o, n, r));
  return out;
}

double oracle_reduced_expectation(const FockSpace& space, BusMode bus,
                                  std::span<const double> weights,
                                  const Vector& v, const Vector& probe) {
  const int pos = space.bus_position(bus);
  const BusView view = bus_view(space, pos);
  for (Eigen::Index o = 0; o < view.outer; ++o)
    for (int n = 1; n < view.levels; ++n)
      for (Eigen::Index r = 0; r < view.stride; ++r)
        if (probe(view.at(o, n, r)) != Complex(0.0, 0.0))
          throw std::invalid_argument(
              "oracle_reduced_expectation: probe drives the measured bus");
  double acc = 0.0;
  for (std::size_t n = 0; n < weights.size() &&
                          n < static_cast<std::size_t>(view.levels); ++n) {
    // ⟨probe| Tr_bus(w_n |n⟩⟨n| ρ) |probe⟩ at fixed n: w_n |⟨probe₀|ψ_n⟩|²
    Complex ip(0.0, 0.0);
    for (Eigen::Index o = 0; o < view.outer; ++o)
      for (Eigen::Index r = 0; r < view.stride; ++r)
        ip += std::conj(probe(view.at(o, 0, r))) *
              v(view.at(o, static_cast<int>(n), r));
    acc += weights[n] * std::norm(ip);
  }
  return acc;
}

}  // namespace qubus

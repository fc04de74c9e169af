// elements.cpp — implementation of the optical element maps.

#include "qubus/elements.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qubus {

namespace {

void check_dv(const HybridKet& x, DvMode m, const char* who) {
  if (!x.reg || m >= x.reg->dv_count())
    throw std::invalid_argument(std::string(who) + ": unknown photon mode");
}

void check_bus(const HybridKet& x, BusMode m, const char* who) {
  if (!x.reg || m >= x.reg->bus_count())
    throw std::invalid_argument(std::string(who) + ": unknown bus mode");
}

// One photon's image under a routing element: weighted destinations.
struct Route {
  Complex factor;
  Photon dest;
};

// Insert a photon into a sorted label; throws on a doubly occupied mode.
void place(DvLabel& dv, Photon p, const char* who) {
  auto it = std::lower_bound(dv.photons.begin(), dv.photons.end(), p.mode,
                             [](const Photon& q, DvMode m) { return q.mode < m; });
  if (it != dv.photons.end() && it->mode == p.mode)
    throw std::domain_error(std::string(who) + ": occupied output mode collision");
  dv.photons.insert(it, p);
}

// Apply a per-photon routing table to every term. `moves` maps a source mode
// to the weighted destination list for each polarization; photons in other
// modes stay put. Output ports must not be occupied from elsewhere.
HybridKet route_terms(const HybridKet& x,
                      const std::vector<DvMode>& sources,
                      const std::vector<DvMode>& outputs,
                      const std::function<std::vector<Route>(Photon)>& image,
                      const char* who) {
  HybridKet out;
  out.reg = x.reg;
  for (const auto& t : x.terms) {
    DvLabel rest;                 // photons untouched by the element
    std::vector<Photon> moving;   // photons entering the element
    for (const auto& p : t.dv.photons) {
      if (std::find(sources.begin(), sources.end(), p.mode) != sources.end()) {
        moving.push_back(p);
      } else if (std::find(outputs.begin(), outputs.end(), p.mode) !=
                 outputs.end()) {
        throw std::domain_error(std::string(who) +
                                ": occupied output mode collision");
      } else {
        rest.photons.push_back(p);
      }
    }
    // Expand the (at most two) moving photons' images as a product.
    std::vector<std::pair<Complex, DvLabel>> partial{{t.coeff, rest}};
    for (const Photon& p : moving) {
      std::vector<std::pair<Complex, DvLabel>> next;
      for (const auto& [c, dv] : partial) {
        for (const Route& r : image(p)) {
          if (r.factor == Complex(0.0, 0.0)) continue;
          DvLabel nd = dv;
          place(nd, r.dest, who);
          next.emplace_back(c * r.factor, std::move(nd));
        }
      }
      partial = std::move(next);
    }
    for (auto& [c, dv] : partial) {
      HybridTerm nt;
      nt.coeff = c;
      nt.dv = std::move(dv);
      nt.bus = t.bus;
      out.terms.push_back(std::move(nt));
    }
  }
  return canonical(std::move(out));
}

void check_ports(std::vector<DvMode> used, const char* who) {
  std::sort(used.begin(), used.end());
  if (std::adjacent_find(used.begin(), used.end()) != used.end())
    throw std::invalid_argument(std::string(who) + ": ports must be distinct");
}

}  // namespace

// ------------------------ polarizing beam splitters ------------------------

HybridKet apply_pbs(const HybridKet& x, DvMode in1, DvMode in2, DvMode out1,
                    DvMode out2) {
  check_dv(x, in1, "apply_pbs");
  check_dv(x, out1, "apply_pbs");
  check_dv(x, out2, "apply_pbs");
  std::vector<DvMode> sources{in1};
  std::vector<DvMode> ports{in1, out1, out2};
  if (in2 != PbsOp::kNone) {
    check_dv(x, in2, "apply_pbs");
    sources.push_back(in2);
    ports.push_back(in2);
  }
  check_ports(ports, "apply_pbs");
  auto image = [&](Photon p) -> std::vector<Route> {
    const bool first = (p.mode == in1);
    const DvMode dest_h = first ? out1 : out2;
    const DvMode dest_v = first ? out2 : out1;
    return {{Complex(1.0, 0.0), Photon{p.pol == Pol::H ? dest_h : dest_v, p.pol}}};
  };
  return route_terms(x, sources, {out1, out2}, image, "apply_pbs");
}

HybridKet apply_pbs(const HybridKet& x, DvMode in, DvMode out_h, DvMode out_v) {
  return apply_pbs(x, in, PbsOp::kNone, out_h, out_v);
}

HybridKet apply_pbs_pm(const HybridKet& x, DvMode in1, DvMode in2, DvMode out1,
                       DvMode out2) {
  check_dv(x, in1, "apply_pbs_pm");
  check_dv(x, out1, "apply_pbs_pm");
  check_dv(x, out2, "apply_pbs_pm");
  std::vector<DvMode> sources{in1};
  std::vector<DvMode> ports{in1, out1, out2};
  if (in2 != PbsPmOp::kNone) {
    check_dv(x, in2, "apply_pbs_pm");
    sources.push_back(in2);
    ports.push_back(in2);
  }
  check_ports(ports, "apply_pbs_pm");
  // |H⟩ = (|+⟩+|−⟩)/√2, |V⟩ = (|+⟩−|−⟩)/√2; |+⟩ keeps (H+V)/√2 at the + port,
  // |−⟩ keeps (H−V)/√2 at the − port. Expanded back to H/V storage each image
  // has four entries of weight ±1/2.
  auto image = [&](Photon p) -> std::vector<Route> {
    const bool first = (p.mode == in1);
    const DvMode plus_port = first ? out1 : out2;
    const DvMode minus_port = first ? out2 : out1;
    const double mh = 0.5;                             // |+⟩ component weight
    const double mm = (p.pol == Pol::H) ? 0.5 : -0.5;  // |−⟩ component weight
    return {
        {Complex(mh, 0.0), Photon{plus_port, Pol::H}},
        {Complex(mh, 0.0), Photon{plus_port, Pol::V}},
        {Complex(mm, 0.0), Photon{minus_port, Pol::H}},
        {Complex(-mm, 0.0), Photon{minus_port, Pol::V}},
    };
  };
  return route_terms(x, sources, {out1, out2}, image, "apply_pbs_pm");
}

HybridKet apply_pbs_pm(const HybridKet& x, DvMode in, DvMode out_p, DvMode out_m) {
  return apply_pbs_pm(x, in, PbsPmOp::kNone, out_p, out_m);
}

// ------------------------ wave plate and path splitter ------------------------

HybridKet apply_hwp(const HybridKet& x, DvMode mode, double angle) {
  check_dv(x, mode, "apply_hwp");
  const double c = std::cos(2.0 * angle), s = std::sin(2.0 * angle);
  auto image = [&](Photon p) -> std::vector<Route> {
    if (p.pol == Pol::H)
      return {{Complex(c, 0.0), Photon{mode, Pol::H}},
              {Complex(s, 0.0), Photon{mode, Pol::V}}};
    return {{Complex(s, 0.0), Photon{mode, Pol::H}},
            {Complex(-c, 0.0), Photon{mode, Pol::V}}};
  };
  return route_terms(x, {mode}, {}, image, "apply_hwp");
}

HybridKet apply_bs50_dv(const HybridKet& x, DvMode c, DvMode d) {
  check_dv(x, c, "apply_bs50_dv");
  check_dv(x, d, "apply_bs50_dv");
  check_ports({c, d}, "apply_bs50_dv");
  for (const auto& t : x.terms)
    if (t.dv.occupies(c) && t.dv.occupies(d))
      throw std::domain_error(
          "apply_bs50_dv: more than one photon across the pair");
  const double s = 1.0 / std::sqrt(2.0);
  auto image = [&](Photon p) -> std::vector<Route> {
    const double sign = (p.mode == c) ? 1.0 : -1.0;
    return {{Complex(s, 0.0), Photon{c, p.pol}},
            {Complex(sign * s, 0.0), Photon{d, p.pol}}};
  };
  // Both paths are sources and outputs of the same element.
  HybridKet out;
  out.reg = x.reg;
  for (const auto& t : x.terms) {
    const Photon* pc = t.dv.find(c);
    const Photon* pd = t.dv.find(d);
    const Photon* moving = pc ? pc : pd;
    if (!moving) {
      out.terms.push_back(t);
      continue;
    }
    DvLabel rest;
    for (const auto& p : t.dv.photons)
      if (p.mode != moving->mode) rest.photons.push_back(p);
    for (const Route& r : image(*moving)) {
      HybridTerm nt;
      nt.coeff = t.coeff * r.factor;
      nt.dv = rest;
      place(nt.dv, r.dest, "apply_bs50_dv");
      nt.bus = t.bus;
      out.terms.push_back(std::move(nt));
    }
  }
  return canonical(std::move(out));
}

// ------------------------ bus optics ------------------------

HybridKet apply_bs50_bus(const HybridKet& x, BusMode a, BusMode b) {
  check_bus(x, a, "apply_bs50_bus");
  check_bus(x, b, "apply_bs50_bus");
  if (a == b)
    throw std::invalid_argument("apply_bs50_bus: ports must be distinct");
  const double s = 1.0 / std::sqrt(2.0);
  HybridKet out = x;
  for (auto& t : out.terms) {
    const Complex va = t.bus[a], vb = t.bus[b];
    t.bus[a] = s * (va - vb);
    t.bus[b] = s * (va + vb);
  }
  return canonical(std::move(out));
}

HybridKet apply_phase(const HybridKet& x, BusMode bus, double phi) {
  check_bus(x, bus, "apply_phase");
  const Complex f(std::cos(phi), std::sin(phi));
  HybridKet out = x;
  for (auto& t : out.terms) t.bus[bus] *= f;
  return canonical(std::move(out));
}

HybridKet apply_xpm(const HybridKet& x, DvMode mode, BusMode bus, double theta) {
  check_dv(x, mode, "apply_xpm");
  check_bus(x, bus, "apply_xpm");
  const Complex f(std::cos(theta), std::sin(theta));
  HybridKet out = x;
  for (auto& t : out.terms)
    if (t.dv.occupies(mode)) t.bus[bus] *= f;
  return canonical(std::move(out));
}

// ------------------------ descriptor forms ------------------------

HybridKet apply(const HybridKet& x, const ElementOp& op) {
  return std::visit(
      [&](const auto& o) -> HybridKet {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, PbsOp>)
          return apply_pbs(x, o.in1, o.in2, o.out1, o.out2);
        else if constexpr (std::is_same_v<T, PbsPmOp>)
          return apply_pbs_pm(x, o.in1, o.in2, o.out1, o.out2);
        else if constexpr (std::is_same_v<T, HwpOp>)
          return apply_hwp(x, o.mode, o.angle);
        else if constexpr (std::is_same_v<T, Bs50DvOp>)
          return apply_bs50_dv(x, o.c, o.d);
        else if constexpr (std::is_same_v<T, Bs50BusOp>)
          return apply_bs50_bus(x, o.a, o.b);
        else if constexpr (std::is_same_v<T, PhaseOp>)
          return apply_phase(x, o.bus, o.phi);
        else
          return apply_xpm(x, o.mode, o.bus, o.theta);
      },
      op);
}

MixedState apply(const MixedState& rho, const ElementOp& op) {
  MixedState out;
  out.reg = rho.reg;
  out.branches.reserve(rho.branches.size());
  for (const auto& br : rho.branches)
    out.branches.push_back({br.weight, apply(br.ket, op)});
  return out;
}

HybridKet apply_all(HybridKet x, const std::vector<ElementOp>& ops) {
  // Qualified: ADL on std::variant would otherwise pick std::apply.
  for (const auto& op : ops) x = qubus::apply(x, op);
  return x;
}

MixedState apply_all(MixedState rho, const std::vector<ElementOp>& ops) {
  for (const auto& op : ops) rho = qubus::apply(rho, op);
  return rho;
}

}  // namespace qubus

// registry.hpp — named mode sets shared by all states of one simulation.
//
// A registry fixes, once, the list of single-photon spatial modes and the
// list of coherent bus modes a simulation uses. States carry a shared
// pointer to their registry; operations require both operands to reference
// the same registry object.

#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qubus {

using DvMode = std::uint8_t;   // spatial mode that can hold one photon
using BusMode = std::uint8_t;  // mode that carries one coherent label

class Registry {
 public:
  DvMode add_dv_mode(std::string name) {
    check_new(name);
    dv_names_.push_back(std::move(name));
    if (dv_names_.size() > 255)
      throw std::length_error("Registry: too many photon modes");
    return static_cast<DvMode>(dv_names_.size() - 1);
  }

  BusMode add_bus_mode(std::string name) {
    check_new(name);
    bus_names_.push_back(std::move(name));
    if (bus_names_.size() > 255)
      throw std::length_error("Registry: too many bus modes");
    return static_cast<BusMode>(bus_names_.size() - 1);
  }

  std::size_t dv_count() const { return dv_names_.size(); }
  std::size_t bus_count() const { return bus_names_.size(); }

  const std::string& dv_name(DvMode m) const {
    if (m >= dv_names_.size())
      throw std::out_of_range("Registry::dv_name: unknown mode");
    return dv_names_[m];
  }
  const std::string& bus_name(BusMode m) const {
    if (m >= bus_names_.size())
      throw std::out_of_range("Registry::bus_name: unknown mode");
    return bus_names_[m];
  }

  DvMode dv_mode(std::string_view name) const {
    for (std::size_t i = 0; i < dv_names_.size(); ++i)
      if (dv_names_[i] == name) return static_cast<DvMode>(i);
    throw std::out_of_range("Registry::dv_mode: no mode named " +
                            std::string(name));
  }
  BusMode bus_mode(std::string_view name) const {
    for (std::size_t i = 0; i < bus_names_.size(); ++i)
      if (bus_names_[i] == name) return static_cast<BusMode>(i);
    throw std::out_of_range("Registry::bus_mode: no mode named " +
                            std::string(name));
  }

 private:
  void check_new(const std::string& name) const {
    if (name.empty()) throw std::invalid_argument("Registry: empty mode name");
    for (const auto& n : dv_names_)
      if (n == name) throw std::invalid_argument("Registry: duplicate mode name " + name);
    for (const auto& n : bus_names_)
      if (n == name) throw std::invalid_argument("Registry: duplicate mode name " + name);
  }

  std::vector<std::string> dv_names_;
  std::vector<std::string> bus_names_;
};

using RegistryPtr = std::shared_ptr<const Registry>;

inline void require_same_registry(const RegistryPtr& a, const RegistryPtr& b,
                                  const char* who) {
  if (!a || !b || a.get() != b.get())
    throw std::invalid_argument(std::string(who) +
                                ": operands use different registries");
}

}  // namespace qubus

#pragma once

// Optical materials: dispersionless constants by default, optional tabulated
// (wavelength, index) data with linear interpolation.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "resforge/common.hpp"

namespace resforge::geometry {

struct Material {
  std::string name;
  double constant_index = 1.0;
  // Optional dispersion table: (wavelength um, index), strictly increasing
  // wavelengths. When present it overrides constant_index.
  std::vector<std::pair<double, double>> table;

  void validate() const {
    if (table.empty()) {
      if (constant_index < 1.0)
        throw DomainError("material '" + name + "': refractive index must be >= 1");
      return;
    }
    double prev = -1.0;
    for (const auto& [lam, n] : table) {
      if (lam <= prev)
        throw DomainError("material '" + name + "': table wavelengths must be strictly increasing");
      if (n < 1.0)
        throw DomainError("material '" + name + "': refractive index must be >= 1");
      prev = lam;
    }
  }

  // Index at a wavelength. Tabulated materials interpolate linearly and are
  // exact at table nodes; sampling outside the table range is an error.
  double index_at(double wavelength_um) const {
    if (table.empty()) return constant_index;
    if (wavelength_um < table.front().first || wavelength_um > table.back().first)
      throw DomainError("material '" + name + "': wavelength " + format_double(wavelength_um) +
                        " um outside table range [" + format_double(table.front().first) + ", " +
                        format_double(table.back().first) + "]");
    for (std::size_t i = 0; i + 1 < table.size(); ++i) {
      const auto& [l0, n0] = table[i];
      const auto& [l1, n1] = table[i + 1];
      if (wavelength_um == l0) return n0;
      if (wavelength_um <= l1) {
        if (wavelength_um == l1) return n1;
        const double t = (wavelength_um - l0) / (l1 - l0);
        return n0 + t * (n1 - n0);
      }
    }
    return table.back().second;
  }
};

// Registry of named materials. Starts from the built-in visible-range set;
// user entries may override the defaults.
class MaterialDb {
 public:
  static MaterialDb builtins() {
    MaterialDb db;
    db.add({"air", 1.0, {}});
    db.add({"TiO2", 2.35, {}});
    db.add({"diamond", 2.40, {}});
    db.add({"fused_silica", 1.45, {}});
    db.add({"HSQ", 1.41, {}});
    db.add({"Si", 3.50, {}});
    return db;
  }

  void add(Material m) {
    m.validate();
    materials_[m.name] = std::move(m);
  }

  bool contains(const std::string& name) const { return materials_.count(name) != 0; }

  const Material& get(const std::string& name) const {
    auto it = materials_.find(name);
    if (it == materials_.end()) throw DomainError("unknown material '" + name + "'");
    return it->second;
  }

  double lookup(const std::string& name, double wavelength_um) const {
    return get(name).index_at(wavelength_um);
  }

 private:
  std::map<std::string, Material> materials_;
};

inline double material_lookup(const std::string& name, double wavelength_um) {
  static const MaterialDb db = MaterialDb::builtins();
  return db.lookup(name, wavelength_um);
}

}  // namespace resforge::geometry

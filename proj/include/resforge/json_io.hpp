#pragma once

// JSON serialization of results, strict experiment-config ingestion (unknown
// keys are errors, reported with their full path), platform-stable config
// hashing and the atomic run manifest.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "resforge/analysis.hpp"
#include "resforge/cavity.hpp"
#include "resforge/common.hpp"
#include "resforge/geometry.hpp"
#include "resforge/layout.hpp"
#include "resforge/modes.hpp"
#include "resforge/spectrum.hpp"
#include "resforge/version.hpp"

namespace resforge::io {

using nlohmann::json;

// ---- result records ----

inline json to_json(const analysis::ResonanceFit& f) {
  return json{{"kind", "resonance_fit"},
              {"lambda0_nm", f.lambda0_um * 1e3},
              {"fwhm_nm", f.fwhm_um * 1e3},
              {"q", f.q},
              {"amplitude", f.amplitude},
              {"baseline", f.baseline},
              {"rms_residual", f.rms_residual},
              {"lower_bound_only", f.lower_bound_only}};
}

inline analysis::ResonanceFit fit_from_json(const json& j) {
  analysis::ResonanceFit f;
  f.lambda0_um = j.at("lambda0_nm").get<double>() * 1e-3;
  f.fwhm_um = j.at("fwhm_nm").get<double>() * 1e-3;
  f.q = j.at("q").get<double>();
  f.amplitude = j.value("amplitude", 0.0);
  f.baseline = j.value("baseline", 0.0);
  f.rms_residual = j.value("rms_residual", 0.0);
  f.lower_bound_only = j.value("lower_bound_only", false);
  return f;
}

inline json to_json(const analysis::EnsembleStats& s) {
  return json{{"kind", "ensemble_stats"},
              {"mean_lambda0_nm", s.mean_lambda0_nm},
              {"std_lambda0_nm", s.std_lambda0_nm},
              {"mean_q", s.mean_q},
              {"n_devices", s.n_devices},
              {"q_lower_bound", s.q_lower_bound},
              {"single_sample", s.single_sample}};
}

inline json to_json(const analysis::ProcessPlan& p) {
  return json{{"kind", "process_plan"},
              {"ald_cycles", p.ald_cycles},
              {"tio2_etch_time_s", {p.tio2_etch_time_min_s, p.tio2_etch_time_max_s}},
              {"pmma_descum_removal_nm", p.pmma_descum_removal_nm},
              {"membrane_etch_time_s", {p.membrane_etch_time_min_s, p.membrane_etch_time_max_s}}};
}

inline json to_json(const Spectrum& s) {
  json wl = json::array(), in = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    wl.push_back(s.wavelength_um[i] * 1e3);
    in.push_back(s.intensity[i]);
  }
  return json{{"kind", "spectrum"}, {"wavelength_nm", wl}, {"intensity", in}};
}

inline Spectrum spectrum_from_json(const json& j) {
  Spectrum s;
  const auto& wl = j.at("wavelength_nm");
  const auto& in = j.at("intensity");
  if (wl.size() != in.size()) throw DomainError("spectrum JSON: array size mismatch");
  for (std::size_t i = 0; i < wl.size(); ++i)
    s.push_back(wl[i].get<double>() * 1e-3, in[i].get<double>());
  s.validate();
  return s;
}

inline json to_json(const layout::LayoutDocument& doc) {
  json polys = json::array();
  for (const auto& p : doc.polygons) {
    json pts = json::array();
    for (const auto& v : p.points) pts.push_back({v[0], v[1]});
    polys.push_back(json{{"layer", p.layer}, {"points", pts}});
  }
  return json{{"kind", "layout"},
              {"units", "um"},
              {"bbox", {doc.bbox_w_um, doc.bbox_h_um}},
              {"polygons", polys},
              {"warnings", doc.warnings}};
}

inline layout::LayoutDocument layout_from_json(const json& j) {
  layout::LayoutDocument doc;
  if (j.value("units", "um") != std::string("um"))
    throw DomainError("layout JSON: units must be um");
  doc.bbox_w_um = j.at("bbox").at(0).get<double>();
  doc.bbox_h_um = j.at("bbox").at(1).get<double>();
  for (const auto& p : j.at("polygons")) {
    layout::LayoutDocument::Polygon poly;
    poly.layer = p.at("layer").get<std::string>();
    for (const auto& v : p.at("points")) poly.points.push_back({v.at(0), v.at(1)});
    doc.polygons.push_back(std::move(poly));
  }
  return doc;
}

inline json to_json(const modes::ModeSolution& m, double n_g = 0.0) {
  json conf = json::object();
  for (const auto& [name, frac] : m.confinement) conf[name] = frac;
  json out{{"kind", "mode"},
           {"n_eff", m.n_eff},
           {"wavelength_nm", m.wavelength_um * 1e3},
           {"polarization", m.polarization == modes::ModePolarization::TELike ? "TE" : "TM"},
           {"confinement", conf},
           {"residual", m.residual}};
  if (n_g > 0) out["n_g"] = n_g;
  return out;
}

inline json to_json(const resonator::CavityResult& r) {
  return json{{"kind", "cavity_resonance"},
              {"lambda0_nm", r.lambda0_um * 1e3},
              {"q", r.q},
              {"q_ringdown", r.q_ringdown},
              {"q_consistent", r.q_consistent},
              {"ringdown_tau_um", r.ringdown_tau},
              {"ringdown_r_squared", r.ringdown_r2},
              {"fit", to_json(r.spectral_fit)},
              {"steps", r.steps},
              {"runtime_seconds", r.runtime_seconds},
              {"warnings", r.warnings}};
}

// ---- config hash and manifest ----

// FNV-1a over the canonical dump (nlohmann stores object keys sorted, dump
// uses no whitespace), so the hash is key-order and formatting independent.
inline std::string config_hash(const json& j) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return std::string(buf);
}

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> outputs;   // name -> path
  std::map<std::string, double> timings_ms;
};

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + tmp + "'");
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  json j{{"config_hash", m.config_hash},
         {"toolkit_version", version_string},
         {"outputs", m.outputs},
         {"timings_ms", m.timings_ms}};
  write_text_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

// ---- experiment configuration (strict schema) ----

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& path) {
  if (!obj.is_object()) throw DomainError("config: " + path + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw DomainError("config: unknown key at " + path + "." + key);
}

inline double get_number(const json& obj, const std::string& key, const std::string& path,
                         double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number())
    throw DomainError("config: " + path + "." + key + " must be a number");
  return obj.at(key).get<double>();
}

inline int get_int(const json& obj, const std::string& key, const std::string& path,
                   int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_integer())
    throw DomainError("config: " + path + "." + key + " must be an integer");
  return obj.at(key).get<int>();
}

}  // namespace detail

struct SimulationSettings {
  double dx_um = 0.02;
  double courant = 0.5;
  int pml_thickness = 12;
  double pml_order = 3.0;
  double pml_sigma_scale = 0.8;
  long duration_steps = 0;
  double duration_time = 0.0;
  int workers = 0;
};

struct ExperimentConfig {
  geometry::DeviceSpec device;
  geometry::LayerStack stack;
  geometry::MaterialDb materials = geometry::MaterialDb::builtins();
  std::string device_material = "TiO2";
  SimulationSettings simulation;
  std::string task = "cavity";
  json task_params = json::object();
  std::string output_directory = "resforge_out";
  std::string hash;  // canonical config hash
};

inline geometry::DeviceSpec parse_device(const json& d, const std::string& path) {
  const std::string type = d.value("type", "none");
  if (type == "none") {
    detail::reject_unknown_keys(d, {"type"}, path);
    return geometry::EmptyDevice{};
  }
  if (type == "ring") {
    detail::reject_unknown_keys(d,
                                {"type", "radius_um", "waveguide_width_um",
                                 "waveguide_height_um", "gap_1_um", "gap_2_um", "bus_width_um"},
                                path);
    geometry::RingSpec s;
    s.radius_um = detail::get_number(d, "radius_um", path, s.radius_um);
    s.waveguide_width_um = detail::get_number(d, "waveguide_width_um", path, s.waveguide_width_um);
    s.waveguide_height_um =
        detail::get_number(d, "waveguide_height_um", path, s.waveguide_height_um);
    s.gap_1_um = detail::get_number(d, "gap_1_um", path, s.gap_1_um);
    s.gap_2_um = detail::get_number(d, "gap_2_um", path, s.gap_2_um);
    s.bus_width_um = detail::get_number(d, "bus_width_um", path, s.bus_width_um);
    s.validate();
    return s;
  }
  if (type == "phc_cavity") {
    detail::reject_unknown_keys(
        d,
        {"type", "waveguide_width_um", "waveguide_height_um", "fin_width_um", "fin_length_um",
         "mirror_pitch_um", "n_mirror_fins", "taper_fraction", "n_taper_fins"},
        path);
    geometry::PhcCavitySpec s;
    s.waveguide_width_um = detail::get_number(d, "waveguide_width_um", path, s.waveguide_width_um);
    s.waveguide_height_um =
        detail::get_number(d, "waveguide_height_um", path, s.waveguide_height_um);
    s.fin_width_um = detail::get_number(d, "fin_width_um", path, s.fin_width_um);
    s.fin_length_um = detail::get_number(d, "fin_length_um", path, s.fin_length_um);
    s.mirror_pitch_um = detail::get_number(d, "mirror_pitch_um", path, s.mirror_pitch_um);
    s.n_mirror_fins = detail::get_int(d, "n_mirror_fins", path, s.n_mirror_fins);
    s.taper_fraction = detail::get_number(d, "taper_fraction", path, s.taper_fraction);
    s.n_taper_fins = detail::get_int(d, "n_taper_fins", path, s.n_taper_fins);
    s.validate();
    return s;
  }
  if (type == "grating") {
    detail::reject_unknown_keys(
        d, {"type", "period_um", "duty_cycle", "n_teeth", "width_um", "height_um"}, path);
    geometry::GratingSpec s;
    s.period_um = detail::get_number(d, "period_um", path, s.period_um);
    s.duty_cycle = detail::get_number(d, "duty_cycle", path, s.duty_cycle);
    s.n_teeth = detail::get_int(d, "n_teeth", path, s.n_teeth);
    s.width_um = detail::get_number(d, "width_um", path, s.width_um);
    s.height_um = detail::get_number(d, "height_um", path, s.height_um);
    s.validate();
    return s;
  }
  throw DomainError("config: " + path + ".type must be one of none|ring|phc_cavity|grating");
}

inline ExperimentConfig parse_experiment_config(const json& j) {
  detail::reject_unknown_keys(
      j, {"device", "stack", "materials", "simulation", "task", "output_directory",
          "device_material"},
      "$");
  ExperimentConfig cfg;
  cfg.hash = config_hash(j);

  if (j.contains("materials")) {
    if (!j.at("materials").is_array()) throw DomainError("config: $.materials must be an array");
    std::size_t mi = 0;
    for (const auto& m : j.at("materials")) {
      const std::string path = "$.materials[" + std::to_string(mi++) + "]";
      detail::reject_unknown_keys(m, {"name", "index", "table"}, path);
      geometry::Material mat;
      mat.name = m.value("name", "");
      if (mat.name.empty()) throw DomainError("config: " + path + ".name is required");
      if (m.contains("index")) mat.constant_index = m.at("index").get<double>();
      if (m.contains("table"))
        for (const auto& row : m.at("table"))
          mat.table.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
      mat.validate();
      cfg.materials.add(mat);
    }
  }

  cfg.device_material = j.value("device_material", "TiO2");
  if (!cfg.materials.contains(cfg.device_material))
    throw DomainError("config: $.device_material names an unknown material");

  if (j.contains("device")) cfg.device = parse_device(j.at("device"), "$.device");

  if (j.contains("stack")) {
    const auto& st = j.at("stack");
    detail::reject_unknown_keys(st, {"ambient", "layers"}, "$.stack");
    const std::string ambient = st.value("ambient", "air");
    cfg.stack.ambient = cfg.materials.get(ambient);
    if (st.contains("layers")) {
      std::size_t li = 0;
      for (const auto& l : st.at("layers")) {
        const std::string path = "$.stack.layers[" + std::to_string(li++) + "]";
        detail::reject_unknown_keys(l, {"material", "thickness_um"}, path);
        geometry::LayerStack::Layer layer;
        layer.material = cfg.materials.get(l.at("material").get<std::string>());
        layer.thickness_um = detail::get_number(l, "thickness_um", path, 0.0);
        cfg.stack.layers.push_back(std::move(layer));
      }
    }
    cfg.stack.validate();
  }

  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    detail::reject_unknown_keys(s,
                                {"dx_um", "courant", "pml_thickness", "pml_order",
                                 "pml_sigma_scale", "duration_steps", "duration_time", "workers"},
                                "$.simulation");
    cfg.simulation.dx_um = detail::get_number(s, "dx_um", "$.simulation", cfg.simulation.dx_um);
    cfg.simulation.courant =
        detail::get_number(s, "courant", "$.simulation", cfg.simulation.courant);
    cfg.simulation.pml_thickness =
        detail::get_int(s, "pml_thickness", "$.simulation", cfg.simulation.pml_thickness);
    cfg.simulation.pml_order =
        detail::get_number(s, "pml_order", "$.simulation", cfg.simulation.pml_order);
    cfg.simulation.pml_sigma_scale =
        detail::get_number(s, "pml_sigma_scale", "$.simulation", cfg.simulation.pml_sigma_scale);
    cfg.simulation.duration_steps =
        detail::get_int(s, "duration_steps", "$.simulation",
                        static_cast<int>(cfg.simulation.duration_steps));
    cfg.simulation.duration_time =
        detail::get_number(s, "duration_time", "$.simulation", cfg.simulation.duration_time);
    cfg.simulation.workers = detail::get_int(s, "workers", "$.simulation", 0);
  }

  if (j.contains("task")) {
    const auto& t = j.at("task");
    if (!t.is_object() || !t.contains("name"))
      throw DomainError("config: $.task must be an object with a name");
    cfg.task = t.at("name").get<std::string>();
    cfg.task_params = t;
    cfg.task_params.erase("name");
    if (cfg.task != "cavity" && cfg.task != "reflectance" && cfg.task != "fields")
      throw DomainError("config: $.task.name must be one of cavity|reflectance|fields");
  }

  cfg.output_directory = j.value("output_directory", cfg.output_directory);
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DomainError("JSON parse error in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace resforge::io

#pragma once

// Run configuration: a nested YAML document. Every key is optional; defaults
// reproduce the 2 tau = 500 us, I_max = 10 mA localisation scenario.
// Unknown keys are rejected with their line and column.

#include "nvfim/acquisition.hpp"
#include "nvfim/common.hpp"
#include "nvfim/field_model.hpp"
#include "nvfim/metrology.hpp"
#include "nvfim/reconstruction.hpp"
#include "nvfim/spin_dynamics.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>

namespace nvfim {

struct MaskConfig {
  std::string strategy = "full";  // full | stride | blocks
  std::size_t stride = 1;
  std::size_t blocks = 1;
  std::size_t width = 1;

  MaskStrategy to_strategy() const {
    if (strategy == "stride") return StrideSampling{stride};
    if (strategy == "blocks") return BlockSampling{blocks, width};
    return FullSampling{};
  }
};

struct ReconstructionConfig {
  Window window = Window::None;
  int zero_pad_factor = 4;
  double fit_half_window_pixels = 1.5;
};

struct SensitivityConfig {
  double alpha = 0.08;
  double beta = 0.02;
  double sigma_s = 0.06;
  /// Defaults to the sequence total time when absent.
  std::optional<double> evolution_time;
  long long n_averages = 1000000;
  EvolutionTimeConvention convention = EvolutionTimeConvention::Total;
};

struct CalibrationConfig {
  std::string samples_csv;  // relative to the config file
  Vec3 reference = Vec3::Zero();
  double curve_half_span = 5.0;  // um, gradient curve extent along the imaging axis
  std::size_t curve_points = 201;
  bool fit_lateral = false;
};

struct RunConfig {
  NvCenter nv;
  NvAxis nv_axis = NvAxis::from(Vec3(std::sqrt(2.0 / 3.0), 0.0, std::sqrt(1.0 / 3.0)));
  MicrowireModel wire;
  MaskConfig mask;
  AcquisitionPlan plan;  // sequence, waveform, drift, noise, origin live here
  ReconstructionConfig reconstruction;
  SensitivityConfig sensitivity;
  CalibrationConfig calibration;
  std::string output_dir = "out";
  std::filesystem::path source_dir;

  RunConfig() {
    nv.x_nm = 100.0;
    wire.anchor_point = Vec3(0.0, 0.0, 1.882027149471388);
    wire.direction = Vec3::UnitY();
    wire.current = 1.0;
    wire.polarity = -1;
    plan.sequence = EchoSequence::symmetric(500.0);
    plan.waveform_template.shape = WaveformShape::Sine;
    plan.waveform_template.period = 250.0;
    plan.waveform_template.active_fraction =
        active_fraction_for_efficiency(WaveformShape::Sine, 0.5003);
    plan.gradient_per_mA = 0.326;
  }

  /// The plan with the mask materialised and the NV axis copied in.
  AcquisitionPlan resolved_plan() const {
    AcquisitionPlan p = plan;
    p.nv_axis = nv_axis;
    p.mask = mask.strategy == "full" ? Mask{} : make_undersampling_mask(p.n_points, mask.to_strategy());
    p.waveform_template.amplitude_current = p.i_max;
    return p;
  }

  void validate() const {
    try {
      nv.validate();
      nv_axis.validate();
      wire.validate();
      require(mask.strategy == "full" || mask.strategy == "stride" || mask.strategy == "blocks",
              ErrorCode::InvalidArgument, "plan.mask.strategy must be full, stride or blocks");
      plan.validate();
      (void)resolved_plan();
      require(reconstruction.zero_pad_factor >= 1, ErrorCode::InvalidArgument,
              "reconstruction.zero_pad_factor must be >= 1");
      require(reconstruction.fit_half_window_pixels > 0.0, ErrorCode::InvalidArgument,
              "reconstruction.fit_half_window_pixels must be > 0");
      require(sensitivity.alpha > 0.0, ErrorCode::InvalidArgument, "sensitivity.alpha must be > 0");
      require(sensitivity.beta > 0.0, ErrorCode::InvalidArgument, "sensitivity.beta must be > 0");
      require(sensitivity.sigma_s > 0.0, ErrorCode::InvalidArgument,
              "sensitivity.sigma_s must be > 0");
      require(!sensitivity.evolution_time || *sensitivity.evolution_time > 0.0,
              ErrorCode::InvalidArgument, "sensitivity.evolution_time_us must be > 0");
      require(sensitivity.n_averages > 0, ErrorCode::InvalidArgument,
              "sensitivity.n_averages must be > 0");
      require(calibration.curve_points >= 2, ErrorCode::InvalidArgument,
              "calibration.curve_points must be >= 2");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::EmptyMask)
        fail(ErrorCode::ValidationError, e.what());
      throw;
    }
  }
};

namespace config_detail {

inline std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.is_null()) return "";
  return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

inline void check_keys(const YAML::Node& node, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!node) return;
  if (!node.IsMap())
    fail(ErrorCode::ValidationError, "'" + path + "' must be a mapping" + where(node));
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key))
      fail(ErrorCode::ValidationError,
           "unknown key '" + (path.empty() ? key : path + "." + key) + "'" + where(kv.first));
  }
}

template <typename T>
void read(const YAML::Node& parent, const char* key, const std::string& path, T& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception&) {
    fail(ErrorCode::ValidationError,
         "'" + path + "." + key + "' has the wrong type" + where(n));
  }
}

inline void read_vec(const YAML::Node& parent, const char* key, const std::string& path,
                     Vec3& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  if (!n.IsSequence() || n.size() != 3)
    fail(ErrorCode::ValidationError, "'" + path + "." + key + "' must be a 3-element list" + where(n));
  try {
    out = Vec3(n[0].as<double>(), n[1].as<double>(), n[2].as<double>());
  } catch (const YAML::Exception&) {
    fail(ErrorCode::ValidationError, "'" + path + "." + key + "' must hold numbers" + where(n));
  }
}

}  // namespace config_detail

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  using namespace config_detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    fail(ErrorCode::ParseError, source + ": parse error at line " + std::to_string(e.mark.line + 1) +
                                    ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  RunConfig c;
  if (!root || root.IsNull()) {
    c.validate();
    return c;
  }
  check_keys(root, "", {"nv", "wire", "sequence", "waveform", "plan", "drift", "current_noise",
                        "reconstruction", "sensitivity", "calibration", "output"});

  if (auto n = root["nv"]) {
    check_keys(n, "nv", {"x_nm", "position_um", "t2_us", "stretch_p", "contrast_alpha",
                         "yield_beta", "axis"});
    read(n, "x_nm", "nv", c.nv.x_nm);
    read_vec(n, "position_um", "nv", c.nv.position);
    read(n, "t2_us", "nv", c.nv.t2);
    read(n, "stretch_p", "nv", c.nv.stretch_p);
    read(n, "contrast_alpha", "nv", c.nv.contrast_alpha);
    read(n, "yield_beta", "nv", c.nv.yield_beta);
    if (n["axis"]) {
      Vec3 a;
      read_vec(n, "axis", "nv", a);
      if (!(a.norm() > 0.0)) fail(ErrorCode::ValidationError, "'nv.axis' must be nonzero");
      c.nv_axis = NvAxis::from(a);
    }
  }
  if (auto n = root["wire"]) {
    check_keys(n, "wire", {"anchor_um", "direction", "current_mA", "polarity"});
    read_vec(n, "anchor_um", "wire", c.wire.anchor_point);
    Vec3 d = c.wire.direction;
    read_vec(n, "direction", "wire", d);
    if (!(d.norm() > 0.0)) fail(ErrorCode::ValidationError, "'wire.direction' must be nonzero");
    c.wire.direction = d.normalized();
    read(n, "current_mA", "wire", c.wire.current);
    read(n, "polarity", "wire", c.wire.polarity);
  }
  if (auto n = root["sequence"]) {
    check_keys(n, "sequence", {"total_time_us", "pi_pulse_time_us", "sync_offset_us",
                               "pi_pulse_fidelity"});
    read(n, "total_time_us", "sequence", c.plan.sequence.total_time);
    c.plan.sequence.pi_pulse_time = c.plan.sequence.total_time / 2.0;
    read(n, "pi_pulse_time_us", "sequence", c.plan.sequence.pi_pulse_time);
    read(n, "sync_offset_us", "sequence", c.plan.sequence.sync_offset);
    read(n, "pi_pulse_fidelity", "sequence", c.plan.sequence.pi_pulse_fidelity);
  }
  if (auto n = root["waveform"]) {
    check_keys(n, "waveform", {"shape", "period_us", "active_fraction", "efficiency",
                               "antisymmetric"});
    auto& wf = c.plan.waveform_template;
    std::string shape = to_string(wf.shape);
    read(n, "shape", "waveform", shape);
    if (shape == "sine") wf.shape = WaveformShape::Sine;
    else if (shape == "rectangular") wf.shape = WaveformShape::Rectangular;
    else fail(ErrorCode::ValidationError, "'waveform.shape' must be sine or rectangular" + where(n["shape"]));
    read(n, "period_us", "waveform", wf.period);
    if (n["active_fraction"] && n["efficiency"])
      fail(ErrorCode::ValidationError,
           "'waveform.active_fraction' and 'waveform.efficiency' are mutually exclusive" + where(n));
    if (n["efficiency"]) {
      double w = 0.0;
      read(n, "efficiency", "waveform", w);
      wf.active_fraction = active_fraction_for_efficiency(wf.shape, w);
    } else if (shape == "rectangular" && !n["active_fraction"]) {
      wf.active_fraction = 1.0;
    }
    read(n, "active_fraction", "waveform", wf.active_fraction);
    read(n, "antisymmetric", "waveform", wf.antisymmetric);
  }
  if (auto n = root["plan"]) {
    check_keys(n, "plan", {"i_max_mA", "n_points", "mask", "shots", "shot_noise", "seed",
                           "readout_overhead_us", "origin_um", "imaging_axis", "gradient_per_mA"});
    read(n, "i_max_mA", "plan", c.plan.i_max);
    read(n, "n_points", "plan", c.plan.n_points);
    read(n, "shots", "plan", c.plan.shots_per_point);
    read(n, "shot_noise", "plan", c.plan.shot_noise);
    read(n, "seed", "plan", c.plan.seed);
    read(n, "readout_overhead_us", "plan", c.plan.readout_overhead);
    read_vec(n, "origin_um", "plan", c.plan.origin);
    read_vec(n, "imaging_axis", "plan", c.plan.imaging_axis);
    if (auto g = n["gradient_per_mA"]) {
      if (g.IsNull() || (g.IsScalar() && g.Scalar() == "wire")) {
        c.plan.gradient_per_mA.reset();
      } else {
        double v = 0.0;
        read(n, "gradient_per_mA", "plan", v);
        c.plan.gradient_per_mA = v;
      }
    }
    if (auto m = n["mask"]) {
      check_keys(m, "plan.mask", {"strategy", "stride", "blocks", "width"});
      read(m, "strategy", "plan.mask", c.mask.strategy);
      read(m, "stride", "plan.mask", c.mask.stride);
      read(m, "blocks", "plan.mask", c.mask.blocks);
      read(m, "width", "plan.mask", c.mask.width);
    }
  }
  if (auto n = root["drift"]) {
    check_keys(n, "drift", {"linear_rate_nm_per_h", "random_walk_nm_per_sqrt_h",
                            "temperature_coupling_nm_per_K", "temperature_amplitude_K",
                            "temperature_period_h", "seed"});
    auto& d = c.plan.drift;
    read(n, "linear_rate_nm_per_h", "drift", d.linear_rate);
    read(n, "random_walk_nm_per_sqrt_h", "drift", d.random_walk_sigma);
    read(n, "temperature_coupling_nm_per_K", "drift", d.temperature_coupling);
    read(n, "temperature_amplitude_K", "drift", d.temperature_amplitude);
    read(n, "temperature_period_h", "drift", d.temperature_period);
    read(n, "seed", "drift", d.seed);
  }
  if (auto n = root["current_noise"]) {
    check_keys(n, "current_noise", {"relative_amplitude", "modulation_frequency", "white_sigma"});
    auto& cn = c.plan.current_noise;
    read(n, "relative_amplitude", "current_noise", cn.relative_amplitude);
    read(n, "modulation_frequency", "current_noise", cn.modulation_frequency);
    read(n, "white_sigma", "current_noise", cn.white_sigma);
  }
  if (auto n = root["reconstruction"]) {
    check_keys(n, "reconstruction", {"window", "zero_pad_factor", "fit_half_window_pixels"});
    std::string w = to_string(c.reconstruction.window);
    read(n, "window", "reconstruction", w);
    if (w == "none") c.reconstruction.window = Window::None;
    else if (w == "hann") c.reconstruction.window = Window::Hann;
    else fail(ErrorCode::ValidationError, "'reconstruction.window' must be none or hann" + where(n["window"]));
    read(n, "zero_pad_factor", "reconstruction", c.reconstruction.zero_pad_factor);
    read(n, "fit_half_window_pixels", "reconstruction", c.reconstruction.fit_half_window_pixels);
  }
  if (auto n = root["sensitivity"]) {
    check_keys(n, "sensitivity", {"alpha", "beta", "sigma_s", "evolution_time_us", "n_averages",
                                  "convention"});
    auto& s = c.sensitivity;
    read(n, "alpha", "sensitivity", s.alpha);
    read(n, "beta", "sensitivity", s.beta);
    read(n, "sigma_s", "sensitivity", s.sigma_s);
    if (n["evolution_time_us"]) {
      double t = 0.0;
      read(n, "evolution_time_us", "sensitivity", t);
      s.evolution_time = t;
    }
    read(n, "n_averages", "sensitivity", s.n_averages);
    std::string conv = to_string(s.convention);
    read(n, "convention", "sensitivity", conv);
    if (conv == "total") s.convention = EvolutionTimeConvention::Total;
    else if (conv == "half") s.convention = EvolutionTimeConvention::Half;
    else fail(ErrorCode::ValidationError, "'sensitivity.convention' must be total or half" + where(n["convention"]));
  }
  if (auto n = root["calibration"]) {
    check_keys(n, "calibration", {"samples_csv", "reference_um", "curve_half_span_um",
                                  "curve_points", "fit_lateral"});
    read(n, "samples_csv", "calibration", c.calibration.samples_csv);
    read_vec(n, "reference_um", "calibration", c.calibration.reference);
    read(n, "curve_half_span_um", "calibration", c.calibration.curve_half_span);
    read(n, "curve_points", "calibration", c.calibration.curve_points);
    read(n, "fit_lateral", "calibration", c.calibration.fit_lateral);
  }
  if (auto n = root["output"]) {
    check_keys(n, "output", {"dir"});
    read(n, "dir", "output", c.output_dir);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::FileNotFound, "config file not found: " + path.string());
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FileNotFound, "cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  RunConfig c = parse_config(text, path.string());
  c.source_dir = path.parent_path();
  return c;
}

/// Fully resolved configuration, every default spelled out.
inline std::string dump_config(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto vec = [&](const Vec3& v) {
    out << YAML::Flow << YAML::BeginSeq << v.x() << v.y() << v.z() << YAML::EndSeq;
  };
  const auto& p = c.plan;
  out << YAML::BeginMap;
  out << YAML::Key << "nv" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "x_nm" << YAML::Value << c.nv.x_nm;
  out << YAML::Key << "position_um" << YAML::Value; vec(c.nv.position);
  out << YAML::Key << "t2_us" << YAML::Value << c.nv.t2;
  out << YAML::Key << "stretch_p" << YAML::Value << c.nv.stretch_p;
  out << YAML::Key << "contrast_alpha" << YAML::Value << c.nv.contrast_alpha;
  out << YAML::Key << "yield_beta" << YAML::Value << c.nv.yield_beta;
  out << YAML::Key << "axis" << YAML::Value; vec(c.nv_axis.orientation);
  out << YAML::EndMap;
  out << YAML::Key << "wire" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "anchor_um" << YAML::Value; vec(c.wire.anchor_point);
  out << YAML::Key << "direction" << YAML::Value; vec(c.wire.direction);
  out << YAML::Key << "current_mA" << YAML::Value << c.wire.current;
  out << YAML::Key << "polarity" << YAML::Value << c.wire.polarity;
  out << YAML::EndMap;
  out << YAML::Key << "sequence" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "total_time_us" << YAML::Value << p.sequence.total_time;
  out << YAML::Key << "pi_pulse_time_us" << YAML::Value << p.sequence.pi_pulse_time;
  out << YAML::Key << "sync_offset_us" << YAML::Value << p.sequence.sync_offset;
  out << YAML::Key << "pi_pulse_fidelity" << YAML::Value << p.sequence.pi_pulse_fidelity;
  out << YAML::EndMap;
  out << YAML::Key << "waveform" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "shape" << YAML::Value << to_string(p.waveform_template.shape);
  out << YAML::Key << "period_us" << YAML::Value << p.waveform_template.period;
  out << YAML::Key << "active_fraction" << YAML::Value << p.waveform_template.active_fraction;
  out << YAML::Key << "antisymmetric" << YAML::Value << p.waveform_template.antisymmetric;
  out << YAML::EndMap;
  out << YAML::Key << "plan" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "i_max_mA" << YAML::Value << p.i_max;
  out << YAML::Key << "n_points" << YAML::Value << p.n_points;
  out << YAML::Key << "mask" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "strategy" << YAML::Value << c.mask.strategy;
  out << YAML::Key << "stride" << YAML::Value << c.mask.stride;
  out << YAML::Key << "blocks" << YAML::Value << c.mask.blocks;
  out << YAML::Key << "width" << YAML::Value << c.mask.width;
  out << YAML::EndMap;
  out << YAML::Key << "shots" << YAML::Value << p.shots_per_point;
  out << YAML::Key << "shot_noise" << YAML::Value << p.shot_noise;
  out << YAML::Key << "seed" << YAML::Value << p.seed;
  out << YAML::Key << "readout_overhead_us" << YAML::Value << p.readout_overhead;
  out << YAML::Key << "origin_um" << YAML::Value; vec(p.origin);
  out << YAML::Key << "imaging_axis" << YAML::Value; vec(p.imaging_axis);
  out << YAML::Key << "gradient_per_mA" << YAML::Value;
  if (p.gradient_per_mA) out << *p.gradient_per_mA; else out << "wire";
  out << YAML::EndMap;
  out << YAML::Key << "drift" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "linear_rate_nm_per_h" << YAML::Value << p.drift.linear_rate;
  out << YAML::Key << "random_walk_nm_per_sqrt_h" << YAML::Value << p.drift.random_walk_sigma;
  out << YAML::Key << "temperature_coupling_nm_per_K" << YAML::Value << p.drift.temperature_coupling;
  out << YAML::Key << "temperature_amplitude_K" << YAML::Value << p.drift.temperature_amplitude;
  out << YAML::Key << "temperature_period_h" << YAML::Value << p.drift.temperature_period;
  out << YAML::Key << "seed" << YAML::Value << p.drift.seed;
  out << YAML::EndMap;
  out << YAML::Key << "current_noise" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "relative_amplitude" << YAML::Value << p.current_noise.relative_amplitude;
  out << YAML::Key << "modulation_frequency" << YAML::Value << p.current_noise.modulation_frequency;
  out << YAML::Key << "white_sigma" << YAML::Value << p.current_noise.white_sigma;
  out << YAML::EndMap;
  out << YAML::Key << "reconstruction" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "window" << YAML::Value << to_string(c.reconstruction.window);
  out << YAML::Key << "zero_pad_factor" << YAML::Value << c.reconstruction.zero_pad_factor;
  out << YAML::Key << "fit_half_window_pixels" << YAML::Value << c.reconstruction.fit_half_window_pixels;
  out << YAML::EndMap;
  out << YAML::Key << "sensitivity" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "alpha" << YAML::Value << c.sensitivity.alpha;
  out << YAML::Key << "beta" << YAML::Value << c.sensitivity.beta;
  out << YAML::Key << "sigma_s" << YAML::Value << c.sensitivity.sigma_s;
  out << YAML::Key << "evolution_time_us" << YAML::Value
      << c.sensitivity.evolution_time.value_or(p.sequence.total_time);
  out << YAML::Key << "n_averages" << YAML::Value << c.sensitivity.n_averages;
  out << YAML::Key << "convention" << YAML::Value << to_string(c.sensitivity.convention);
  out << YAML::EndMap;
  out << YAML::Key << "calibration" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "samples_csv" << YAML::Value << c.calibration.samples_csv;
  out << YAML::Key << "reference_um" << YAML::Value; vec(c.calibration.reference);
  out << YAML::Key << "curve_half_span_um" << YAML::Value << c.calibration.curve_half_span;
  out << YAML::Key << "curve_points" << YAML::Value << c.calibration.curve_points;
  out << YAML::Key << "fit_lateral" << YAML::Value << c.calibration.fit_lateral;
  out << YAML::EndMap;
  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dir" << YAML::Value << c.output_dir;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace nvfim

#pragma once

// Command implementations behind the nvfim CLI. Each command writes its
// data files plus a manifest into an output directory.

#include "nvfim/acquisition.hpp"
#include "nvfim/config.hpp"
#include "nvfim/field_model.hpp"
#include "nvfim/io.hpp"
#include "nvfim/metrology.hpp"
#include "nvfim/reconstruction.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nvfim {

inline constexpr std::string_view kSoftwareVersion = "1.0.0";

namespace fs = std::filesystem;
using io::json;

/// Collects outputs, derived quantities and stage timings for a manifest.
class ManifestBuilder {
 public:
  ManifestBuilder(std::string command, const fs::path& out_dir)
      : command_(std::move(command)), out_dir_(out_dir) {}

  void config(const RunConfig& c) {
    const std::string text = dump_config(c);
    config_hash_ = io::hex64(io::fnv1a(text));
    seeds_ = json{{"plan", c.plan.seed}, {"drift", c.plan.drift.seed}};
  }

  const std::string& config_hash() const { return config_hash_; }

  void write(const std::string& name, std::string_view text) {
    io::write_text(out_dir_ / name, text);
    outputs_[name] = json{{"bytes", text.size()}, {"fnv1a", io::hex64(io::fnv1a(text))}};
  }

  void derived(const std::string& key, json value) { derived_[key] = std::move(value); }
  void input(const std::string& key, json value) { inputs_[key] = std::move(value); }

  template <typename F>
  auto timed(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      record_time(stage, t0);
    } else {
      auto result = f();
      record_time(stage, t0);
      return result;
    }
  }

  json to_json() const {
    json files = json::array();
    for (const auto& [name, info] : outputs_) {
      json entry = info;
      entry["path"] = name;
      files.push_back(entry);
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return json{{"software", {{"name", "nvfim"}, {"version", kSoftwareVersion}}},
                {"command", command_},
                {"config_hash", config_hash_},
                {"seeds", seeds_},
                {"inputs", inputs_},
                {"outputs", files},
                {"derived", derived_},
                {"timings_ms", timings_},
                {"created_at", stamp}};
  }

  void finish(const std::string& name = "manifest.json") {
    io::write_text(out_dir_ / name, to_json().dump(2) + "\n");
  }

 private:
  void record_time(const std::string& stage, std::chrono::steady_clock::time_point t0) {
    timings_[stage] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  std::string command_;
  fs::path out_dir_;
  std::string config_hash_;
  json seeds_ = json::object();
  json inputs_ = json::object();
  json derived_ = json::object();
  json timings_ = json::object();
  std::map<std::string, json> outputs_;
};

/// Manifest content that must be reproducible: everything except timings
/// and timestamps.
inline json reproducible_part(json manifest) {
  manifest.erase("timings_ms");
  manifest.erase("created_at");
  return manifest;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateResult {
  CalibrationReport report;
  double gradient_per_mA = 0.0;  // at the plan origin, fitted wire
};

inline std::string gradient_curve_csv(const RunConfig& config, const MicrowireModel& wire) {
  const Vec3 axis = config.plan.imaging_axis.normalized();
  const std::size_t n = config.calibration.curve_points;
  const double half = config.calibration.curve_half_span;
  std::string s = "s_um,x_um,y_um,z_um,b_projected_G,gradient_G_per_um,delta_f_MHz\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double u = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1);
    const Vec3 p = config.calibration.reference + u * axis;
    if (detail::wire_perp(wire, p).norm() <= kMinWireDistanceUm) continue;
    const FieldSample f = sample_field(wire, p, config.nv_axis, axis);
    s += io::format_double(u) + ',' + io::format_double(p.x()) + ',' + io::format_double(p.y()) +
         ',' + io::format_double(p.z()) + ',' + io::format_double(f.b_projected) + ',' +
         io::format_double(f.gradient_projected) + ',' + io::format_double(f.delta_f) + '\n';
  }
  return s;
}

inline CalibrateResult calibrate_stage(const RunConfig& config,
                                       const std::vector<CalibrationSample>& samples,
                                       ManifestBuilder& m) {
  CalibrateResult res;
  res.report = m.timed("calibrate", [&] {
    CalibrationOptions opt;
    opt.fit_lateral = config.calibration.fit_lateral;
    return calibrate_wire(samples, config.wire, config.nv_axis, config.calibration.reference, opt);
  });
  AcquisitionPlan plan = config.resolved_plan();
  res.gradient_per_mA = wire_gradient_per_mA(plan, res.report.wire);
  json report = io::calibration_json(res.report);
  report["gradient_per_mA_at_origin"] = res.gradient_per_mA;
  m.write("calibration_report.json", report.dump(2) + "\n");
  m.write("gradient_curve.csv", gradient_curve_csv(config, res.report.wire));
  m.derived("gradient_per_mA", res.gradient_per_mA);
  m.derived("standoff_um", res.report.standoff_um);
  m.derived("calibration_converged", res.report.converged);
  return res;
}

inline CalibrateResult cmd_calibrate(const RunConfig& config, const fs::path& samples_csv,
                                     const fs::path& out_dir) {
  const auto samples = io::read_calibration_csv(samples_csv);
  ManifestBuilder m("calibrate", out_dir);
  m.config(config);
  m.input("samples_csv", samples_csv.filename().string());
  CalibrateResult res = calibrate_stage(config, samples, m);
  m.finish();
  if (!res.report.converged)
    fail(ErrorCode::NonConvergence,
         "wire calibration did not converge; best-so-far parameters written to the report");
  return res;
}

// ---------------------------------------------------------------------------
// simulate

inline KSpaceRecord simulate_stage(const RunConfig& config, const MicrowireModel& wire,
                                   std::optional<double> gradient_override, ManifestBuilder& m,
                                   unsigned threads = 1) {
  AcquisitionPlan plan = config.resolved_plan();
  if (gradient_override) plan.gradient_per_mA = gradient_override;
  KSpaceRecord rec = m.timed("simulate", [&] { return run_sweep(plan, config.nv, wire, threads); });
  m.write("record.csv", io::record_csv(rec));
  json meta = io::metadata_json(rec.metadata);
  meta["config_hash"] = m.config_hash();
  m.write("record.meta.json", meta.dump(2) + "\n");
  m.write("config.resolved.yaml", dump_config(config));
  const double k_max = k_of_current(plan, plan.i_max, rec.metadata.gradient_per_mA);
  m.derived("k_max_per_nm", k_max);
  m.derived("pixel_nm", pixel_resolution(k_max));
  m.derived("waveform_factor", rec.metadata.waveform_factor);
  m.derived("samples", rec.size());
  return rec;
}

inline KSpaceRecord cmd_simulate(const RunConfig& config, const fs::path& out_dir,
                                 unsigned threads = 1) {
  ManifestBuilder m("simulate", out_dir);
  m.config(config);
  KSpaceRecord rec = simulate_stage(config, config.wire, std::nullopt, m, threads);
  m.finish();
  return rec;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructResult {
  RealSpaceProfile profile;
  PeakFit fit;
  ResolutionReport resolution;
  std::vector<SidebandPair> sidebands;
};

inline ReconstructResult reconstruct_stage(const KSpaceRecord& record,
                                           const ReconstructionConfig& opt, ManifestBuilder& m) {
  ReconstructResult r;
  r.profile = m.timed("reconstruct",
                      [&] { return fourier_reconstruct(record, opt.window, opt.zero_pad_factor); });
  r.fit = m.timed("fit_lorentzian", [&] {
    return fit_lorentzian(r.profile, default_peak_window(r.profile, opt.fit_half_window_pixels));
  });
  r.resolution = empirical_resolution(r.fit, r.profile);
  r.sidebands = sideband_analysis(r.profile, r.fit);

  m.write("profile.csv", io::profile_csv(r.profile));
  std::vector<double> fx, fy;
  const double lo = r.fit.center - 4.0 * r.profile.pixel_size;
  const double hi = r.fit.center + 4.0 * r.profile.pixel_size;
  for (std::size_t i = 0; i < r.profile.x_grid.size(); ++i) {
    const double x = r.profile.x_grid[i];
    if (x < lo || x > hi) continue;
    fx.push_back(x);
    fy.push_back(r.fit.evaluate(x));
  }
  m.write("profile_fit.csv", io::xy_csv("x_nm", "lorentzian", fx, fy));

  json fit = io::peak_fit_json(r.fit);
  fit["profile"] = io::profile_meta_json(r.profile);
  fit["resolution"] = {{"fwhm_nm", r.resolution.fwhm},
                       {"pixel_nm", r.resolution.pixel},
                       {"fwhm_over_pixel", r.resolution.fwhm_over_pixel}};
  json sb = json::array();
  for (const auto& s : r.sidebands)
    sb.push_back({{"offset_nm", s.offset}, {"relative_amplitude", s.relative_amplitude}});
  fit["sidebands"] = sb;
  m.write("peak_fit.json", fit.dump(2) + "\n");

  const json plots = {
      {"figures",
       {{{"name", "real_space_localization"},
         {"x_label", "x (nm)"},
         {"y_label", "amplitude"},
         {"series",
          {{{"file", "profile.csv"}, {"x", "x_nm"}, {"y", "amplitude"}, {"style", "points"}},
           {{"file", "profile_fit.csv"}, {"x", "x_nm"}, {"y", "lorentzian"}, {"style", "line"}}}}}}}};
  m.write("plots.json", plots.dump(2) + "\n");

  m.derived("center_nm", r.fit.center);
  m.derived("fwhm_nm", r.fit.fwhm);
  m.derived("fwhm_err_nm", r.fit.fwhm_err);
  m.derived("pixel_nm", r.resolution.pixel);
  m.derived("fwhm_over_pixel", r.resolution.fwhm_over_pixel);
  m.derived("k_max_per_nm", r.profile.k_max);
  m.derived("window", to_string(opt.window));
  m.derived("zero_pad_factor", opt.zero_pad_factor);
  return r;
}

inline ReconstructResult cmd_reconstruct(const fs::path& record_path,
                                         const ReconstructionConfig& opt, const fs::path& out_dir) {
  const KSpaceRecord rec = io::read_record(record_path);
  ManifestBuilder m("reconstruct", out_dir);
  m.input("record", record_path.filename().string());
  m.input("record_fnv1a", io::hex64(io::fnv1a(io::record_csv(rec))));
  ReconstructResult r = reconstruct_stage(rec, opt, m);
  m.finish();
  return r;
}

// ---------------------------------------------------------------------------
// fit-cosine

inline CosineFit cmd_fit_cosine(const fs::path& record_path, const fs::path& out_dir) {
  const KSpaceRecord rec = io::read_record(record_path);
  ManifestBuilder m("fit-cosine", out_dir);
  m.input("record", record_path.filename().string());
  const CosineFit fit = m.timed("fit_cosine", [&] { return fit_cosine(rec); });
  m.write("cosine_fit.json", io::cosine_fit_json(fit).dump(2) + "\n");
  std::vector<double> model(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i)
    model[i] = fit.amplitude *
                   std::cos(2.0 * std::numbers::pi * fit.frequency * rec.currents[i] + fit.phase) +
               fit.offset;
  std::string s = "current_mA,signal,cosine_fit\n";
  for (std::size_t i = 0; i < rec.size(); ++i)
    s += io::format_double(rec.currents[i]) + ',' + io::format_double(rec.signals[i]) + ',' +
         io::format_double(model[i]) + '\n';
  m.write("cosine_fit.csv", s);
  m.derived("implied_position_nm", fit.implied_position);
  m.derived("frequency_per_mA", fit.frequency);
  m.derived("degenerate", fit.degenerate);
  m.finish();
  return fit;
}

// ---------------------------------------------------------------------------
// sensitivity

inline SensitivityReport sensitivity_from_config(const SensitivityConfig& s,
                                                 double sequence_time_us) {
  const double t = s.evolution_time.value_or(sequence_time_us);
  return with_averaging(sensitivity(s.alpha, s.beta, s.sigma_s, t, s.convention), s.n_averages, t);
}

inline SensitivityReport cmd_sensitivity(const SensitivityConfig& s, double sequence_time_us,
                                         const fs::path& out_dir) {
  ManifestBuilder m("sensitivity", out_dir);
  const SensitivityReport r = sensitivity_from_config(s, sequence_time_us);
  m.write("sensitivity.json", io::sensitivity_json(r).dump(2) + "\n");
  m.derived("eta_uT_per_sqrtHz", r.eta);
  m.derived("deviation_nT", r.deviation);
  m.finish();
  return r;
}

// ---------------------------------------------------------------------------
// run-all

struct RunAllResult {
  std::optional<CalibrateResult> calibration;
  KSpaceRecord record;
  ReconstructResult reconstruction;
  SensitivityReport sensitivity;
};

inline RunAllResult cmd_run_all(const RunConfig& config, const fs::path& out_dir,
                                unsigned threads = 1) {
  ManifestBuilder m("run-all", out_dir);
  m.config(config);
  RunAllResult r;
  MicrowireModel wire = config.wire;
  if (!config.calibration.samples_csv.empty()) {
    fs::path csv = config.calibration.samples_csv;
    if (csv.is_relative()) csv = config.source_dir / csv;
    const auto samples = io::read_calibration_csv(csv);
    m.input("samples_csv", csv.filename().string());
    r.calibration = calibrate_stage(config, samples, m);
    if (!r.calibration->report.converged)
      fail(ErrorCode::NonConvergence, "wire calibration did not converge");
    wire = r.calibration->report.wire;
  }
  r.record = simulate_stage(config, wire, std::nullopt, m, threads);
  r.reconstruction = reconstruct_stage(r.record, config.reconstruction, m);
  r.sensitivity = sensitivity_from_config(config.sensitivity, config.plan.sequence.total_time);
  m.write("sensitivity.json", io::sensitivity_json(r.sensitivity).dump(2) + "\n");
  m.derived("eta_uT_per_sqrtHz", r.sensitivity.eta);
  m.derived("deviation_nT", r.sensitivity.deviation);
  m.finish("run_manifest.json");
  return r;
}

}  // namespace nvfim

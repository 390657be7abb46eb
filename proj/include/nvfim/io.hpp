#pragma once

// CSV / JSON persistence for calibration samples, K-space records, profiles
// and fit reports.

#include "nvfim/acquisition.hpp"
#include "nvfim/common.hpp"
#include "nvfim/field_model.hpp"
#include "nvfim/metrology.hpp"
#include "nvfim/reconstruction.hpp"

#include "json.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace nvfim::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::string_view kRecordHeader = "k_per_nm,current_mA,signal,sigma,t_hours";
inline constexpr std::string_view kCalibrationHeader = "x_um,y_um,z_um,delta_f_MHz,sigma_MHz";
inline constexpr std::string_view kProfileHeader = "x_nm,amplitude";

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string normalise_header(std::string_view line) {
  std::string out;
  for (auto f : split(line)) {
    if (!out.empty()) out += ',';
    out += f;
  }
  return out;
}

inline double parse_field(std::string_view field, std::size_t row, std::size_t col,
                          const std::string& source) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ", column " +
                                    std::to_string(col + 1) + ": not a number: '" +
                                    std::string(field) + "'");
  return v;
}

/// Numeric rows of a CSV with the given header. Row numbers count the
/// header as row 1.
inline std::vector<std::vector<double>> parse_csv(std::string_view text,
                                                  std::string_view expected_header,
                                                  const std::string& source) {
  std::vector<std::vector<double>> rows;
  const std::size_t columns = split(expected_header).size();
  std::size_t row = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++row;
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    if (!header_seen) {
      if (normalise_header(line) != expected_header)
        fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) +
                                        ": expected header '" + std::string(expected_header) +
                                        "'");
      header_seen = true;
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != columns)
      fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": expected " +
                                      std::to_string(columns) + " columns, found " +
                                      std::to_string(fields.size()));
    std::vector<double> values(columns);
    for (std::size_t c = 0; c < columns; ++c) values[c] = parse_field(fields[c], row, c, source);
    rows.push_back(std::move(values));
  }
  if (!header_seen) fail(ErrorCode::ParseError, source + ": missing header row");
  return rows;
}

}  // namespace detail

inline std::vector<CalibrationSample> parse_calibration_csv(std::string_view text,
                                                            const std::string& source = "csv") {
  std::vector<CalibrationSample> out;
  for (const auto& r : detail::parse_csv(text, kCalibrationHeader, source))
    out.push_back({Vec3(r[0], r[1], r[2]), r[3], r[4]});
  return out;
}

inline std::vector<CalibrationSample> read_calibration_csv(const fs::path& path) {
  return parse_calibration_csv(read_text(path), path.string());
}

inline std::string calibration_csv(std::span<const CalibrationSample> samples) {
  std::string s(kCalibrationHeader);
  s += '\n';
  for (const auto& c : samples) {
    s += format_double(c.position.x()) + ',' + format_double(c.position.y()) + ',' +
         format_double(c.position.z()) + ',' + format_double(c.delta_f) + ',' +
         format_double(c.sigma) + '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// K-space records

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::MetadataError, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline json metadata_json(const KSpaceMetadata& m) {
  return json{{"total_time_us", m.total_time},       {"gradient_per_mA", m.gradient_per_mA},
              {"waveform_factor", m.waveform_factor}, {"origin_um", vec_json(m.origin)},
              {"i_max_mA", m.i_max},                 {"n_points", m.n_points},
              {"k_step_per_nm", m.k_step},           {"mask", m.mask},
              {"seed", m.seed},                      {"shots_per_point", m.shots_per_point},
              {"shot_noise", m.shot_noise},
              // derived, not read back
              {"k_max_per_nm", m.k_step * static_cast<double>(m.n_points > 0 ? m.n_points - 1 : 0)}};
}

inline KSpaceMetadata metadata_from_json(const json& j) {
  KSpaceMetadata m;
  try {
    m.total_time = j.at("total_time_us").get<double>();
    m.gradient_per_mA = j.at("gradient_per_mA").get<double>();
    m.waveform_factor = j.at("waveform_factor").get<double>();
    m.origin = vec_from_json(j.at("origin_um"));
    m.i_max = j.at("i_max_mA").get<double>();
    m.n_points = j.at("n_points").get<std::size_t>();
    m.k_step = j.at("k_step_per_nm").get<double>();
    m.mask = j.at("mask").get<Mask>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.shots_per_point = j.at("shots_per_point").get<long long>();
    m.shot_noise = j.at("shot_noise").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MetadataError, std::string("record metadata: ") + e.what());
  }
  return m;
}

inline std::string record_csv(const KSpaceRecord& r) {
  std::string s(kRecordHeader);
  s += '\n';
  for (std::size_t i = 0; i < r.size(); ++i) {
    s += format_double(r.k_values[i]) + ',' + format_double(r.currents[i]) + ',' +
         format_double(r.signals[i]) + ',' + format_double(r.errors[i]) + ',' +
         format_double(r.t_hours[i]) + '\n';
  }
  return s;
}

inline KSpaceRecord parse_record_csv(std::string_view text, const std::string& source = "record") {
  KSpaceRecord r;
  for (const auto& row : detail::parse_csv(text, kRecordHeader, source)) {
    r.k_values.push_back(row[0]);
    r.currents.push_back(row[1]);
    r.signals.push_back(row[2]);
    r.errors.push_back(row[3]);
    r.t_hours.push_back(row[4]);
  }
  return r;
}

/// metadata sidecar path for a record CSV: foo.csv -> foo.meta.json
inline fs::path sidecar_path(const fs::path& record_csv_path) {
  fs::path p = record_csv_path;
  p.replace_extension(".meta.json");
  return p;
}

inline void write_record(const fs::path& csv_path, const KSpaceRecord& r, const json& extra = {}) {
  write_text(csv_path, record_csv(r));
  json meta = metadata_json(r.metadata);
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) meta[k] = v;
  write_text(sidecar_path(csv_path), meta.dump(2) + "\n");
}

inline KSpaceRecord read_record(const fs::path& csv_path) {
  KSpaceRecord r = parse_record_csv(read_text(csv_path), csv_path.string());
  const fs::path side = sidecar_path(csv_path);
  if (!fs::exists(side))
    fail(ErrorCode::MetadataError, "record metadata sidecar not found: " + side.string());
  json j;
  try {
    j = json::parse(read_text(side));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MetadataError, side.string() + ": " + e.what());
  }
  r.metadata = metadata_from_json(j);
  return r;
}

// ---------------------------------------------------------------------------
// Profiles and reports

inline std::string profile_csv(const RealSpaceProfile& p) {
  std::string s(kProfileHeader);
  s += '\n';
  for (std::size_t i = 0; i < p.x_grid.size(); ++i)
    s += format_double(p.x_grid[i]) + ',' + format_double(p.amplitude[i]) + '\n';
  return s;
}

inline std::pair<std::vector<double>, std::vector<double>> parse_profile_csv(std::string_view text) {
  std::vector<double> x, y;
  for (const auto& row : detail::parse_csv(text, kProfileHeader, "profile")) {
    x.push_back(row[0]);
    y.push_back(row[1]);
  }
  return {x, y};
}

/// Plain x/y pairs for external plotting.
inline std::string xy_csv(std::string_view x_name, std::string_view y_name,
                          std::span<const double> x, std::span<const double> y) {
  std::string s = std::string(x_name) + ',' + std::string(y_name) + '\n';
  for (std::size_t i = 0; i < x.size(); ++i)
    s += format_double(x[i]) + ',' + format_double(y[i]) + '\n';
  return s;
}

inline json profile_meta_json(const RealSpaceProfile& p) {
  return json{{"pixel_size_nm", p.pixel_size},   {"k_max_per_nm", p.k_max},
              {"window", to_string(p.window)},    {"zero_pad_factor", p.zero_pad_factor},
              {"k_spacing_per_nm", p.k_spacing},  {"k_points", p.k_points},
              {"grid_spacing_nm", p.grid_spacing()}};
}

inline json peak_fit_json(const PeakFit& f) {
  return json{{"center_nm", f.center},
              {"fwhm_nm", f.fwhm},
              {"amplitude", f.amplitude},
              {"offset", f.offset},
              {"uncertainties",
               {{"center_nm", f.center_err},
                {"fwhm_nm", f.fwhm_err},
                {"amplitude", f.amplitude_err},
                {"offset", f.offset_err}}},
              {"residual_norm", f.residual_norm},
              {"iterations", f.iterations},
              {"points", f.points}};
}

inline json cosine_fit_json(const CosineFit& f) {
  return json{{"frequency_per_mA", f.frequency},
              {"phase_rad", f.phase},
              {"amplitude", f.amplitude},
              {"offset", f.offset},
              {"implied_position_nm", f.implied_position},
              {"uncertainties",
               {{"frequency_per_mA", f.frequency_err},
                {"implied_position_nm", f.implied_position_err}}},
              {"residual_norm", f.residual_norm},
              {"degenerate", f.degenerate}};
}

inline json sensitivity_json(const SensitivityReport& r) {
  return json{{"slope_inverse_G", r.slope_inverse},
              {"eta_uT_per_sqrtHz", r.eta},
              {"sigma_s_sqrtHz", r.sigma_s},
              {"alpha", r.alpha},
              {"beta", r.beta},
              {"evolution_time_us", r.evolution_time},
              {"slope_time_us", r.slope_time},
              {"convention", to_string(r.convention)},
              {"n_averages", r.n_averages},
              {"total_time_s", r.total_time},
              {"deviation_nT", r.deviation}};
}

inline SensitivityReport sensitivity_from_json(const json& j) {
  SensitivityReport r;
  r.slope_inverse = j.at("slope_inverse_G").get<double>();
  r.eta = j.at("eta_uT_per_sqrtHz").get<double>();
  r.sigma_s = j.at("sigma_s_sqrtHz").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.beta = j.at("beta").get<double>();
  r.evolution_time = j.at("evolution_time_us").get<double>();
  r.slope_time = j.at("slope_time_us").get<double>();
  r.convention = j.at("convention").get<std::string>() == "half" ? EvolutionTimeConvention::Half
                                                               : EvolutionTimeConvention::Total;
  r.n_averages = j.at("n_averages").get<long long>();
  r.total_time = j.at("total_time_s").get<double>();
  r.deviation = j.at("deviation_nT").get<double>();
  return r;
}

inline json wire_json(const MicrowireModel& w) {
  return json{{"anchor_um", vec_json(w.anchor_point)},
              {"direction", vec_json(w.direction)},
              {"current_mA", w.current},
              {"polarity", w.polarity}};
}

inline json calibration_json(const CalibrationReport& r) {
  return json{{"wire", wire_json(r.wire)},
              {"standoff_um", r.standoff_um},
              {"standoff_uncertainty_um", r.standoff_uncertainty_um},
              {"standoff_direction", vec_json(r.standoff_direction)},
              {"signed_current_mA", r.signed_current_mA},
              {"current_uncertainty_mA", r.current_uncertainty_mA},
              {"lateral_fitted", r.lateral_fitted},
              {"lateral_offset_um", r.lateral_offset_um},
              {"lateral_offset_uncertainty_um", r.lateral_offset_uncertainty_um},
              {"reference_um", vec_json(r.reference_point)},
              {"residuals_MHz", r.residuals_mhz},
              {"residual_norm", r.residual_norm},
              {"iterations", r.iterations},
              {"converged", r.converged}};
}

/// 64-bit FNV-1a, used for config hashes and file fingerprints.
constexpr std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace nvfim::io

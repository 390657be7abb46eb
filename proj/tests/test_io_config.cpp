#include "nvfim/acquisition.hpp"
#include "nvfim/config.hpp"
#include "nvfim/io.hpp"
#include "nvfim/metrology.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>

using namespace nvfim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nvfim_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

template <typename F>
Error capture(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an nvfim::Error";
  return Error(ErrorCode::IoError, "none");
}

KSpaceRecord small_record(std::uint64_t seed) {
  RunConfig c;
  c.plan.n_points = 64;
  c.plan.shots_per_point = 1000;
  c.plan.seed = seed;
  c.plan.drift.random_walk_sigma = 0.3;
  c.mask.strategy = "stride";
  c.mask.stride = 3;
  return run_sweep(c.resolved_plan(), c.nv, c.wire);
}

}  // namespace

// ---------------------------------------------------------------------------
// config

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.plan.n_points, 2048u);
  EXPECT_DOUBLE_EQ(c.plan.i_max, 10.0);
  EXPECT_DOUBLE_EQ(c.plan.sequence.total_time, 500.0);
  EXPECT_NEAR(k_of_current(c.resolved_plan(), c.plan.i_max), 2.2834, 1e-4);
  EXPECT_EQ(c.reconstruction.window, Window::None);
  EXPECT_EQ(c.reconstruction.zero_pad_factor, 4);
}

TEST(Config, MinimalOverride) {
  const RunConfig c = parse_config("sequence:\n  total_time_us: 21\nnv:\n  x_nm: 12\n");
  EXPECT_DOUBLE_EQ(c.plan.sequence.total_time, 21.0);
  EXPECT_DOUBLE_EQ(c.plan.sequence.pi_pulse_time, 10.5);
  EXPECT_DOUBLE_EQ(c.nv.x_nm, 12.0);
  EXPECT_EQ(c.plan.n_points, 2048u);
}

TEST(Config, ActiveFractionOutOfRangeNamesField) {
  const Error e = capture([] { parse_config("waveform:\n  active_fraction: 1.5\n"); });
  EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  EXPECT_NE(std::string(e.what()).find("active_fraction"), std::string::npos) << e.what();
}

TEST(Config, UnknownKeyReportsLineAndColumn) {
  const Error e = capture([] { parse_config("plan:\n  n_points: 16\n  bogus: 3\n"); });
  EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  const std::string msg = e.what();
  EXPECT_NE(msg.find("plan.bogus"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column 3"), std::string::npos) << msg;
}

TEST(Config, WrongTypeAndBadEnum) {
  EXPECT_EQ(capture([] { parse_config("plan:\n  n_points: many\n"); }).code(),
            ErrorCode::ValidationError);
  EXPECT_EQ(capture([] { parse_config("reconstruction:\n  window: kaiser\n"); }).code(),
            ErrorCode::ValidationError);
  EXPECT_EQ(capture([] { parse_config("sensitivity:\n  alpha: 0\n"); }).code(),
            ErrorCode::ValidationError);
  EXPECT_EQ(capture([] { parse_config("waveform:\n  efficiency: 0.5\n  active_fraction: 0.5\n"); })
                .code(),
            ErrorCode::ValidationError);
}

TEST(Config, MalformedYamlIsParseError) {
  const Error e = capture([] { parse_config("plan: [1, 2\n"); });
  EXPECT_EQ(e.code(), ErrorCode::ParseError);
  EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
}

TEST(Config, MissingFile) {
  const Error e = capture([] { load_config("/nonexistent/nvfim/run.yaml"); });
  EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
}

TEST(Config, EfficiencyKeyMapsToActiveFraction) {
  const RunConfig c = parse_config("waveform:\n  efficiency: 0.5003\n");
  const auto plan = c.resolved_plan();
  EXPECT_NEAR(waveform_efficiency(plan.waveform_template, plan.sequence), 0.5003, 1e-9);
}

TEST(Config, DumpReparseIsFixedPoint) {
  const RunConfig c = parse_config(
      "nv: {x_nm: 37.5, axis: [0, 0, 1]}\n"
      "wire: {anchor_um: [0.1, 0, 2], polarity: 1}\n"
      "plan: {n_points: 300, mask: {strategy: blocks, blocks: 4, width: 10}, seed: 99}\n"
      "drift: {linear_rate_nm_per_h: 0.25}\n"
      "reconstruction: {window: hann, zero_pad_factor: 2}\n"
      "sensitivity: {convention: half, evolution_time_us: 250}\n");
  const std::string once = dump_config(c);
  const RunConfig again = parse_config(once);
  EXPECT_EQ(dump_config(again), once);
  EXPECT_EQ(again.plan.seed, 99u);
  EXPECT_EQ(again.mask.strategy, "blocks");
  EXPECT_EQ(again.reconstruction.window, Window::Hann);
  EXPECT_EQ(again.sensitivity.convention, EvolutionTimeConvention::Half);
  EXPECT_EQ(again.resolved_plan().mask, c.resolved_plan().mask);
}

TEST(Config, LoadSetsSourceDir) {
  const fs::path dir = scratch("cfg");
  io::write_text(dir / "run.yaml", "nv: {x_nm: 50}\n");
  const RunConfig c = load_config(dir / "run.yaml");
  EXPECT_EQ(c.source_dir, dir);
  EXPECT_DOUBLE_EQ(c.nv.x_nm, 50.0);
}

// ---------------------------------------------------------------------------
// CSV

TEST(Csv, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
}

TEST(Csv, ParseErrorCarriesRowNumber) {
  const std::string text = std::string(io::kCalibrationHeader) + "\n1,2,3,4,0.1\n1,2,x,4,0.1\n";
  const Error e = capture([&] { io::parse_calibration_csv(text, "s.csv"); });
  EXPECT_EQ(e.code(), ErrorCode::ParseError);
  EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
}

TEST(Csv, ColumnCountAndHeaderChecked) {
  const std::string short_row = std::string(io::kCalibrationHeader) + "\n1,2,3\n";
  const Error a = capture([&] { io::parse_calibration_csv(short_row); });
  EXPECT_EQ(a.code(), ErrorCode::ParseError);
  EXPECT_NE(std::string(a.what()).find("row 2"), std::string::npos);
  EXPECT_EQ(capture([] { io::parse_calibration_csv("a,b,c,d,e\n1,2,3,4,5\n"); }).code(),
            ErrorCode::ParseError);
  EXPECT_EQ(capture([] { io::parse_calibration_csv(""); }).code(), ErrorCode::ParseError);
}

TEST(Csv, ToleratesSpacesCrlfAndBlankLines) {
  const std::string text =
      "x_um, y_um, z_um, delta_f_MHz, sigma_MHz\r\n\r\n 1 , 2,3,4.5,0.1\r\n\n";
  const auto s = io::parse_calibration_csv(text);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].delta_f, 4.5);
  EXPECT_DOUBLE_EQ(s[0].position.y(), 2.0);
}

TEST(Csv, CalibrationRoundTrip) {
  std::vector<CalibrationSample> in;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 20; ++i) in.push_back({Vec3(n(rng), n(rng), n(rng)), n(rng), 0.01 + i});
  const auto out = io::parse_calibration_csv(io::calibration_csv(in));
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].position, in[i].position);
    EXPECT_EQ(out[i].delta_f, in[i].delta_f);
    EXPECT_EQ(out[i].sigma, in[i].sigma);
  }
}

// ---------------------------------------------------------------------------
// records

TEST(Record, WriteReadIsBitExact) {
  const fs::path dir = scratch("rec");
  const KSpaceRecord rec = small_record(17);
  ASSERT_GT(rec.size(), 10u);
  io::write_record(dir / "record.csv", rec, {{"note", "extra keys are ignored on read"}});
  EXPECT_TRUE(fs::exists(dir / "record.meta.json"));
  const KSpaceRecord back = io::read_record(dir / "record.csv");
  EXPECT_TRUE(back == rec);
  EXPECT_EQ(io::record_csv(back), io::record_csv(rec));
}

TEST(Record, MissingSidecarIsMetadataError) {
  const fs::path dir = scratch("nometa");
  io::write_text(dir / "r.csv", io::record_csv(small_record(1)));
  const Error e = capture([&] { io::read_record(dir / "r.csv"); });
  EXPECT_EQ(e.code(), ErrorCode::MetadataError);
}

TEST(Record, IncompleteSidecarIsMetadataError) {
  const fs::path dir = scratch("badmeta");
  io::write_record(dir / "r.csv", small_record(1));
  io::write_text(dir / "r.meta.json", "{\"total_time_us\": 500}\n");
  EXPECT_EQ(capture([&] { io::read_record(dir / "r.csv"); }).code(), ErrorCode::MetadataError);
  io::write_text(dir / "r.meta.json", "{not json");
  EXPECT_EQ(capture([&] { io::read_record(dir / "r.csv"); }).code(), ErrorCode::MetadataError);
}

TEST(Record, MissingCsvIsFileNotFound) {
  EXPECT_EQ(capture([] { io::read_record("/nonexistent/nvfim/r.csv"); }).code(),
            ErrorCode::FileNotFound);
}

TEST(Record, SidecarPath) {
  EXPECT_EQ(io::sidecar_path("a/b/record.csv"), fs::path("a/b/record.meta.json"));
}

// ---------------------------------------------------------------------------
// profiles and reports

TEST(Profile, CsvRoundTrip) {
  RealSpaceProfile p;
  for (int i = 0; i < 50; ++i) {
    p.x_grid.push_back(0.1 * i + 1e-17 * i);
    p.amplitude.push_back(std::sin(0.37 * i));
  }
  const auto [x, y] = io::parse_profile_csv(io::profile_csv(p));
  EXPECT_EQ(x, p.x_grid);
  EXPECT_EQ(y, p.amplitude);
}

TEST(Sensitivity, JsonRoundTrip) {
  const SensitivityReport r =
      with_averaging(sensitivity(0.08, 0.02, 0.06, 500.0, EvolutionTimeConvention::Half), 12345,
                     500.0);
  const auto j = io::json::parse(io::sensitivity_json(r).dump());
  const SensitivityReport back = io::sensitivity_from_json(j);
  EXPECT_EQ(back.eta, r.eta);
  EXPECT_EQ(back.slope_inverse, r.slope_inverse);
  EXPECT_EQ(back.slope_time, r.slope_time);
  EXPECT_EQ(back.convention, r.convention);
  EXPECT_EQ(back.n_averages, r.n_averages);
  EXPECT_EQ(back.total_time, r.total_time);
  EXPECT_EQ(back.deviation, r.deviation);
}

TEST(Hash, Fnv1aKnownValues) {
  EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(io::hex64(0xabcULL), "0000000000000abc");
}

TEST(Config, ShippedExamplesLoad) {
  int seen = 0;
  for (const auto& e : fs::directory_iterator(fs::path(NVFIM_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".yaml") continue;
    ++seen;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
  }
  EXPECT_GE(seen, 4);
  const RunConfig c = load_config(fs::path(NVFIM_SOURCE_DIR) / "configs/localisation_500us.yaml");
  // Annotated example spells out the defaults.
  const RunConfig d;
  EXPECT_NEAR(k_of_current(c.resolved_plan(), c.plan.i_max),
              k_of_current(d.resolved_plan(), d.plan.i_max), 1e-12);
  EXPECT_LT((c.nv_axis.orientation - d.nv_axis.orientation).norm(), 1e-14);
  EXPECT_EQ(c.plan.n_points, d.plan.n_points);
  EXPECT_EQ(c.reconstruction.zero_pad_factor, d.reconstruction.zero_pad_factor);
  const auto samples = io::read_calibration_csv(fs::path(NVFIM_SOURCE_DIR) /
                                                "configs/calibration_samples.csv");
  EXPECT_EQ(samples.size(), 5u);
}

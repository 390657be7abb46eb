// nvfim: command-line front end for the NV K-space imaging toolkit.

#include "nvfim/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace nvfim;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
  unsigned threads = 1;
};

RunConfig load(const Globals& g) {
  RunConfig c = g.config_path.empty() ? parse_config("") : load_config(g.config_path);
  if (g.seed) c.plan.seed = *g.seed;
  return c;
}

fs::path output_dir(const Globals& g, const RunConfig* c) {
  if (!g.out_dir.empty()) return g.out_dir;
  if (const char* env = std::getenv("NVFIM_OUT_DIR"); env && *env) return env;
  return c ? fs::path(c->output_dir) : fs::path("out");
}

void say(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cout << line << '\n';
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-NV gradient imaging: simulate spin-echo K-space sweeps, "
               "localise the NV by cosine transform, compute sensitivity."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "YAML run configuration");
  app.add_option("--seed", g.seed, "override plan.seed");
  app.add_option("--out", g.out_dir, "output directory (default: $NVFIM_OUT_DIR, then output.dir)");
  app.add_flag("--quiet", g.quiet, "suppress progress output");
  app.add_option("--threads", g.threads, "worker threads for the sweep")->check(CLI::PositiveNumber);

  auto* calibrate = app.add_subcommand("calibrate", "fit the wire model to multi-NV ODMR shifts");
  std::string samples_csv;
  calibrate->add_option("samples", samples_csv, "CSV: x_um,y_um,z_um,delta_f_MHz,sigma_MHz")
      ->required();

  auto* simulate = app.add_subcommand("simulate", "simulate a K-space sweep");

  auto* reconstruct = app.add_subcommand("reconstruct", "Fourier reconstruction and Lorentzian fit");
  std::string record_path;
  std::optional<std::string> window;
  std::optional<int> pad;
  reconstruct->add_option("record", record_path, "record CSV (sidecar .meta.json alongside)")
      ->required();
  reconstruct->add_option("--window", window, "none | hann")
      ->check(CLI::IsMember({"none", "hann"}));
  reconstruct->add_option("--zero-pad", pad, "zero padding factor")->check(CLI::PositiveNumber);

  auto* fitcos = app.add_subcommand("fit-cosine", "fit a cosine in current to a record");
  std::string cos_record;
  fitcos->add_option("record", cos_record, "record CSV")->required();

  auto* sens = app.add_subcommand("sensitivity", "magnetic sensitivity and averaged deviation");
  std::optional<double> alpha, beta, sigma_s, time_us;
  std::optional<long long> n_avg;
  std::optional<std::string> convention;
  sens->add_option("--alpha", alpha, "spin-echo contrast");
  sens->add_option("--beta", beta, "photons per readout");
  sens->add_option("--sigma-s", sigma_s, "signal noise density, Hz^1/2");
  sens->add_option("--time-us", time_us, "evolution time 2 tau, us");
  sens->add_option("--averages", n_avg, "number of averages");
  sens->add_option("--convention", convention, "total | half")
      ->check(CLI::IsMember({"total", "half"}));

  auto* runall = app.add_subcommand("run-all", "calibrate, simulate, reconstruct, sensitivity");

  for (auto* sub : {calibrate, simulate, reconstruct, fitcos, sens, runall}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: E_USAGE: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*calibrate) {
      const RunConfig c = load(g);
      const auto r = cmd_calibrate(c, samples_csv, output_dir(g, &c));
      say(g, "standoff_um " + fmt(r.report.standoff_um) + " +- " +
                 fmt(r.report.standoff_uncertainty_um));
      say(g, "current_mA " + fmt(r.report.wire.signed_current()));
      say(g, "gradient_per_mA " + fmt(r.gradient_per_mA));
    } else if (*simulate) {
      const RunConfig c = load(g);
      const auto rec = cmd_simulate(c, output_dir(g, &c), g.threads);
      say(g, "samples " + std::to_string(rec.size()));
      say(g, "k_max_per_nm " + fmt(rec.k_values.back()));
    } else if (*reconstruct) {
      ReconstructionConfig opt;
      std::optional<RunConfig> c;
      if (!g.config_path.empty()) {
        c = load(g);
        opt = c->reconstruction;
      }
      if (window) opt.window = *window == "hann" ? Window::Hann : Window::None;
      if (pad) opt.zero_pad_factor = *pad;
      const auto r = cmd_reconstruct(record_path, opt, output_dir(g, c ? &*c : nullptr));
      say(g, "center_nm " + fmt(r.fit.center));
      say(g, "fwhm_nm " + fmt(r.fit.fwhm) + " +- " + fmt(r.fit.fwhm_err));
      say(g, "pixel_nm " + fmt(r.resolution.pixel));
      say(g, "fwhm_over_pixel " + fmt(r.resolution.fwhm_over_pixel));
    } else if (*fitcos) {
      const auto f = cmd_fit_cosine(cos_record, output_dir(g, nullptr));
      say(g, "frequency_per_mA " + fmt(f.frequency));
      say(g, "implied_position_nm " + fmt(f.implied_position));
      if (f.degenerate) say(g, "warning: degenerate fit (no oscillation)");
    } else if (*sens) {
      RunConfig c = load(g);
      auto& s = c.sensitivity;
      if (alpha) s.alpha = *alpha;
      if (beta) s.beta = *beta;
      if (sigma_s) s.sigma_s = *sigma_s;
      if (time_us) s.evolution_time = *time_us;
      if (n_avg) s.n_averages = *n_avg;
      if (convention) s.convention = *convention == "half" ? EvolutionTimeConvention::Half
                                                           : EvolutionTimeConvention::Total;
      c.validate();
      const auto r = cmd_sensitivity(s, c.plan.sequence.total_time, output_dir(g, &c));
      say(g, "eta_uT_per_sqrtHz " + fmt(r.eta));
      say(g, "deviation_nT " + fmt(r.deviation));
    } else if (*runall) {
      const RunConfig c = load(g);
      const auto r = cmd_run_all(c, output_dir(g, &c), g.threads);
      say(g, "k_max_per_nm " + fmt(r.reconstruction.profile.k_max));
      say(g, "center_nm " + fmt(r.reconstruction.fit.center));
      say(g, "fwhm_nm " + fmt(r.reconstruction.fit.fwhm));
      say(g, "pixel_nm " + fmt(r.reconstruction.resolution.pixel));
      say(g, "fwhm_over_pixel " + fmt(r.reconstruction.resolution.fwhm_over_pixel));
      say(g, "eta_uT_per_sqrtHz " + fmt(r.sensitivity.eta));
      say(g, "deviation_nT " + fmt(r.sensitivity.deviation));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advsticker/battery.hpp"
#include "advsticker/config.hpp"
#include "advsticker/error.hpp"
#include "advsticker/image_io.hpp"
#include "advsticker/runner.hpp"
#include "advsticker/serialize.hpp"

namespace {

using namespace advsticker;

RunConfig load_base_config(const std::string& config_path,
                           const std::vector<std::string>& sets, const std::string& out_dir) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config_file(config_path);
  for (const std::string& kv : sets) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string item;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!item.empty()) seeds.push_back(std::stoull(item));
      item.clear();
    } else {
      item += ch;
    }
  }
  return seeds;
}

int cmd_attack(const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& out_dir) {
  RunConfig cfg = load_base_config(config_path, sets, out_dir);
  std::string run_dir;
  RunOutputs out = run_experiment(cfg, &run_dir);
  std::printf("run directory      %s\n", run_dir.c_str());
  std::printf("mode / optimizer   %s / %s\n", out.config.mode.c_str(),
              out.config.optimizer.c_str());
  std::printf("initial pool loss  %.6f\n", out.attack.initial_pool_loss);
  std::printf("final pool loss    %.6f\n", out.attack.final_pool_loss);
  std::printf("mean benign cos    %.6f\n", out.mean_cos_benign);
  std::printf("mean adv cos       %.6f\n", out.mean_cos_adv);
  if (out.d2p_final_mse >= 0.0) std::printf("d2p final mse      %.3e\n", out.d2p_final_mse);
  std::printf("attack wall time   %.1fs\n", out.attack_seconds);
  return 0;
}

int cmd_suite(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& axis, const std::string& seeds_text,
              const std::string& out_dir) {
  RunConfig base = load_base_config(config_path, sets, "");
  std::vector<RunConfig> arms = make_suite_arms(base, axis);
  SuiteResult result = run_ablation_suite(arms, axis, parse_seed_list(seeds_text), out_dir);

  std::printf("%-16s %-10s %12s %12s %12s\n", "run", "axis", "initial", "final", "adv_cos");
  for (const SuiteRunRow& r : result.rows)
    std::printf("%-16s %-10s %12.6f %12.6f %12.6f\n", r.run_id.c_str(), r.axis_value.c_str(),
                r.initial_pool_loss, r.final_pool_loss, r.mean_cos_adv);
  std::printf("comparison table   %s\n", result.comparison_csv.c_str());
  return 0;
}

int cmd_d2p_train(const std::vector<std::string>& sets, const std::string& out_dir) {
  RunConfig cfg = load_base_config("", sets, "");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  ColorPalette digital = make_digital_palette();
  ImageTensor sheet = palette_image(digital);
  ImageTensor photo = simulate_channel(sheet, cfg.channel_params(), cfg.channel_seed);
  ColorPalette observed = extract_palette_from_photo(photo);

  D2PTrainConfig tc;
  tc.epochs = cfg.d2p_epochs;
  tc.lr = cfg.d2p_lr;
  tc.seed = cfg.d2p_train_seed;
  tc.hidden = cfg.d2p_hidden;
  D2PTrainResult tr = train_d2p(digital, observed, tc);

  save_mapper((fs::path(out_dir) / "mapper.bin").string(), tr.mapper);
  write_png((fs::path(out_dir) / "palette_digital.png").string(), sheet);
  write_png((fs::path(out_dir) / "palette_photo.png").string(), photo);
  ImageTensor mapped = apply_d2p(tr.mapper, sheet);
  write_png((fs::path(out_dir) / "palette_mapped.png").string(), mapped);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < tr.loss_trace.size(); ++i)
    rows.push_back({std::to_string(i), format_double(tr.loss_trace[i])});
  write_csv((fs::path(out_dir) / "d2p_trace.csv").string(), {"epoch", "mse"}, rows);

  ImageMetrics raw = image_metrics(sheet, photo);
  ImageMetrics fit = image_metrics(mapped, photo);
  std::printf("anchor mse         %.3e\n", tr.final_mse);
  std::printf("sheet vs photo     mse %.3e  psnr %6.2f  mssim %.4f (identity)\n", raw.mse,
              raw.psnr, raw.mssim);
  std::printf("mapped vs photo    mse %.3e  psnr %6.2f  mssim %.4f\n", fit.mse, fit.psnr,
              fit.mssim);
  std::printf("mapper saved to    %s\n", (fs::path(out_dir) / "mapper.bin").string().c_str());

  std::vector<std::vector<std::string>> metric_rows = {
      {"anchor_mse", format_double(tr.final_mse)},
      {"identity_mse", format_double(raw.mse)},
      {"identity_psnr", format_double(raw.psnr)},
      {"identity_mssim", format_double(raw.mssim)},
      {"mapped_mse", format_double(fit.mse)},
      {"mapped_psnr", format_double(fit.psnr)},
      {"mapped_mssim", format_double(fit.mssim)},
  };
  write_csv((fs::path(out_dir) / "metrics.csv").string(), {"metric", "value"}, metric_rows);
  return 0;
}

int cmd_grad_check(int seeds, double tolerance) {
  std::vector<BatteryCase> cases = run_gradient_battery(seeds, tolerance);
  std::printf("%-22s %8s %14s %14s %14s %8s\n", "case", "coords", "max_rel_err", "worst_fd",
              "worst_adjoint", "status");
  for (const BatteryCase& c : cases)
    std::printf("%-22s %8d %14.3e %14.6e %14.6e %8s\n", c.name.c_str(),
                c.report.coords_checked, c.report.max_rel_err, c.report.worst_fd,
                c.report.worst_adjoint, c.report.ok ? "ok" : "FAIL");
  bool ok = battery_passed(cases);
  std::printf("battery %s (%d seeds, tolerance %.1e)\n", ok ? "passed" : "FAILED", seeds,
              tolerance);
  return ok ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& dirs) {
  namespace fs = std::filesystem;
  for (const std::string& dir : dirs) {
    fs::path summary = fs::path(dir) / "summary.csv";
    if (!fs::exists(summary)) {
      std::printf("%s: no summary.csv\n", dir.c_str());
      continue;
    }
    std::printf("%s\n", dir.c_str());
    for (const auto& row : read_csv(summary.string()))
      if (row.size() >= 2) std::printf("  %-20s %s\n", row[0].c_str(), row[1].c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial sticker experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis = "d2p", seeds_text;
  std::vector<std::string> sets, dirs;
  int battery_seeds = 10;
  double tolerance = 1e-4;

  CLI::App* attack = app.add_subcommand("attack", "optimize a sticker and write run artifacts");
  attack->add_option("--config", config_path, "INI config file (defaults when omitted)");
  attack->add_option("--set", sets, "override one key: section.key=value")->take_all();
  attack->add_option("--out", out_dir, "output directory (overrides run.output_dir)");

  CLI::App* suite = app.add_subcommand("suite", "paired ablation over one axis");
  suite->add_option("--config", config_path, "base INI config file");
  suite->add_option("--set", sets, "override one key: section.key=value")->take_all();
  suite->add_option("--axis", axis, "d2p | optimizer | pools")->required();
  suite->add_option("--seeds", seeds_text, "comma-separated trial seeds");
  suite->add_option("--out", out_dir, "suite output directory")->required();

  CLI::App* d2p = app.add_subcommand("d2p-train", "fit the color mapper on a palette pair");
  d2p->add_option("--set", sets, "override one key: section.key=value")->take_all();
  d2p->add_option("--out", out_dir, "output directory")->required();

  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference gradient battery");
  gc->add_option("--seeds", battery_seeds, "random seeds per case");
  gc->add_option("--tolerance", tolerance, "max relative error");

  CLI::App* report = app.add_subcommand("report", "print run summaries");
  report->add_option("dirs", dirs, "run directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(attack)) return cmd_attack(config_path, sets, out_dir);
    if (app.got_subcommand(suite)) return cmd_suite(config_path, sets, axis, seeds_text, out_dir);
    if (app.got_subcommand(d2p)) return cmd_d2p_train(sets, out_dir);
    if (app.got_subcommand(gc)) return cmd_grad_check(battery_seeds, tolerance);
    if (app.got_subcommand(report)) return cmd_report(dirs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

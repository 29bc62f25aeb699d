#include "advsticker/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <thread>

#include "advsticker/error.hpp"
#include "advsticker/faces.hpp"
#include "advsticker/image_io.hpp"
#include "advsticker/rng.hpp"
#include "advsticker/serialize.hpp"
#include "advsticker/warp.hpp"

namespace advsticker {

namespace fs = std::filesystem;

namespace {

std::vector<ImageTensor> load_face_pool(const RunConfig& cfg) {
  if (cfg.face_source == "procedural")
    return make_face_set(cfg.input_size, cfg.identity_seed, cfg.variations);
  std::vector<std::string> files = list_image_files(cfg.face_dir);
  if (files.empty()) throw ConfigError("no images found in faces.dir: " + cfg.face_dir);
  std::vector<ImageTensor> faces;
  for (const auto& path : files) {
    ImageTensor img = read_image(path);
    if (img.channels == 1) {
      ImageTensor rgb(img.height, img.width, 3);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
      img = std::move(rgb);
    }
    faces.push_back(resize_bilinear(img, cfg.input_size, cfg.input_size));
  }
  return faces;
}

EmbeddingModel load_or_build_model(const RunConfig& cfg) {
  if (cfg.model_file.empty())
    return make_toy_model(cfg.model_seed, cfg.input_size, cfg.embed_dim);
  EmbeddingModel model = load_model(cfg.model_file);
  if (model.input_size != cfg.input_size)
    throw ConfigError("model file input size " + std::to_string(model.input_size) +
                      " does not match model.input_size " + std::to_string(cfg.input_size));
  if (model.output_dim != cfg.embed_dim)
    throw ConfigError("model file embedding dim " + std::to_string(model.output_dim) +
                      " does not match model.embed_dim " + std::to_string(cfg.embed_dim));
  return model;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_sticker_pair(const std::string& dir, const std::string& stem,
                        const ImageTensor& img) {
  write_png(join_path(dir, stem + ".png"), img);
  write_ppm(join_path(dir, stem + ".ppm"), img);
}

}  // namespace

RunOutputs execute_run(const RunConfig& raw_cfg,
                       const std::function<void(int, const ImageTensor&)>& snapshot_hook) {
  RunConfig cfg = raw_cfg;
  validate_and_resolve(cfg);

  RunOutputs out;
  out.config = cfg;
  out.model = load_or_build_model(cfg);
  out.faces = load_face_pool(cfg);

  ImageTensor anchor_face = cfg.mode == "dodging" && cfg.face_source == "directory"
                                ? out.faces.front()
                                : make_face(cfg.input_size, cfg.anchor_seed, 0);
  out.anchor_embedding = embed(out.model, anchor_face);

  if (cfg.d2p_mode == "train") {
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
    out.mapper = std::move(tr.mapper);
    out.d2p_final_mse = tr.final_mse;
  } else if (cfg.d2p_mode == "load") {
    out.mapper = load_mapper(cfg.mapper_file);
  }

  AttackContext ctx;
  ctx.model = &out.model;
  ctx.faces = &out.faces;
  ctx.anchor_embedding = out.anchor_embedding;
  ctx.mapper = out.mapper ? &*out.mapper : nullptr;
  ctx.mask = cfg.mask_spec();
  ctx.noise_mean = cfg.noise_mean;
  ctx.noise_stddev = cfg.noise_stddev;
  ctx.mode = cfg.mode == "impersonation" ? AttackMode::kImpersonation : AttackMode::kDodging;
  ctx.threads = cfg.threads > 0 ? cfg.threads
                                : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

  int face_count = static_cast<int>(out.faces.size());
  TransformSet train_set =
      sample_transform_set(cfg.ranges, cfg.train_pool, face_count, cfg.train_seed);
  out.eval_set = sample_transform_set(cfg.ranges, cfg.eval_pool, face_count, cfg.eval_seed);

  AttackRunConfig ac = cfg.attack_config();
  ac.snapshot_hook = snapshot_hook;

  auto t0 = std::chrono::steady_clock::now();
  out.attack = cfg.optimizer == "eot" ? run_eot(ac, ctx, train_set, out.eval_set)
                                      : run_caa(ac, ctx, train_set, out.eval_set);
  out.attack_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // Held-out report. The evaluation deploys the sticker the world would see:
  // the print/readout channel when requested, otherwise the mapper's view,
  // otherwise the raw digital sticker.
  if (cfg.eval_apply_channel)
    out.sticker_eval =
        simulate_channel(out.attack.delta, cfg.channel_params(), cfg.eval_channel_seed);
  else if (out.mapper)
    out.sticker_eval = apply_d2p(*out.mapper, out.attack.delta);
  else
    out.sticker_eval = out.attack.delta;

  double sum_b = 0.0, sum_a = 0.0, sum_l = 0.0;
  for (std::size_t i = 0; i < out.eval_set.samples.size(); ++i) {
    const TransformSample& s = out.eval_set.samples[i];
    const ImageTensor& face = out.faces[static_cast<std::size_t>(s.face_index)];
    NoiseSpec noise{cfg.noise_mean, cfg.noise_stddev, s.noise_seed};

    ImageTensor benign = add_gaussian_noise(affine_photometric(face, s.tb), noise);
    ImageTensor adv =
        render_adversarial(face, out.sticker_eval, s.ta, s.tb, noise, ctx.mask, nullptr);

    std::vector<double> e_adv = embed(out.model, adv);
    EvalRow row;
    row.sample = static_cast<int>(i);
    row.face_index = s.face_index;
    row.cos_benign = cosine(embed(out.model, benign), out.anchor_embedding);
    row.cos_adv = cosine(e_adv, out.anchor_embedding);
    row.loss_adv = attack_loss(ctx.mode, e_adv, out.anchor_embedding);
    sum_b += row.cos_benign;
    sum_a += row.cos_adv;
    sum_l += row.loss_adv;
    out.eval_rows.push_back(row);
  }
  double n = out.eval_rows.empty() ? 1.0 : static_cast<double>(out.eval_rows.size());
  out.mean_cos_benign = sum_b / n;
  out.mean_cos_adv = sum_a / n;
  out.mean_eval_loss = sum_l / n;
  return out;
}

namespace {

std::string resolve_run_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  if (cfg.fresh_dir && fs::exists(dir)) {
    for (int v = 2;; ++v) {
      fs::path candidate(cfg.output_dir + "-v" + std::to_string(v));
      if (!fs::exists(candidate)) {
        dir = candidate;
        break;
      }
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir.string();
}

void write_artifacts_into(const RunOutputs& out, const std::string& dir) {
  const RunConfig& cfg = out.config;

  {
    std::string echo = serialize_config(cfg);
    FILE* f = std::fopen(join_path(dir, "config_resolved.ini").c_str(), "wb");
    if (!f) throw IoError("cannot write config echo in " + dir);
    std::fwrite(echo.data(), 1, echo.size(), f);
    std::fclose(f);
  }

  std::vector<std::vector<std::string>> trace_rows;
  for (const TraceRow& r : out.attack.trace.rows)
    trace_rows.push_back({std::to_string(r.iteration), std::to_string(r.stage),
                          format_double(r.lambda), format_double(r.mean_weight),
                          format_double(r.pool_loss), format_double(r.batch_loss),
                          format_double(r.tv)});
  write_csv(join_path(dir, "trace.csv"),
            {"iteration", "stage", "lambda", "mean_weight", "pool_loss", "batch_loss", "tv"},
            trace_rows);

  std::vector<std::vector<std::string>> report_rows;
  for (const EvalRow& r : out.eval_rows)
    report_rows.push_back({std::to_string(r.sample), std::to_string(r.face_index),
                           format_double(r.cos_benign), format_double(r.cos_adv),
                           format_double(r.loss_adv)});
  write_csv(join_path(dir, "report.csv"),
            {"sample", "face_index", "cos_benign", "cos_adv", "loss_adv"}, report_rows);

  std::vector<std::vector<std::string>> summary;
  summary.push_back({"initial_pool_loss", format_double(out.attack.initial_pool_loss)});
  summary.push_back({"final_pool_loss", format_double(out.attack.final_pool_loss)});
  summary.push_back({"mean_cos_benign", format_double(out.mean_cos_benign)});
  summary.push_back({"mean_cos_adv", format_double(out.mean_cos_adv)});
  summary.push_back({"mean_eval_loss", format_double(out.mean_eval_loss)});
  if (!out.attack.trace.rows.empty())
    summary.push_back({"final_tv", format_double(out.attack.trace.rows.back().tv)});
  if (out.d2p_final_mse >= 0.0)
    summary.push_back({"d2p_final_mse", format_double(out.d2p_final_mse)});
  summary.push_back({"iterations_run",
                     std::to_string(static_cast<long long>(out.attack.trace.rows.size()))});
  write_csv(join_path(dir, "summary.csv"), {"metric", "value"}, summary);

  // wall time lives outside the CSVs so result artifacts stay reproducible
  if (FILE* f = std::fopen(join_path(dir, "timing.txt").c_str(), "wb")) {
    std::fprintf(f, "attack_seconds %.3f\n", out.attack_seconds);
    std::fclose(f);
  }

  write_sticker_pair(dir, "sticker", out.attack.delta);
  if (out.mapper) write_png(join_path(dir, "sticker_mapped.png"), apply_d2p(*out.mapper, out.attack.delta));
  if (cfg.eval_apply_channel) write_png(join_path(dir, "sticker_eval.png"), out.sticker_eval);
  if (out.mapper && cfg.d2p_mode == "train")
    save_mapper(join_path(dir, "mapper.bin"), *out.mapper);

  if (!out.faces.empty()) write_png(join_path(dir, "face_base.png"), out.faces.front());
  int examples = std::min<int>(4, static_cast<int>(out.eval_set.samples.size()));
  for (int i = 0; i < examples; ++i) {
    const TransformSample& s = out.eval_set.samples[static_cast<std::size_t>(i)];
    NoiseSpec noise{cfg.noise_mean, cfg.noise_stddev, s.noise_seed};
    ImageTensor adv = render_adversarial(out.faces[static_cast<std::size_t>(s.face_index)],
                                         out.sticker_eval, s.ta, s.tb, noise, cfg.mask_spec(),
                                         nullptr);
    char name[32];
    std::snprintf(name, sizeof(name), "adv_sample_%d.png", i);
    write_png(join_path(dir, name), adv);
  }

  PlotSeries pool, batch;
  pool.label = "held-out loss";
  pool.color = "#d62728";
  batch.label = "batch loss";
  batch.color = "#1f77b4";
  for (const TraceRow& r : out.attack.trace.rows) {
    double it = static_cast<double>(r.iteration);
    pool.x.push_back(it);
    pool.y.push_back(r.pool_loss);
    batch.x.push_back(it);
    batch.y.push_back(r.batch_loss);
  }
  write_line_plot_svg(join_path(dir, "plot.svg"), "attack convergence", "iteration", "loss",
                      {pool, batch});
}

}  // namespace

std::string write_run_artifacts(const RunOutputs& out) {
  std::string dir = resolve_run_dir(out.config);
  write_artifacts_into(out, dir);
  return dir;
}

RunOutputs run_experiment(const RunConfig& raw_cfg, std::string* run_dir_out) {
  RunConfig cfg = raw_cfg;
  validate_and_resolve(cfg);
  std::string dir = resolve_run_dir(cfg);

  std::function<void(int, const ImageTensor&)> hook;
  if (cfg.snapshot_interval > 0)
    hook = [dir](int iteration, const ImageTensor& delta) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "sticker_%06d", iteration);
      write_sticker_pair(dir, stem, delta);
    };

  RunOutputs out = execute_run(cfg, hook);
  write_artifacts_into(out, dir);
  if (run_dir_out) *run_dir_out = dir;
  return out;
}

const std::vector<std::string>& suite_axis_keys(const std::string& axis) {
  static const std::vector<std::string> d2p = {"d2p.mode", "d2p.mapper_file"};
  static const std::vector<std::string> optimizer = {"run.optimizer"};
  static const std::vector<std::string> pools = {
      "faces.variations", "tb.contrast_min", "tb.contrast_max",
      "tb.brightness_min", "tb.brightness_max"};
  if (axis == "d2p") return d2p;
  if (axis == "optimizer") return optimizer;
  if (axis == "pools") return pools;
  throw ConfigError("unknown ablation axis: " + axis + " (want d2p, optimizer or pools)");
}

namespace {

std::map<std::string, std::string> config_as_map(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  for (const auto& field : config_fields()) m[field.name] = field.print(cfg);
  return m;
}

std::string axis_value_of(const RunConfig& cfg, const std::string& axis) {
  if (axis == "d2p") return cfg.d2p_mode;
  if (axis == "optimizer") return cfg.optimizer;
  return cfg.variations > 1 ? "full" : "narrow";
}

}  // namespace

SuiteResult run_ablation_suite(const std::vector<RunConfig>& arms, const std::string& axis,
                               const std::vector<std::uint64_t>& trial_seeds,
                               const std::string& out_dir) {
  const std::vector<std::string>& allowed = suite_axis_keys(axis);
  if (arms.size() < 2) throw ConfigError("an ablation suite needs at least two arms");

  std::vector<RunConfig> resolved;
  for (RunConfig arm : arms) {
    validate_and_resolve(arm);
    resolved.push_back(std::move(arm));
  }
  auto base_map = config_as_map(resolved.front());
  for (std::size_t i = 1; i < resolved.size(); ++i) {
    auto m = config_as_map(resolved[i]);
    for (const auto& [key, value] : m) {
      if (key == "run.output_dir") continue;  // the suite assigns directories
      if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
      if (base_map.at(key) != value)
        throw ConfigError("suite arms differ outside the '" + axis + "' axis at " + key +
                          ": '" + base_map.at(key) + "' vs '" + value + "'");
    }
  }

  std::vector<std::uint64_t> seeds = trial_seeds;
  bool keep_own_seeds = seeds.empty();
  if (keep_own_seeds) seeds.push_back(0);

  SuiteResult result;
  result.axis = axis;
  for (std::uint64_t seed : seeds) {
    for (const RunConfig& arm : resolved) {
      RunConfig cfg = arm;
      std::string value = axis_value_of(cfg, axis);
      std::string run_id = value;
      if (!keep_own_seeds) {
        Rng rng(seed);
        cfg.init_seed = rng.next_u64();
        cfg.batch_seed = rng.next_u64();
        run_id += "_s" + std::to_string(seed);
      }
      cfg.output_dir = (fs::path(out_dir) / run_id).string();
      cfg.fresh_dir = false;

      std::string run_dir;
      RunOutputs out = run_experiment(cfg, &run_dir);

      SuiteRunRow row;
      row.run_id = run_id;
      row.axis_value = value;
      row.trial_seed = seed;
      row.initial_pool_loss = out.attack.initial_pool_loss;
      row.final_pool_loss = out.attack.final_pool_loss;
      row.mean_cos_benign = out.mean_cos_benign;
      row.mean_cos_adv = out.mean_cos_adv;
      row.mean_eval_loss = out.mean_eval_loss;
      row.run_dir = run_dir;
      result.rows.push_back(std::move(row));
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::vector<std::vector<std::string>> rows;
  for (const SuiteRunRow& r : result.rows)
    rows.push_back({r.run_id, r.axis_value, std::to_string(r.trial_seed),
                    format_double(r.initial_pool_loss), format_double(r.final_pool_loss),
                    format_double(r.mean_cos_benign), format_double(r.mean_cos_adv),
                    format_double(r.mean_eval_loss), r.run_dir});
  result.comparison_csv = (fs::path(out_dir) / "comparison.csv").string();
  write_csv(result.comparison_csv,
            {"run_id", "axis_value", "trial_seed", "initial_pool_loss", "final_pool_loss",
             "mean_cos_benign", "mean_cos_adv", "mean_eval_loss", "run_dir"},
            rows);
  return result;
}

std::vector<RunConfig> make_suite_arms(const RunConfig& base, const std::string& axis) {
  suite_axis_keys(axis);  // validates the axis name
  RunConfig a = base, b = base;
  if (axis == "d2p") {
    a.d2p_mode = "train";
    b.d2p_mode = "off";
    b.mapper_file.clear();
    a.eval_apply_channel = b.eval_apply_channel = true;
  } else if (axis == "optimizer") {
    a.optimizer = "caa";
    b.optimizer = "eot";
    long long total = 0;
    for (int e : a.epochs) total += e;
    a.iterations = b.iterations = static_cast<int>(total);
  } else {
    b.variations = 1;
    b.ranges.tb_contrast_min = b.ranges.tb_contrast_max = 1.0;
    b.ranges.tb_brightness_min = b.ranges.tb_brightness_max = 0.0;
  }
  return {a, b};
}

}  // namespace advsticker

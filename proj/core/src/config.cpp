#include "advsticker/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "advsticker/error.hpp"
#include "advsticker/image_io.hpp"

namespace advsticker {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double_value(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + value + "'");
  }
}

long long parse_int_value(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_u64_value(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad seed value for " + key + ": '" + value + "'");
  }
}

bool parse_bool_value(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("bad boolean value for " + key + ": '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!value.empty() && value.back() == ',') out.push_back("");
  return out;
}

std::string print_bool(bool v) { return v ? "true" : "false"; }

std::string print_int(long long v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld", v);
  return buf;
}

std::string print_u64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
  return buf;
}

ConfigField field_int(const std::string& name, int RunConfig::* member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) {
            c.*member = static_cast<int>(parse_int_value(name, v));
          },
          [member](const RunConfig& c) { return print_int(c.*member); }};
}

ConfigField field_double(const std::string& name, double RunConfig::* member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) {
            c.*member = parse_double_value(name, v);
          },
          [member](const RunConfig& c) { return format_double(c.*member); }};
}

ConfigField field_range(const std::string& name, double TransformRanges::* member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) {
            c.ranges.*member = parse_double_value(name, v);
          },
          [member](const RunConfig& c) { return format_double(c.ranges.*member); }};
}

ConfigField field_u64(const std::string& name, std::uint64_t RunConfig::* member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) {
            c.*member = parse_u64_value(name, v);
          },
          [member](const RunConfig& c) { return print_u64(c.*member); }};
}

ConfigField field_bool(const std::string& name, bool RunConfig::* member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) {
            c.*member = parse_bool_value(name, v);
          },
          [member](const RunConfig& c) { return print_bool(c.*member); }};
}

ConfigField field_string(const std::string& name, std::string RunConfig::* member) {
  return {name, [member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  f.push_back(field_string("run.mode", &RunConfig::mode));
  f.push_back(field_string("run.optimizer", &RunConfig::optimizer));
  f.push_back(field_string("run.output_dir", &RunConfig::output_dir));
  f.push_back(field_bool("run.fresh_dir", &RunConfig::fresh_dir));

  f.push_back(field_int("attack.iterations", &RunConfig::iterations));
  f.push_back(field_double("attack.lr", &RunConfig::lr));
  f.push_back(field_double("attack.momentum", &RunConfig::momentum));
  f.push_back(field_double("attack.alpha", &RunConfig::alpha));
  f.push_back(field_int("attack.batch_size", &RunConfig::batch_size));
  f.push_back(field_u64("attack.init_seed", &RunConfig::init_seed));
  f.push_back(field_u64("attack.batch_seed", &RunConfig::batch_seed));
  f.push_back(field_int("attack.pool_eval_interval", &RunConfig::pool_eval_interval));
  f.push_back(field_int("attack.snapshot_interval", &RunConfig::snapshot_interval));

  f.push_back({"schedule.betas",
               [](RunConfig& c, const std::string& v) {
                 c.betas.clear();
                 for (const auto& item : split_list(v))
                   c.betas.push_back(parse_double_value("schedule.betas", item));
               },
               [](const RunConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.betas.size(); ++i) {
                   if (i) out += ",";
                   out += format_double(c.betas[i]);
                 }
                 return out;
               }});
  f.push_back({"schedule.epochs",
               [](RunConfig& c, const std::string& v) {
                 c.epochs.clear();
                 for (const auto& item : split_list(v))
                   c.epochs.push_back(
                       static_cast<int>(parse_int_value("schedule.epochs", item)));
               },
               [](const RunConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.epochs.size(); ++i) {
                   if (i) out += ",";
                   out += print_int(c.epochs[i]);
                 }
                 return out;
               }});

  f.push_back(field_int("sticker.height", &RunConfig::sticker_height));
  f.push_back(field_int("sticker.width", &RunConfig::sticker_width));
  f.push_back(field_int("sticker.anchor_x", &RunConfig::anchor_x));
  f.push_back(field_int("sticker.anchor_y", &RunConfig::anchor_y));

  f.push_back(field_int("model.input_size", &RunConfig::input_size));
  f.push_back(field_int("model.embed_dim", &RunConfig::embed_dim));
  f.push_back(field_u64("model.seed", &RunConfig::model_seed));
  f.push_back(field_string("model.file", &RunConfig::model_file));
  f.push_back(field_int("model.threads", &RunConfig::threads));

  f.push_back(field_string("faces.source", &RunConfig::face_source));
  f.push_back(field_string("faces.dir", &RunConfig::face_dir));
  f.push_back(field_u64("faces.identity_seed", &RunConfig::identity_seed));
  f.push_back(field_u64("faces.anchor_seed", &RunConfig::anchor_seed));
  f.push_back(field_int("faces.variations", &RunConfig::variations));

  f.push_back(field_int("pools.train_size", &RunConfig::train_pool));
  f.push_back(field_int("pools.eval_size", &RunConfig::eval_pool));
  f.push_back(field_u64("pools.train_seed", &RunConfig::train_seed));
  f.push_back(field_u64("pools.eval_seed", &RunConfig::eval_seed));
  f.push_back({"pools.grid_levels",
               [](RunConfig& c, const std::string& v) {
                 c.ranges.grid_levels =
                     static_cast<int>(parse_int_value("pools.grid_levels", v));
               },
               [](const RunConfig& c) { return print_int(c.ranges.grid_levels); }});

  f.push_back(field_range("ta.angle_min_deg", &TransformRanges::ta_angle_min));
  f.push_back(field_range("ta.angle_max_deg", &TransformRanges::ta_angle_max));
  f.push_back(field_range("ta.rate_min", &TransformRanges::ta_rate_min));
  f.push_back(field_range("ta.rate_max", &TransformRanges::ta_rate_max));
  f.push_back(field_range("ta.rotation_min_deg", &TransformRanges::ta_rotation_min));
  f.push_back(field_range("ta.rotation_max_deg", &TransformRanges::ta_rotation_max));
  f.push_back(field_range("ta.translate_min_px", &TransformRanges::ta_translation_min));
  f.push_back(field_range("ta.translate_max_px", &TransformRanges::ta_translation_max));

  f.push_back(field_range("tb.rotation_min_deg", &TransformRanges::tb_rotation_min));
  f.push_back(field_range("tb.rotation_max_deg", &TransformRanges::tb_rotation_max));
  f.push_back(field_range("tb.scale_min", &TransformRanges::tb_scale_min));
  f.push_back(field_range("tb.scale_max", &TransformRanges::tb_scale_max));
  f.push_back(field_range("tb.translate_min_px", &TransformRanges::tb_translation_min));
  f.push_back(field_range("tb.translate_max_px", &TransformRanges::tb_translation_max));
  f.push_back(field_range("tb.contrast_min", &TransformRanges::tb_contrast_min));
  f.push_back(field_range("tb.contrast_max", &TransformRanges::tb_contrast_max));
  f.push_back(field_range("tb.brightness_min", &TransformRanges::tb_brightness_min));
  f.push_back(field_range("tb.brightness_max", &TransformRanges::tb_brightness_max));

  f.push_back(field_double("noise.mean", &RunConfig::noise_mean));
  f.push_back(field_double("noise.stddev", &RunConfig::noise_stddev));

  f.push_back(field_string("d2p.mode", &RunConfig::d2p_mode));
  f.push_back(field_int("d2p.epochs", &RunConfig::d2p_epochs));
  f.push_back(field_double("d2p.lr", &RunConfig::d2p_lr));
  f.push_back(field_int("d2p.hidden", &RunConfig::d2p_hidden));
  f.push_back(field_u64("d2p.train_seed", &RunConfig::d2p_train_seed));
  f.push_back(field_string("d2p.mapper_file", &RunConfig::mapper_file));
  f.push_back(field_double("d2p.gamma_r", &RunConfig::gamma_r));
  f.push_back(field_double("d2p.gamma_g", &RunConfig::gamma_g));
  f.push_back(field_double("d2p.gamma_b", &RunConfig::gamma_b));
  f.push_back(field_double("d2p.mix_diag", &RunConfig::mix_diag));
  f.push_back(field_double("d2p.mix_offdiag", &RunConfig::mix_offdiag));
  f.push_back(field_double("d2p.channel_offset", &RunConfig::channel_offset));
  f.push_back(field_double("d2p.channel_noise", &RunConfig::channel_noise));
  f.push_back(field_u64("d2p.channel_seed", &RunConfig::channel_seed));

  f.push_back(field_bool("eval.apply_channel", &RunConfig::eval_apply_channel));
  f.push_back(field_u64("eval.channel_seed", &RunConfig::eval_channel_seed));
  return f;
}

const ConfigField* find_field(const std::string& name) {
  for (const auto& field : config_fields())
    if (field.name == name) return &field;
  return nullptr;
}

void check_choice(const std::string& key, const std::string& value,
                  std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string msg = key + " must be one of {";
  bool first = true;
  for (const char* a : allowed) {
    if (!first) msg += ", ";
    msg += a;
    first = false;
  }
  throw ConfigError(msg + "}, got '" + value + "'");
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

ChannelParams RunConfig::channel_params() const {
  ChannelParams p;
  p.gamma[0] = gamma_r;
  p.gamma[1] = gamma_g;
  p.gamma[2] = gamma_b;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.mix[r][c] = (r == c) ? mix_diag : mix_offdiag;
  p.offset = channel_offset;
  p.noise_stddev = channel_noise;
  return p;
}

CurriculumSchedule RunConfig::schedule() const {
  CurriculumSchedule s;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    CurriculumStage st;
    st.beta = betas[i];
    st.epochs = i < epochs.size() ? epochs[i] : 0;
    s.stages.push_back(st);
  }
  return s;
}

AttackRunConfig RunConfig::attack_config() const {
  AttackRunConfig a;
  a.iterations = iterations;
  a.schedule = schedule();
  a.lr = lr;
  a.momentum = momentum;
  a.alpha = alpha;
  a.batch_size = batch_size;
  a.init_seed = init_seed;
  a.batch_seed = batch_seed;
  a.pool_eval_interval = pool_eval_interval;
  a.snapshot_interval = snapshot_interval;
  return a;
}

MaskSpec RunConfig::mask_spec() const {
  MaskSpec m;
  m.sticker_height = sticker_height;
  m.sticker_width = sticker_width;
  m.anchor_x = anchor_x;
  m.anchor_y = anchor_y;
  m.face_height = input_size;
  m.face_width = input_size;
  return m;
}

void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigField* field = find_field(key);
  if (!field) throw ConfigError("unknown config key: " + key);
  std::string v = trim(value);
  if (v.empty()) throw ConfigError("empty value for config key: " + key);
  field->parse(cfg, v);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError("bad section header on line " + std::to_string(line_no) + ": " + t);
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key=value on line " + std::to_string(line_no) + ": " + t);
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("missing key on line " + std::to_string(line_no));
    if (section.empty())
      throw ConfigError("key '" + key + "' appears before any [section] header");
    apply_config_override(cfg, section + "." + key, value);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void validate_and_resolve(RunConfig& cfg) {
  check_choice("run.mode", cfg.mode, {"dodging", "impersonation"});
  check_choice("run.optimizer", cfg.optimizer, {"eot", "caa"});
  check_choice("faces.source", cfg.face_source, {"procedural", "directory"});
  check_choice("d2p.mode", cfg.d2p_mode, {"off", "train", "load"});
  if (cfg.face_source == "directory" && cfg.face_dir.empty())
    throw ConfigError("faces.source=directory requires faces.dir");
  if (cfg.d2p_mode == "load" && cfg.mapper_file.empty())
    throw ConfigError("d2p.mode=load requires d2p.mapper_file");

  if (cfg.input_size < 32) throw ConfigError("model.input_size must be at least 32");
  if (cfg.embed_dim < 1) throw ConfigError("model.embed_dim must be positive");
  if (cfg.threads < 0) throw ConfigError("model.threads must be non-negative");
  if (cfg.variations < 1) throw ConfigError("faces.variations must be positive");
  if (cfg.train_pool < 1 || cfg.eval_pool < 1)
    throw ConfigError("pool sizes must be positive");
  if (cfg.train_seed == cfg.eval_seed)
    throw ConfigError("pools.train_seed and pools.eval_seed must differ");
  if (cfg.noise_stddev < 0.0) throw ConfigError("noise.stddev must be non-negative");
  if (cfg.d2p_epochs < 1) throw ConfigError("d2p.epochs must be positive");
  if (cfg.d2p_hidden < 1) throw ConfigError("d2p.hidden must be positive");
  if (!(cfg.d2p_lr > 0.0)) throw ConfigError("d2p.lr must be positive");
  if (!(cfg.gamma_r > 0.0 && cfg.gamma_g > 0.0 && cfg.gamma_b > 0.0))
    throw ConfigError("d2p gamma values must be positive");
  if (cfg.channel_noise < 0.0) throw ConfigError("d2p.channel_noise must be non-negative");

  if (cfg.betas.size() != cfg.epochs.size())
    throw ConfigError("schedule.betas and schedule.epochs must have equal length");
  if (cfg.optimizer == "caa") {
    try {
      cfg.schedule().validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("bad schedule: ") + e.what());
    }
    // the curriculum owns the budget; the echo reports the count actually run
    int total = 0;
    for (int e : cfg.epochs) total += e;
    cfg.iterations = total;
  }
  try {
    cfg.attack_config().validate();
    cfg.ranges.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  if (cfg.sticker_height < 1 || cfg.sticker_width < 1)
    throw ConfigError("sticker dimensions must be positive");
  if (cfg.anchor_x < 0)
    cfg.anchor_x = (cfg.input_size - cfg.sticker_width) / 2;
  if (cfg.anchor_y < 0)
    cfg.anchor_y = static_cast<int>(std::lround(0.3 * cfg.input_size - 0.5 * cfg.sticker_height));
  if (cfg.anchor_y < 0) cfg.anchor_y = 0;
  try {
    cfg.mask_spec().validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  if (cfg.anchor_seed == 0) {
    // The dodging anchor is the attacker's own benign embedding; the
    // impersonation target is a distinct identity.
    cfg.anchor_seed = cfg.mode == "impersonation" ? cfg.identity_seed + 101 : cfg.identity_seed;
  }
  if (cfg.output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& field : config_fields()) {
    std::string value = field.print(cfg);
    if (value.empty()) continue;  // unset optional paths; parse rejects empty values
    std::size_t dot = field.name.find('.');
    std::string sec = field.name.substr(0, dot);
    std::string key = field.name.substr(dot + 1);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key + " = " + value + "\n";
  }
  return out;
}

}  // namespace advsticker

#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "errors.hpp"

namespace retarget {
namespace {

using nlohmann::json;

int64_t as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<int64_t>();
}

uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)) {
    throw ConfigError("config key '" + key + "' must be a nonnegative integer");
  }
  return v.get<uint64_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

struct Field {
  const char* key;
  std::function<void(ModelConfig&, const json&, const std::string&)> set;
  std::function<json(const ModelConfig&)> get;
};

#define INT_FIELD(name, member) \
  Field{name, [](ModelConfig& c, const json& v, const std::string& k) { c.member = as_int(v, k); }, \
        [](const ModelConfig& c) { return json(c.member); }}
#define DOUBLE_FIELD(name, member) \
  Field{name, [](ModelConfig& c, const json& v, const std::string& k) { c.member = as_double(v, k); }, \
        [](const ModelConfig& c) { return json(c.member); }}
#define BOOL_FIELD(name, member) \
  Field{name, [](ModelConfig& c, const json& v, const std::string& k) { c.member = as_bool(v, k); }, \
        [](const ModelConfig& c) { return json(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      INT_FIELD("g_base_channels", generator.base_channels),
      INT_FIELD("g_max_channels", generator.max_channels),
      INT_FIELD("g_depth", generator.depth),
      INT_FIELD("g_residual_blocks", generator.residual_blocks),
      INT_FIELD("g_kernel", generator.kernel),
      BOOL_FIELD("g_use_skip", generator.use_skip),
      Field{"g_normalization",
            [](ModelConfig& c, const json& v, const std::string& k) {
              const auto s = as_string(v, k);
              if (s == "batch") c.generator.normalization = Normalization::Batch;
              else if (s == "none") c.generator.normalization = Normalization::None;
              else throw ConfigError("g_normalization must be \"batch\" or \"none\"");
            },
            [](const ModelConfig& c) {
              return json(c.generator.normalization == Normalization::Batch ? "batch" : "none");
            }},
      BOOL_FIELD("g_spectral_norm_all_but_last", generator.spectral_norm_all_but_last),
      INT_FIELD("d_num_scales", discriminator.num_scales),
      DOUBLE_FIELD("d_downscale_factor", discriminator.downscale_factor),
      INT_FIELD("d_convs_per_scale", discriminator.convs_per_scale),
      BOOL_FIELD("d_first_conv_strided", discriminator.first_conv_strided),
      INT_FIELD("d_channels", discriminator.channels),
      BOOL_FIELD("d_share_weights", discriminator.share_weights),
      INT_FIELD("d_kernel", discriminator.kernel),
      DOUBLE_FIELD("lambda_reconst", train.lambda_reconst),
      INT_FIELD("iterations", train.iterations),
      DOUBLE_FIELD("lr_g", train.lr_g),
      DOUBLE_FIELD("lr_d", train.lr_d),
      DOUBLE_FIELD("beta1", train.beta1),
      DOUBLE_FIELD("beta2", train.beta2),
      Field{"lr_decay",
            [](ModelConfig& c, const json& v, const std::string& k) {
              if (as_string(v, k) != "linear") throw ConfigError("lr_decay must be \"linear\"");
              c.train.lr_decay = LrDecay::Linear;
            },
            [](const ModelConfig&) { return json("linear"); }},
      INT_FIELD("crop_min", train.crop_min),
      INT_FIELD("crop_max", train.crop_max),
      INT_FIELD("batch_size", train.batch_size),
      INT_FIELD("curriculum_iters", train.curriculum_iters),
      DOUBLE_FIELD("max_scale_dev", train.transform_ranges.max_scale_dev),
      DOUBLE_FIELD("max_shift", train.transform_ranges.max_shift),
      DOUBLE_FIELD("max_perspective", train.transform_ranges.max_perspective),
      DOUBLE_FIELD("max_shear", train.transform_ranges.max_shear),
      BOOL_FIELD("ablate_reconst", train.ablate_reconst),
      BOOL_FIELD("ablate_multiscale", train.ablate_multiscale),
      Field{"seed",
            [](ModelConfig& c, const json& v, const std::string& k) { c.train.seed = as_uint(v, k); },
            [](const ModelConfig& c) { return json(c.train.seed); }},
      INT_FIELD("snapshot_every", train.snapshot_every),
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

void CurriculumRanges::validate() const {
  for (double v : {max_scale_dev, max_shift, max_perspective, max_shear}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("transform ranges must be finite and nonnegative");
  }
  if (max_scale_dev >= 1.0) throw ConfigError("max_scale_dev must be < 1");
  if (max_shear >= 1.0) throw ConfigError("max_shear must be < 1");
  if (max_perspective >= 1.0) throw ConfigError("max_perspective must be < 1");
}

void TrainConfig::validate() const {
  if (!(lambda_reconst >= 0.0)) throw ConfigError("lambda_reconst must be >= 0");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("ADAM betas must lie in [0, 1)");
  }
  if (crop_min < 1 || crop_min > crop_max) throw ConfigError("need 1 <= crop_min <= crop_max");
  if (batch_size != 1) throw ConfigError("batch_size must be 1");
  if (curriculum_iters < 0) {
    throw ConfigError("curriculum_iters must be non-negative");
  }
  if (snapshot_every < 0) throw ConfigError("snapshot_every must be >= 0");
  transform_ranges.validate();
}

void ModelConfig::validate() const {
  generator.validate();
  discriminator.validate();
  train.validate();
}

ModelConfig desk_config() {
  ModelConfig c;
  c.generator.depth = 3;
  c.generator.base_channels = 32;
  c.generator.max_channels = 64;
  c.generator.residual_blocks = 2;
  c.discriminator.num_scales = 3;
  c.discriminator.channels = 32;
  c.train.iterations = 2000;
  c.train.curriculum_iters = 1000;
  c.train.crop_min = 48;
  c.train.crop_max = 64;
  c.train.snapshot_every = 500;
  c.train.transform_ranges.max_scale_dev = 0.3;
  return c;
}

ModelConfig apply_config(ModelConfig base, const nlohmann::json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : flat.items()) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(base, value, key);
  }
  return base;
}

nlohmann::json to_json(const ModelConfig& config) {
  json out = json::object();
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json flat;
  try {
    flat = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_config(std::move(base), flat);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace retarget

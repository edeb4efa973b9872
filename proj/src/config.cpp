#include "asaloc/config.hpp"

#include <fstream>
#include <set>

namespace asaloc {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed,
                const std::string& scope) {
  if (!j.is_object()) throw ConfigError("config: '" + scope + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("config: unknown key '" + scope + "." + key + "'");
    }
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_index(const Json& j, const char* key, Index& out) {
  if (j.contains(key)) out = j.at(key).get<Index>();
}

}  // namespace

void BackboneConfig::validate() const {
  if (image_height <= 0 || image_width <= 0 || channels <= 0) {
    throw ConfigError("backbone: image dimensions must be positive");
  }
  if (patch_size <= 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ConfigError("backbone: image height and width must be exact multiples of patch_size");
  }
  if (embed_dim <= 0 || depth <= 0 || num_heads <= 0) {
    throw ConfigError("backbone: embed_dim, depth and num_heads must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("backbone: embed_dim must be divisible by num_heads");
  }
  if (mlp_ratio <= 0.0) throw ConfigError("backbone: mlp_ratio must be positive");
}

void HeadConfig::validate() const {
  if (additive_dim <= 0) throw ConfigError("head: additive_dim must be positive");
  if (num_classes <= 0) throw ConfigError("head: num_classes must be positive");
  if (margin < 0.0) throw ConfigError("head: margin must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("head: dropout must be in [0, 1)");
}

void ModelConfig::validate() const {
  backbone.validate();
  asa.validate();
  head.validate();
  if (backbone.num_patches() < asa.num_parts) {
    throw ConfigError("model: patch count N must be >= num_parts K");
  }
}

void TrainConfig::validate() const {
  if (batch_size < 4 || batch_size % 2 != 0) {
    throw ConfigError("train: batch_size must be even and >= 4");
  }
  if (epochs <= 0) throw ConfigError("train: epochs must be positive");
  if (base_lr_backbone < 0 || base_lr_new < 0) throw ConfigError("train: learning rates must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0, 1)");
  if (sat_oversample < 1) throw ConfigError("train: sat_oversample must be >= 1");
  if (lr_decay_factor <= 0) throw ConfigError("train: lr_decay_factor must be positive");
  if (val_every < 1) throw ConfigError("train: val_every must be >= 1");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

Json to_json(const BackboneConfig& c) {
  return Json{{"image_height", c.image_height}, {"image_width", c.image_width},
              {"channels", c.channels},         {"patch_size", c.patch_size},
              {"embed_dim", c.embed_dim},       {"depth", c.depth},
              {"num_heads", c.num_heads},       {"mlp_ratio", c.mlp_ratio},
              {"final_layernorm", c.final_layernorm}};
}

Json to_json(const asa::PartitionSpec& c) {
  return Json{{"num_parts", c.num_parts},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"strategy", to_string(c.strategy)},
              {"attention_grad", to_string(c.attention_grad)},
              {"kmeans_max_iters", c.kmeans_max_iters},
              {"kmeans_tol", c.kmeans_tol}};
}

Json to_json(const HeadConfig& c) {
  return Json{{"additive_dim", c.additive_dim},
              {"num_classes", c.num_classes},
              {"margin", c.margin},
              {"include_global_head", c.include_global_head},
              {"dropout", c.dropout}};
}

Json to_json(const ModelConfig& c) {
  Json j{{"backbone", to_json(c.backbone)},
         {"asa", to_json(c.asa)},
         {"head", to_json(c.head)}};
  if (!c.normalization.empty()) {
    j["normalization"] = Json{{"mean", c.normalization.mean},
                              {"stddev", c.normalization.stddev}};
  }
  return j;
}

Json to_json(const AugmentConfig& c) {
  return Json{{"enabled", c.enabled},
              {"flip_prob", c.flip_prob},
              {"max_rotation_deg", c.max_rotation_deg},
              {"min_crop_scale", c.min_crop_scale}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"base_lr_backbone", c.base_lr_backbone},
              {"base_lr_new", c.base_lr_new},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"lr_decay_factor", c.lr_decay_factor},
              {"lr_decay_epochs", c.lr_decay_epochs},
              {"seed", c.seed},
              {"sat_oversample", c.sat_oversample},
              {"steps_per_epoch", c.steps_per_epoch},
              {"grad_clip", c.grad_clip},
              {"val_every", c.val_every},
              {"augment", to_json(c.augment)}};
}

Json to_json(const EvalConfig& c) {
  return Json{{"l2_normalize", c.l2_normalize}, {"recall_ks", c.recall_ks}};
}

Json to_json(const RunConfig& c) {
  return Json{{"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"eval", to_json(c.eval)}};
}

BackboneConfig backbone_config_from_json(const Json& j) {
  BackboneConfig c;
  check_keys(j, {"image_height", "image_width", "channels", "patch_size", "embed_dim",
                 "depth", "num_heads", "mlp_ratio", "final_layernorm"},
             "model.backbone");
  read_index(j, "image_height", c.image_height);
  read_index(j, "image_width", c.image_width);
  read_index(j, "channels", c.channels);
  read_index(j, "patch_size", c.patch_size);
  read_index(j, "embed_dim", c.embed_dim);
  read_index(j, "depth", c.depth);
  read_index(j, "num_heads", c.num_heads);
  read(j, "mlp_ratio", c.mlp_ratio);
  read(j, "final_layernorm", c.final_layernorm);
  return c;
}

asa::PartitionSpec partition_spec_from_json(const Json& j) {
  asa::PartitionSpec c;
  check_keys(j, {"num_parts", "alpha", "beta", "strategy", "attention_grad",
                 "kmeans_max_iters", "kmeans_tol"},
             "model.asa");
  read_index(j, "num_parts", c.num_parts);
  read(j, "alpha", c.alpha);
  read(j, "beta", c.beta);
  if (j.contains("strategy")) c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  if (j.contains("attention_grad")) {
    c.attention_grad = attention_grad_from_string(j.at("attention_grad").get<std::string>());
  }
  read(j, "kmeans_max_iters", c.kmeans_max_iters);
  read(j, "kmeans_tol", c.kmeans_tol);
  return c;
}

HeadConfig head_config_from_json(const Json& j) {
  HeadConfig c;
  check_keys(j, {"additive_dim", "num_classes", "margin", "include_global_head", "dropout"},
             "model.head");
  read_index(j, "additive_dim", c.additive_dim);
  read_index(j, "num_classes", c.num_classes);
  read(j, "margin", c.margin);
  read(j, "include_global_head", c.include_global_head);
  read(j, "dropout", c.dropout);
  return c;
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  check_keys(j, {"backbone", "asa", "head", "normalization"}, "model");
  if (j.contains("backbone")) c.backbone = backbone_config_from_json(j.at("backbone"));
  if (j.contains("asa")) c.asa = partition_spec_from_json(j.at("asa"));
  if (j.contains("head")) c.head = head_config_from_json(j.at("head"));
  if (j.contains("normalization")) {
    const Json& n = j.at("normalization");
    check_keys(n, {"mean", "stddev"}, "model.normalization");
    c.normalization.mean = n.at("mean").get<std::vector<double>>();
    c.normalization.stddev = n.at("stddev").get<std::vector<double>>();
  }
  return c;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  check_keys(j, {"batch_size", "epochs", "base_lr_backbone", "base_lr_new", "momentum",
                 "weight_decay", "lr_decay_factor", "lr_decay_epochs", "seed",
                 "sat_oversample", "steps_per_epoch", "grad_clip", "val_every", "augment"},
             "train");
  read_index(j, "batch_size", c.batch_size);
  read_index(j, "epochs", c.epochs);
  read(j, "base_lr_backbone", c.base_lr_backbone);
  read(j, "base_lr_new", c.base_lr_new);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "lr_decay_factor", c.lr_decay_factor);
  if (j.contains("lr_decay_epochs")) c.lr_decay_epochs = j.at("lr_decay_epochs").get<std::vector<Index>>();
  read(j, "seed", c.seed);
  read_index(j, "sat_oversample", c.sat_oversample);
  read_index(j, "steps_per_epoch", c.steps_per_epoch);
  read(j, "grad_clip", c.grad_clip);
  read_index(j, "val_every", c.val_every);
  if (j.contains("augment")) {
    const Json& a = j.at("augment");
    check_keys(a, {"enabled", "flip_prob", "max_rotation_deg", "min_crop_scale"}, "train.augment");
    read(a, "enabled", c.augment.enabled);
    read(a, "flip_prob", c.augment.flip_prob);
    read(a, "max_rotation_deg", c.augment.max_rotation_deg);
    read(a, "min_crop_scale", c.augment.min_crop_scale);
  }
  return c;
}

EvalConfig eval_config_from_json(const Json& j) {
  EvalConfig c;
  check_keys(j, {"l2_normalize", "recall_ks"}, "eval");
  read(j, "l2_normalize", c.l2_normalize);
  if (j.contains("recall_ks")) c.recall_ks = j.at("recall_ks").get<std::vector<Index>>();
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  check_keys(j, {"model", "train", "eval"}, "config");
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("eval")) c.eval = eval_config_from_json(j.at("eval"));
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path));
}

namespace {

void collect_paths(const Json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      collect_paths(value, path, out);
    } else {
      out.push_back(path);
    }
  }
}

Json parse_override_value(const std::string& raw) {
  const Json parsed = Json::parse(raw, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return Json(raw);  // bare strings like soft_kmeans
}

}  // namespace

void apply_overrides(Json& config, const std::vector<std::string>& overrides) {
  std::vector<std::string> paths;
  collect_paths(config, "", paths);

  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + kv + "' is not of the form key=value");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw_value = kv.substr(eq + 1);

    std::vector<std::string> matches;
    for (const std::string& p : paths) {
      if (p == key || p.ends_with("." + key)) matches.push_back(p);
    }
    if (matches.empty()) throw ConfigError("override key '" + key + "' matches no config entry");
    if (matches.size() > 1) {
      std::string msg = "override key '" + key + "' is ambiguous:";
      for (const auto& m : matches) msg += " " + m;
      throw ConfigError(msg);
    }

    Json* node = &config;
    std::string path = matches.front();
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string part = path.substr(start, dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = parse_override_value(raw_value);
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed JSON in " + path.string());
  return j;
}

}  // namespace asaloc

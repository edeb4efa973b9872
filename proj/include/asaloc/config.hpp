#pragma once

#include "asaloc/asa.hpp"
#include "asaloc/image.hpp"
#include "asaloc/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace asaloc {

using Json = nlohmann::json;

struct BackboneConfig {
  Index image_height = 64;
  Index image_width = 64;
  Index channels = 3;
  Index patch_size = 8;
  Index embed_dim = 64;
  Index depth = 4;
  Index num_heads = 4;
  double mlp_ratio = 4.0;
  bool final_layernorm = false;

  Index grid_rows() const { return image_height / patch_size; }
  Index grid_cols() const { return image_width / patch_size; }
  Index num_patches() const { return grid_rows() * grid_cols(); }
  Index patch_dim() const { return patch_size * patch_size * channels; }
  Index mlp_hidden() const { return static_cast<Index>(embed_dim * mlp_ratio); }

  void validate() const;
};

struct HeadConfig {
  Index additive_dim = 512;
  Index num_classes = 701;
  double margin = 0.3;
  bool include_global_head = true;
  double dropout = 0.0;

  void validate() const;
};

struct ModelConfig {
  BackboneConfig backbone;
  asa::PartitionSpec asa;
  HeadConfig head;
  ChannelStats normalization;  // filled from the training split

  void validate() const;
};

struct AugmentConfig {
  bool enabled = true;
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;
  double min_crop_scale = 0.9;
};

struct TrainConfig {
  Index batch_size = 8;
  Index epochs = 120;
  double base_lr_backbone = 0.003;
  double base_lr_new = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lr_decay_factor = 0.1;
  std::vector<Index> lr_decay_epochs = {70, 110};
  std::uint64_t seed = 0;
  Index sat_oversample = 3;
  Index steps_per_epoch = 0;  // 0: derived from the dataset size
  double grad_clip = 0.0;     // 0: off
  Index val_every = 1;
  AugmentConfig augment;

  void validate() const;
};

struct EvalConfig {
  bool l2_normalize = false;
  std::vector<Index> recall_ks = {1, 5, 10};
};

/// Whole run configuration as read from a JSON file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

Json to_json(const BackboneConfig&);
Json to_json(const asa::PartitionSpec&);
Json to_json(const HeadConfig&);
Json to_json(const ModelConfig&);
Json to_json(const AugmentConfig&);
Json to_json(const TrainConfig&);
Json to_json(const EvalConfig&);
Json to_json(const RunConfig&);

/// Parsers reject unknown keys; omitted keys keep their defaults.
BackboneConfig backbone_config_from_json(const Json&);
asa::PartitionSpec partition_spec_from_json(const Json&);
HeadConfig head_config_from_json(const Json&);
ModelConfig model_config_from_json(const Json&);
TrainConfig train_config_from_json(const Json&);
EvalConfig eval_config_from_json(const Json&);
RunConfig run_config_from_json(const Json&);

RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key=value` overrides onto a config JSON tree. Keys are dotted
/// paths ("model.asa.num_parts") or unique suffixes ("num_parts"); unknown or
/// ambiguous keys are rejected.
void apply_overrides(Json& config, const std::vector<std::string>& overrides);

void write_json_file(const Json& j, const std::filesystem::path& path);
Json read_json_file(const std::filesystem::path& path);

}  // namespace asaloc

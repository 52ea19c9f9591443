#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace gec {

struct ModelConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 256;
  int max_positions = 68;
  double init_std = 0.02;
  // Tie decoder input embeddings to the encoder's (requires equal geometry).
  bool share_embeddings = false;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class LossKind { kCrossEntropy, kLabelSmoothed };
enum class LrSchedule { kConstant, kInverseSqrt };

struct OptimizerConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_epochs = 20;
  double dropout = 0.1;
  LossKind loss = LossKind::kCrossEntropy;
  double label_smoothing = 0.1;  // used by kLabelSmoothed only
  double clip_norm = 1.0;        // <= 0 disables clipping
  LrSchedule schedule = LrSchedule::kConstant;
  int warmup_steps = 4000;  // inverse-sqrt schedule only
  long max_steps = 0;       // 0 = no step limit

  void validate() const;
  double effective_label_smoothing() const {
    return loss == LossKind::kLabelSmoothed ? label_smoothing : 0.0;
  }
};

struct FusionConfig {
  double lambda = 0.5;  // weight of the self / cross attention branch
  double drop_net_rate = 0.0;
  bool freeze_extractor = true;

  void validate() const;
};

struct BeamConfig {
  int beam_size = 4;
  int max_len = 80;
  double length_penalty = 0.0;

  void validate() const;
};

enum class Variant { kBaseline, kBertEncoder, kBertFused };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(LossKind k);
LossKind parse_loss(const std::string& s);
std::string to_string(LrSchedule s);
LrSchedule parse_schedule(const std::string& s);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FusionConfig& c);
FusionConfig fusion_config_from_json(const nlohmann::json& j);

}  // namespace gec

#include "gec/configs.hpp"

#include <stdexcept>

namespace gec {

namespace {
void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace

void ModelConfig::validate() const {
  require(encoder_layers >= 1 && decoder_layers >= 1, "model: layer counts must be >= 1");
  require(model_dim >= 1 && ffn_dim >= 1, "model: dimensions must be >= 1");
  require(num_heads >= 1 && model_dim % num_heads == 0, "model: num_heads must divide model_dim");
  require(max_positions >= 3, "model: max_positions must be >= 3");
  require(init_std > 0.0, "model: init_std must be positive");
}

void OptimizerConfig::validate() const {
  require(learning_rate >= 0.0, "optimizer: learning_rate must be >= 0");
  require(beta1 > 0.0 && beta1 < 1.0, "optimizer: beta1 must lie in (0,1)");
  require(beta2 > 0.0 && beta2 < 1.0, "optimizer: beta2 must lie in (0,1)");
  require(epsilon > 0.0, "optimizer: epsilon must be positive");
  require(batch_size >= 1, "optimizer: batch_size must be >= 1");
  require(max_epochs >= 1, "optimizer: max_epochs must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "optimizer: dropout must lie in [0,1)");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "optimizer: label_smoothing must lie in [0,1)");
  require(warmup_steps >= 1, "optimizer: warmup_steps must be >= 1");
  require(max_steps >= 0, "optimizer: max_steps must be >= 0");
}

void FusionConfig::validate() const {
  require(lambda >= 0.0 && lambda <= 1.0, "fusion: lambda must lie in [0,1]");
  require(drop_net_rate >= 0.0 && drop_net_rate <= 1.0, "fusion: drop_net_rate must lie in [0,1]");
}

void BeamConfig::validate() const {
  require(beam_size >= 1, "beam: beam_size must be >= 1");
  require(max_len >= 1, "beam: max_len must be >= 1");
  require(length_penalty >= 0.0, "beam: length_penalty must be >= 0");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kBertEncoder: return "bert-encoder";
    case Variant::kBertFused: return "bert-fused";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "bert-encoder") return Variant::kBertEncoder;
  if (s == "bert-fused") return Variant::kBertFused;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(LossKind k) {
  return k == LossKind::kCrossEntropy ? "cross-entropy" : "label-smoothed-cross-entropy";
}

LossKind parse_loss(const std::string& s) {
  if (s == "cross-entropy") return LossKind::kCrossEntropy;
  if (s == "label-smoothed-cross-entropy") return LossKind::kLabelSmoothed;
  throw std::invalid_argument("unknown loss: " + s);
}

std::string to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "inverse-sqrt"; }

LrSchedule parse_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "inverse-sqrt") return LrSchedule::kInverseSqrt;
  throw std::invalid_argument("unknown schedule: " + s);
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
          {"model_dim", c.model_dim},           {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},               {"max_positions", c.max_positions},
          {"init_std", c.init_std},
          {"share_embeddings", c.share_embeddings}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_layers = j.at("encoder_layers");
  c.decoder_layers = j.at("decoder_layers");
  c.model_dim = j.at("model_dim");
  c.num_heads = j.at("num_heads");
  c.ffn_dim = j.at("ffn_dim");
  c.max_positions = j.at("max_positions");
  c.init_std = j.at("init_std");
  c.share_embeddings = j.value("share_embeddings", false);
  return c;
}

nlohmann::json to_json(const FusionConfig& c) {
  return {{"lambda", c.lambda}, {"drop_net_rate", c.drop_net_rate}, {"freeze_extractor", c.freeze_extractor}};
}

FusionConfig fusion_config_from_json(const nlohmann::json& j) {
  FusionConfig c;
  c.lambda = j.at("lambda");
  c.drop_net_rate = j.at("drop_net_rate");
  c.freeze_extractor = j.at("freeze_extractor");
  return c;
}

}  // namespace gec

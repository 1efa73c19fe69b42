#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "respnet/layers.hpp"

namespace respnet::models {

enum class ModelKind : uint8_t {
  Baseline = 0,
  Inception01 = 1,
  Inception02 = 2,
  Inception03 = 3,
  Inception04 = 4,
};

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::Baseline;
  int n_classes = 4;  // 4 for cycle classification, 3 for disease
  std::array<int, 4> block_channels = {64, 128, 256, 512};
  std::array<double, 4> block_dropout = {0.10, 0.15, 0.20, 0.25};
  double head_dropout = 0.30;
  int dense_width = 1024;
};

// One inception-layer branch step, parsed from the variant table.
struct BranchStep {
  enum class Op { Conv, Pool } op = Op::Conv;
  int kh = 1, kw = 1;
  bool half_width = false;  // reduction conv: half the branch's output channels
};

struct VariantSpec {
  std::vector<std::vector<BranchStep>> branches;
  bool residual = false;
};

// Branch tables for the four inception variants. The built-in table can be
// replaced by a file of the same format, so variants can be revised without
// touching code.
VariantSpec inception_variant(ModelKind kind);
void load_inception_variants(const std::filesystem::path& path);  // override table
void parse_inception_variants(const std::string& text);           // throws BadFormat

// Feed-forward stack assembled from the layer catalogue. Exclusively owned
// while training; clone per thread for concurrent inference.
class Model {
 public:
  nn::Tensor<float> forward(const nn::Tensor<float>& x, const nn::FwdCtx& ctx);
  // Forward that records the output shape after every top-level layer.
  nn::Tensor<float> forward_trace(const nn::Tensor<float>& x, const nn::FwdCtx& ctx,
                                  std::vector<std::vector<int>>* shapes);
  nn::Tensor<float> backward(const nn::Tensor<float>& dy);

  // Trainable parameters, name-sorted; names are unique.
  std::vector<nn::Parameter<float>*> parameters();
  // Parameters plus non-trainable state (running stats), name-sorted.
  std::vector<std::pair<std::string, nn::Tensor<float>*>> named_tensors();
  int64_t parameter_count();

  const ModelConfig& config() const { return cfg_; }
  Model clone() const;

 private:
  friend Model build_model(const ModelConfig&, uint64_t);
  ModelConfig cfg_;
  std::vector<std::unique_ptr<nn::Layer<float>>> layers_;
};

Model build_model(const ModelConfig& cfg, uint64_t seed);

// Checkpoint: magic "RSPN", version u16, model-kind u8, n_classes u8, then
// per tensor (name-sorted): name length u16, name bytes, rank u8, dims u32
// each, float32 little-endian data. Running batchnorm stats included.
void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace respnet::models

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sits/nn.hpp"
#include "sits/preprocess.hpp"

namespace sits {

enum class ModelVariant { kMlp, kTempCnn, kLtae };

std::string to_string(ModelVariant v);
std::optional<ModelVariant> variant_from_string(const std::string& s);

struct ModelConfig {
  ModelVariant variant = ModelVariant::kMlp;
  std::vector<int> mlp_widths = {1024, 512, 256};
  std::vector<int> cnn_filters = {128, 128, 128};
  std::vector<int> cnn_kernels = {3, 3, 2};
  int heads = 6;
  int key_dim = 8;
  int embed_size = 370;       // rounded up to a multiple of heads at build time
  int attn_mlp_width = 512;
  bool positional_encoding = true;  // diagnostic switch
  int n_classes = 0;
  int n_bands = 0;
  int n_steps = 0;

  void validate() const;
};

struct Prediction {
  std::vector<int> labels;
  std::vector<double> probabilities;  // n_rows x n_classes
};

class ModelInstance {
 public:
  static ModelInstance build(const ModelConfig& cfg, std::uint64_t seed);

  /// Runs the network on an already-shaped batch tensor (rank 2 for the MLP,
  /// rank 3 batch x bands x steps otherwise) and returns batch x classes logits.
  nn::Tensor forward(const nn::Tensor& batch, nn::Mode mode);
  nn::Tensor backward(const nn::Tensor& dlogits);

  /// Assembles rows of a feature matrix into the tensor shape this variant
  /// consumes; rejects a matrix whose layout tag does not match.
  nn::Tensor make_batch(const FeatureMatrix& m, std::span<const std::size_t> rows) const;

  /// Eval-mode prediction over all rows; ties go to the lower class index.
  Prediction predict(const FeatureMatrix& m, std::size_t batch_size = 1024);

  const ModelConfig& config() const { return cfg_; }
  int effective_embed_size() const { return effective_embed_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  std::size_t param_count() const { return params_.learnable_count(); }

  ModelInstance(ModelInstance&&) = default;
  ModelInstance& operator=(ModelInstance&&) = default;

 private:
  ModelInstance() = default;
  ModelConfig cfg_;
  int effective_embed_ = 0;
  std::vector<std::unique_ptr<nn::Layer>> layers_;
  nn::ParamSet params_;
};

/// Checkpoint: text manifest of (name, shape) followed by the raw
/// little-endian 64-bit parameter blob, plus the config and the
/// preprocessing state needed to classify new data.
void save_checkpoint(const std::string& path, const ModelInstance& model, const TimeGrid& grid,
                     const BandStats& stats, const std::vector<std::string>& class_names);

struct LoadedModel {
  ModelInstance model;
  TimeGrid grid;
  BandStats stats;
  std::vector<std::string> class_names;
};

LoadedModel load_checkpoint(const std::string& path);

/// True when the file starts with the model-checkpoint magic line.
bool is_model_checkpoint(const std::string& path);

}  // namespace sits

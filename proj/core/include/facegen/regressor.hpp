#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facegen/generator.hpp"
#include "facegen/text_pipeline.hpp"
#include "facegen/types.hpp"

namespace facegen {

// ---------------------------------------------------------------------------
// Architecture

struct ConvBlockConfig {
  std::size_t out_channels = 0;
  std::size_t kernel_size = 0;  // odd; same padding, followed by max pool of width 2

  friend bool operator==(const ConvBlockConfig&, const ConvBlockConfig&) = default;
};

/// embedding (1 channel x D) -> [conv -> relu -> maxpool2]* -> flatten
/// -> [fc -> relu]* -> linear 512.
struct ArchitectureConfig {
  std::size_t input_dim = HashEmbedder::kDimension;
  std::vector<ConvBlockConfig> conv = {{64, 5}, {128, 5}};
  std::vector<std::size_t> fc = {1024};
  std::size_t output_dim = kLatentDim;

  /// Throws Configuration on: output_dim != 512, input_dim < 8, even or zero
  /// kernels, zero widths, or pooling that shrinks the sequence to nothing.
  void validate() const;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool bias = false;
};

/// Declared tensor order: conv{i}.weight [out,in,k], conv{i}.bias [out],
/// fc{j}.weight [out,in], fc{j}.bias [out], out.weight [512,in], out.bias [512].
std::vector<TensorSpec> tensor_layout(const ArchitectureConfig& config);
std::size_t parameter_count(const ArchitectureConfig& config);

// ---------------------------------------------------------------------------
// Model

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  std::optional<double> test_mse;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingMetadata {
  std::uint64_t generator_seed = kDefaultProjectionSeed;
  std::uint64_t shuffle_seed = 0;
  int epochs = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  std::size_t train_records = 0;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct RegressorModel {
  ArchitectureConfig config;
  std::vector<TensorSpec> layout;
  std::vector<float> weights;  // flat, in layout order
  std::uint64_t init_seed = 0;
  EmbedderInfo embedder;
  TrainingMetadata training;
  std::vector<EpochRecord> history;

  std::span<const float> tensor(const std::string& name) const;
  /// FNV-1a over the weight bytes.
  std::uint64_t weights_checksum() const;
};

/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))) drawn tensor by
/// tensor in declared order from SplitMix64(seed); biases zero.
RegressorModel init_model(const ArchitectureConfig& config, std::uint64_t seed,
                          EmbedderInfo embedder = HashEmbedder{}.info());

// ---------------------------------------------------------------------------
// Computation. Network<T> evaluates the architecture over flat parameter
// buffers; float drives training and inference, double backs the
// finite-difference gradient check. Inputs are sample-major (B x D), targets
// and outputs sample-major (B x 512). Not thread-safe: it owns scratch buffers.

template <typename T>
class Network {
 public:
  explicit Network(const ArchitectureConfig& config);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  const ArchitectureConfig& config() const;

  void forward(std::span<const T> params, std::span<const T> inputs, std::size_t batch, std::span<T> outputs);

  /// Mean squared error over batch x 512 elements, accumulated in double.
  double loss(std::span<const T> params, std::span<const T> inputs, std::span<const T> targets, std::size_t batch);

  /// Loss plus exact analytic gradient of that loss w.r.t. every parameter.
  /// Rectifier subgradient at 0 is 0; max pool routes to the first maximum.
  double gradient(std::span<const T> params, std::span<const T> inputs, std::span<const T> targets,
                  std::size_t batch, std::span<T> grad);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

extern template class Network<float>;
extern template class Network<double>;

LatentVector forward(const RegressorModel& model, const EmbeddingVector& embedding);
std::vector<LatentVector> forward_batch(const RegressorModel& model, std::span<const EmbeddingVector> embeddings);

struct LossValue {
  double mse = 0.0;
};

/// Mean over N x 512 elements of squared error. EmptyBatch on N = 0.
LossValue loss_mse(std::span<const LatentVector> predictions, std::span<const LatentVector> targets);

/// Analytic gradient of loss_mse(forward(batch), targets) in layout order.
std::vector<float> backward(const RegressorModel& model, std::span<const EmbeddingVector> embeddings,
                            std::span<const LatentVector> targets);

// ---------------------------------------------------------------------------
// Optimizer

struct TrainConfig {
  int epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
  int eval_every = 10;  // 0 disables test evaluation

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

/// One bias-corrected Adam update. A non-finite gradient raises
/// TrainingDiverged naming the offending tensor; weights are untouched then.
template <typename T>
void adam_step(std::span<T> weights, std::span<const T> gradients, AdamState<T>& state, const TrainConfig& config,
               std::span<const TensorSpec> layout = {});

extern template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, const TrainConfig&,
                                      std::span<const TensorSpec>);
extern template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                       const TrainConfig&, std::span<const TensorSpec>);

}  // namespace facegen

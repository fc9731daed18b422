#include "facegen/regressor.hpp"

#include <bit>
#include <cmath>

#include "facegen/errors.hpp"
#include "facegen/rng.hpp"

namespace facegen {

void ArchitectureConfig::validate() const {
  if (output_dim != kLatentDim) fail(ErrorKind::Configuration, "output_dim must be 512");
  if (input_dim < 8) fail(ErrorKind::Configuration, "input_dim must be at least 8");
  std::size_t length = input_dim;
  for (const auto& b : conv) {
    if (b.out_channels == 0) fail(ErrorKind::Configuration, "conv block with zero channels");
    if (b.kernel_size == 0 || b.kernel_size % 2 == 0) fail(ErrorKind::Configuration, "conv kernel sizes must be odd");
    length /= 2;
    if (length == 0) fail(ErrorKind::Configuration, "too many pooling stages for input_dim " + std::to_string(input_dim));
  }
  for (auto w : fc) {
    if (w == 0) fail(ErrorKind::Configuration, "fully connected layer with zero width");
  }
}

std::vector<TensorSpec> tensor_layout(const ArchitectureConfig& config) {
  config.validate();
  std::vector<TensorSpec> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out, bool bias) {
    std::size_t size = 1;
    for (auto d : shape) size *= d;
    out.push_back(TensorSpec{std::move(name), std::move(shape), offset, size, fan_in, fan_out, bias});
    offset += size;
  };

  std::size_t channels = 1;
  std::size_t length = config.input_dim;
  for (std::size_t i = 0; i < config.conv.size(); ++i) {
    const auto& b = config.conv[i];
    const std::string p = "conv" + std::to_string(i);
    add(p + ".weight", {b.out_channels, channels, b.kernel_size}, channels * b.kernel_size, b.out_channels * b.kernel_size, false);
    add(p + ".bias", {b.out_channels}, 0, 0, true);
    channels = b.out_channels;
    length /= 2;
  }
  std::size_t width = channels * length;
  for (std::size_t j = 0; j < config.fc.size(); ++j) {
    const std::string p = "fc" + std::to_string(j);
    add(p + ".weight", {config.fc[j], width}, width, config.fc[j], false);
    add(p + ".bias", {config.fc[j]}, 0, 0, true);
    width = config.fc[j];
  }
  add("out.weight", {config.output_dim, width}, width, config.output_dim, false);
  add("out.bias", {config.output_dim}, 0, 0, true);
  return out;
}

std::size_t parameter_count(const ArchitectureConfig& config) {
  const auto layout = tensor_layout(config);
  return layout.back().offset + layout.back().size;
}

std::span<const float> RegressorModel::tensor(const std::string& name) const {
  for (const auto& t : layout) {
    if (t.name == name) return std::span<const float>(weights).subspan(t.offset, t.size);
  }
  fail(ErrorKind::Shape, "no tensor named " + name);
}

std::uint64_t RegressorModel::weights_checksum() const {
  return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(weights.data()),
                                                weights.size() * sizeof(float)));
}

RegressorModel init_model(const ArchitectureConfig& config, std::uint64_t seed, EmbedderInfo embedder) {
  if (embedder.dimension != config.input_dim) {
    fail(ErrorKind::Configuration, "embedder dimension " + std::to_string(embedder.dimension) +
                                       " does not match input_dim " + std::to_string(config.input_dim));
  }
  RegressorModel m;
  m.config = config;
  m.layout = tensor_layout(config);
  m.weights.assign(parameter_count(config), 0.0f);
  m.init_seed = seed;
  m.embedder = std::move(embedder);

  SplitMix64 rng(seed);
  for (const auto& t : m.layout) {
    if (t.bias) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(t.fan_in + t.fan_out));
    for (std::size_t i = 0; i < t.size; ++i) {
      m.weights[t.offset + i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    }
  }
  return m;
}

namespace {

std::vector<float> pack_inputs(const RegressorModel& model, std::span<const EmbeddingVector> embeddings) {
  const std::size_t d = model.config.input_dim;
  std::vector<float> inputs;
  inputs.reserve(embeddings.size() * d);
  for (const auto& e : embeddings) {
    if (e.dimension() != d) {
      fail(ErrorKind::Shape, "embedding has dimension " + std::to_string(e.dimension()) + ", model expects " + std::to_string(d));
    }
    inputs.insert(inputs.end(), e.values.begin(), e.values.end());
  }
  return inputs;
}

}  // namespace

std::vector<LatentVector> forward_batch(const RegressorModel& model, std::span<const EmbeddingVector> embeddings) {
  std::vector<LatentVector> out(embeddings.size());
  if (embeddings.empty()) return out;
  const auto inputs = pack_inputs(model, embeddings);
  std::vector<float> outputs(embeddings.size() * kLatentDim);
  Network<float> net(model.config);
  net.forward(model.weights, inputs, embeddings.size(), outputs);
  for (std::size_t b = 0; b < embeddings.size(); ++b) {
    for (std::size_t i = 0; i < kLatentDim; ++i) out[b][i] = outputs[b * kLatentDim + i];
    if (!out[b].is_finite()) fail(ErrorKind::InvalidLatent, "model produced a non-finite latent");
  }
  return out;
}

LatentVector forward(const RegressorModel& model, const EmbeddingVector& embedding) {
  return forward_batch(model, std::span<const EmbeddingVector>(&embedding, 1)).front();
}

LossValue loss_mse(std::span<const LatentVector> predictions, std::span<const LatentVector> targets) {
  if (predictions.empty()) fail(ErrorKind::EmptyBatch, "loss over an empty batch");
  if (predictions.size() != targets.size()) fail(ErrorKind::Shape, "prediction and target counts differ");
  double acc = 0.0;
  for (std::size_t n = 0; n < predictions.size(); ++n) acc += squared_distance(predictions[n], targets[n]);
  return LossValue{acc / static_cast<double>(predictions.size() * kLatentDim)};
}

std::vector<float> backward(const RegressorModel& model, std::span<const EmbeddingVector> embeddings,
                            std::span<const LatentVector> targets) {
  if (embeddings.empty()) fail(ErrorKind::EmptyBatch, "gradient of an empty batch");
  if (embeddings.size() != targets.size()) fail(ErrorKind::Shape, "embedding and target counts differ");
  const auto inputs = pack_inputs(model, embeddings);
  std::vector<float> flat_targets;
  flat_targets.reserve(targets.size() * kLatentDim);
  for (const auto& t : targets) flat_targets.insert(flat_targets.end(), t.values().begin(), t.values().end());
  std::vector<float> grad(model.weights.size());
  Network<float> net(model.config);
  net.gradient(model.weights, inputs, flat_targets, embeddings.size(), grad);
  return grad;
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Configuration, "epochs must be at least 1");
  if (batch_size < 1) fail(ErrorKind::Configuration, "batch_size must be at least 1");
  if (!(learning_rate > 0.0)) fail(ErrorKind::Configuration, "learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail(ErrorKind::Configuration, "adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail(ErrorKind::Configuration, "adam epsilon must be positive");
  if (eval_every < 0) fail(ErrorKind::Configuration, "eval_every must be non-negative");
}

template <typename T>
void adam_step(std::span<T> weights, std::span<const T> gradients, AdamState<T>& state, const TrainConfig& config,
               std::span<const TensorSpec> layout) {
  if (weights.size() != gradients.size() || state.m.size() != weights.size() || state.v.size() != weights.size()) {
    fail(ErrorKind::Shape, "adam: weight, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    if (!std::isfinite(gradients[i])) {
      std::string where = "parameter " + std::to_string(i);
      for (const auto& t : layout) {
        if (i >= t.offset && i < t.offset + t.size) where = "tensor " + t.name;
      }
      fail(ErrorKind::TrainingDiverged, "non-finite gradient in " + where);
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(config.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(config.beta2, t)));
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);
  T* w = weights.data();
  T* m = state.m.data();
  T* v = state.v.data();
  const T* g = gradients.data();
  const std::size_t n = weights.size();
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T m_hat = m[i] * c1;
    const T v_hat = v[i] * c2;
    w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, const TrainConfig&,
                               std::span<const TensorSpec>);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, const TrainConfig&,
                                std::span<const TensorSpec>);

}  // namespace facegen

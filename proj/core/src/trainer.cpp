#include "facegen/trainer.hpp"

#include <cmath>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define FACEGEN_HAVE_MXCSR 1
#endif

#include "facegen/descriptor.hpp"
#include "facegen/errors.hpp"
#include "facegen/rng.hpp"

namespace facegen {

namespace {

constexpr std::size_t kEvalBatch = 256;

// Subnormal floats appear once Adam moments and small activations decay, and
// on x86 each one costs a microcode assist. Flushing them keeps epoch time
// flat; the result is still a pure function of the inputs.
class FlushDenormals {
 public:
  FlushDenormals() {
#ifdef FACEGEN_HAVE_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#ifdef FACEGEN_HAVE_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

const DatasetRecord& record_at(std::span<const DatasetRecord> records, std::uint64_t id) {
  if (id >= records.size() || records[id].id != id) {
    fail(ErrorKind::CorruptDataset, "record id " + std::to_string(id) + " is not present in id order");
  }
  return records[id];
}

// Packs rows of the given ids into sample-major input and target buffers.
void gather(std::span<const std::uint64_t> ids, const std::vector<EmbeddingVector>& embeddings,
            std::span<const DatasetRecord> records, std::size_t dim, std::vector<float>& inputs,
            std::vector<float>& targets) {
  inputs.resize(ids.size() * dim);
  targets.resize(ids.size() * kLatentDim);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const auto& e = embeddings[ids[b]].values;
    std::copy(e.begin(), e.end(), inputs.begin() + static_cast<std::ptrdiff_t>(b * dim));
    const auto z = record_at(records, ids[b]).latent.values();
    std::copy(z.begin(), z.end(), targets.begin() + static_cast<std::ptrdiff_t>(b * kLatentDim));
  }
}

double dataset_mse(Network<float>& net, const std::vector<float>& weights, std::span<const std::uint64_t> ids,
                   const std::vector<EmbeddingVector>& embeddings, std::span<const DatasetRecord> records,
                   std::size_t dim) {
  std::vector<float> inputs, targets;
  double weighted = 0.0;
  for (std::size_t start = 0; start < ids.size(); start += kEvalBatch) {
    const auto chunk = ids.subspan(start, std::min(kEvalBatch, ids.size() - start));
    gather(chunk, embeddings, records, dim, inputs, targets);
    weighted += net.loss(weights, inputs, targets, chunk.size()) * static_cast<double>(chunk.size());
  }
  return weighted / static_cast<double>(ids.size());
}

}  // namespace

RegressorModel train(RegressorModel model, std::span<const DatasetRecord> records, const TrainTestSplit& split,
                     const Embedder& embedder, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.config.validate();
  if (split.train_ids.empty()) fail(ErrorKind::EmptySplit, "training split is empty");
  if (model.weights.size() != parameter_count(model.config)) fail(ErrorKind::Shape, "model weights do not match its config");
  const std::size_t dim = model.config.input_dim;
  if (embedder.info().dimension != dim) {
    fail(ErrorKind::Configuration, "embedder dimension does not match the model input_dim");
  }

  std::vector<EmbeddingVector> embeddings(records.size());
  auto embed_ids = [&](std::span<const std::uint64_t> ids) {
    for (auto id : ids) {
      if (embeddings[record_at(records, id).id].values.empty()) {
        embeddings[id] = embed_text(records[id].description, embedder);
      }
    }
  };
  embed_ids(split.train_ids);
  if (config.eval_every > 0) embed_ids(split.test_ids);

  const FlushDenormals flush;
  Network<float> net(model.config);
  AdamState<float> adam(model.weights.size());
  std::vector<float> grad(model.weights.size());
  std::vector<float> inputs, targets;
  std::vector<std::uint64_t> order(split.train_ids);
  model.history.clear();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::sort(order.begin(), order.end());
    SplitMix64 rng(mix_seed(config.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::uint64_t>(order), rng);

    double weighted = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const auto ids = std::span<const std::uint64_t>(order).subspan(start, std::min(config.batch_size, order.size() - start));
      gather(ids, embeddings, records, dim, inputs, targets);
      try {
        const double loss = net.gradient(model.weights, inputs, targets, ids.size(), grad);
        if (!std::isfinite(loss)) fail(ErrorKind::TrainingDiverged, "non-finite loss");
        adam_step<float>(model.weights, grad, adam, config, model.layout);
        weighted += loss * static_cast<double>(ids.size());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::TrainingDiverged) throw;
        fail(ErrorKind::TrainingDiverged,
             "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = weighted / static_cast<double>(order.size());
    if (config.eval_every > 0 && epoch % config.eval_every == 0 && !split.test_ids.empty()) {
      rec.test_mse = dataset_mse(net, model.weights, split.test_ids, embeddings, records, dim);
    }
    model.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  model.training.shuffle_seed = config.shuffle_seed;
  model.training.epochs = config.epochs;
  model.training.batch_size = config.batch_size;
  model.training.learning_rate = config.learning_rate;
  model.training.train_records = split.train_ids.size();
  return model;
}

EvaluationReport evaluate_predictions(std::span<const DatasetRecord> records, std::span<const std::uint64_t> ids,
                                      std::span<const LatentVector> predictions, const ProjectionMatrix& projection) {
  if (ids.empty()) fail(ErrorKind::EmptySplit, "nothing to evaluate");
  if (ids.size() != predictions.size()) fail(ErrorKind::Shape, "id and prediction counts differ");

  std::vector<LatentVector> truth;
  truth.reserve(ids.size());
  std::array<std::size_t, kAttributeCount> hits{}, support{};
  double match_sum = 0.0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& rec = record_at(records, ids[i]);
    truth.push_back(rec.latent);
    const auto constraints = parse_description(rec.description);
    const auto attrs = latent_to_attributes(predictions[i], projection);
    for (int c = 0; c < static_cast<int>(kAttributeCount); ++c) {
      const auto want = constraints.get(c);
      if (!want) continue;
      ++support[static_cast<std::size_t>(c)];
      if (*want == attrs.levels[static_cast<std::size_t>(c)]) ++hits[static_cast<std::size_t>(c)];
    }
    if (!constraints.empty()) {
      match_sum += match_score(constraints, attrs);
      ++matched;
    }
  }

  EvaluationReport report;
  report.records = ids.size();
  report.mse = loss_mse(predictions, truth);
  double macro = 0.0;
  for (std::size_t c = 0; c < kAttributeCount; ++c) {
    if (support[c] == 0) continue;
    const std::string name(channel_name(static_cast<int>(c)));
    const double acc = static_cast<double>(hits[c]) / static_cast<double>(support[c]);
    report.per_channel[name] = acc;
    report.per_channel_support[name] = support[c];
    macro += acc;
  }
  if (report.per_channel.empty()) fail(ErrorKind::UndefinedScore, "no evaluated record mentions any attribute");
  report.macro_accuracy = macro / static_cast<double>(report.per_channel.size());
  report.mean_match = matched > 0 ? match_sum / static_cast<double>(matched) : 0.0;
  return report;
}

EvaluationReport evaluate(const RegressorModel& model, std::span<const DatasetRecord> records,
                          std::span<const std::uint64_t> ids, const Embedder& embedder,
                          const ProjectionMatrix& projection) {
  if (ids.empty()) fail(ErrorKind::EmptySplit, "nothing to evaluate");
  std::vector<EmbeddingVector> embeddings;
  embeddings.reserve(ids.size());
  for (auto id : ids) embeddings.push_back(embed_text(record_at(records, id).description, embedder));
  std::vector<LatentVector> predictions;
  predictions.reserve(ids.size());
  for (std::size_t start = 0; start < embeddings.size(); start += kEvalBatch) {
    const auto chunk = std::span<const EmbeddingVector>(embeddings).subspan(start, std::min(kEvalBatch, embeddings.size() - start));
    auto out = forward_batch(model, chunk);
    predictions.insert(predictions.end(), out.begin(), out.end());
  }
  return evaluate_predictions(records, ids, predictions, projection);
}

}  // namespace facegen

#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "facegen/regressor.hpp"

namespace facegen {

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Embeddings are computed once up front. Each epoch shuffles the train ids
/// with mix_seed(shuffle_seed, epoch), walks them in batches of batch_size
/// (the last partial batch is kept) and applies one Adam step per batch.
/// history gets the sample-weighted mean train MSE for every epoch and the
/// test MSE on epochs divisible by eval_every. Deterministic given all seeds.
RegressorModel train(RegressorModel model, std::span<const DatasetRecord> records, const TrainTestSplit& split,
                     const Embedder& embedder, const TrainConfig& config, const EpochCallback& on_epoch = {});

struct EvaluationReport {
  LossValue mse;
  double macro_accuracy = 0.0;
  double mean_match = 0.0;  // mean per-record match_score
  std::map<std::string, double> per_channel;  // channels mentioned by >= 1 record
  std::map<std::string, std::size_t> per_channel_support;
  std::size_t records = 0;
};

/// Scores predictions for the given record ids: MSE against the true latents
/// and attribute accuracy of decode(prediction) against parse(text).
EvaluationReport evaluate_predictions(std::span<const DatasetRecord> records, std::span<const std::uint64_t> ids,
                                      std::span<const LatentVector> predictions, const ProjectionMatrix& projection);

/// forward() every listed record, then evaluate_predictions. EmptySplit on no ids.
EvaluationReport evaluate(const RegressorModel& model, std::span<const DatasetRecord> records,
                          std::span<const std::uint64_t> ids, const Embedder& embedder,
                          const ProjectionMatrix& projection);

}  // namespace facegen

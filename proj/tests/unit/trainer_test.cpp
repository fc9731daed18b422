#include <algorithm>
#include <cmath>
#include <numeric>

#include "facegen/dataset.hpp"
#include "facegen/trainer.hpp"
#include "test_support.hpp"

using namespace facegen;
using facegen::testing::TempDir;

namespace {

ArchitectureConfig small_config() {
  ArchitectureConfig c;
  c.conv = {{4, 3}};
  c.fc = {16};
  return c;
}

struct Fixture {
  TempDir dir{"trainer"};
  Dataset data;
  TrainTestSplit parts;
  HashEmbedder embedder;

  explicit Fixture(std::uint64_t n = 40) {
    BuildConfig cfg;
    cfg.n = n;
    cfg.output_dir = dir.path();
    build(cfg, ToyGenerator{});
    data = load(dir.path());
    parts = split(data.manifest, 0.75, 1);
  }
};

TrainConfig quick(int epochs, std::size_t batch) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch;
  t.eval_every = 2;
  t.shuffle_seed = 5;
  return t;
}

// Epoch loop written directly against the primitives.
std::vector<float> reference_training(RegressorModel model, const Fixture& f, const TrainConfig& cfg) {
  Network<float> net(model.config);
  AdamState<float> adam(model.weights.size());
  std::vector<float> grad(model.weights.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = f.parts.train_ids;
    std::sort(order.begin(), order.end());
    SplitMix64 rng(mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::uint64_t>(order), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<float> inputs, targets;
      for (std::size_t i = start; i < end; ++i) {
        const auto& r = f.data.records[order[i]];
        const auto e = embed_text(r.description, f.embedder);
        inputs.insert(inputs.end(), e.values.begin(), e.values.end());
        targets.insert(targets.end(), r.latent.values().begin(), r.latent.values().end());
      }
      net.gradient(model.weights, inputs, targets, end - start, grad);
      adam_step<float>(model.weights, grad, adam, cfg, model.layout);
    }
  }
  return model.weights;
}

}  // namespace

TEST_CASE("training is deterministic and matches the reference epoch loop") {
  const Fixture f;
  const auto init = init_model(small_config(), 3);
  // 30 train records in batches of 8: the last batch of 6 is kept.
  const auto cfg = quick(3, 8);
  const auto a = train(init, f.data.records, f.parts, f.embedder, cfg);
  const auto b = train(init, f.data.records, f.parts, f.embedder, cfg);
  CHECK(a.weights == b.weights);
  CHECK(a.history == b.history);
  CHECK(a.weights == reference_training(init, f, cfg));
  CHECK(a.weights != init.weights);

  REQUIRE(a.history.size() == 3);
  CHECK_FALSE(a.history[0].test_mse.has_value());
  CHECK(a.history[1].test_mse.has_value());
  CHECK_FALSE(a.history[2].test_mse.has_value());
  for (int e = 0; e < 3; ++e) CHECK(a.history[static_cast<std::size_t>(e)].epoch == e + 1);
  CHECK(a.training.epochs == 3);
  CHECK(a.training.batch_size == 8);
  CHECK(a.training.shuffle_seed == 5);
  CHECK(a.training.train_records == 30);

  auto other = cfg;
  other.shuffle_seed = 6;
  CHECK(train(init, f.data.records, f.parts, f.embedder, other).weights != a.weights);
}

TEST_CASE("epoch train MSE is the sample-weighted mean of batch losses") {
  const Fixture f;
  const auto init = init_model(small_config(), 4);
  // One batch covering the whole train side: the recorded loss is the loss
  // of the untouched initial weights.
  std::vector<EmbeddingVector> xs;
  std::vector<LatentVector> ys;
  for (auto id : f.parts.train_ids) {
    xs.push_back(embed_text(f.data.records[id].description, f.embedder));
    ys.push_back(f.data.records[id].latent);
  }
  const double before = loss_mse(forward_batch(init, xs), ys).mse;
  auto cfg = quick(2, 64);
  const auto m = train(init, f.data.records, f.parts, f.embedder, cfg);
  CHECK(m.history[0].train_mse == doctest::Approx(before).epsilon(1e-6));

  // Test MSE is the full-pass loss of the trained weights on the test side.
  std::vector<EmbeddingVector> tx;
  std::vector<LatentVector> ty;
  for (auto id : f.parts.test_ids) {
    tx.push_back(embed_text(f.data.records[id].description, f.embedder));
    ty.push_back(f.data.records[id].latent);
  }
  REQUIRE(m.history[1].test_mse.has_value());
  CHECK(*m.history[1].test_mse == doctest::Approx(loss_mse(forward_batch(m, tx), ty).mse).epsilon(1e-6));
}

TEST_CASE("loss decreases on a small memorization task") {
  const Fixture f;
  auto cfg = quick(30, 8);
  cfg.learning_rate = 3e-3;
  const auto m = train(init_model(small_config(), 1), f.data.records, f.parts, f.embedder, cfg);
  CHECK(m.history.back().train_mse < 0.9 * m.history.front().train_mse);
  for (const auto& h : m.history) CHECK(h.train_mse >= 0.0);
}

TEST_CASE("train rejects bad inputs") {
  const Fixture f;
  const auto init = init_model(small_config(), 1);
  auto zero = quick(1, 8);
  zero.epochs = 0;
  CHECK_FAILS_WITH(train(init, f.data.records, f.parts, f.embedder, zero), ErrorKind::Configuration);

  TrainTestSplit empty = f.parts;
  empty.train_ids.clear();
  CHECK_FAILS_WITH(train(init, f.data.records, empty, f.embedder, quick(1, 8)), ErrorKind::EmptySplit);

  ArchitectureConfig wide = small_config();
  wide.input_dim = 32;
  const auto mismatched = init_model(wide, 1, EmbedderInfo{"x", 32, true});
  CHECK_FAILS_WITH(train(mismatched, f.data.records, f.parts, f.embedder, quick(1, 8)), ErrorKind::Configuration);

  auto bad_ids = f.parts;
  bad_ids.train_ids.push_back(999);
  CHECK_FAILS_WITH(train(init, f.data.records, bad_ids, f.embedder, quick(1, 8)), ErrorKind::CorruptDataset);
}

TEST_CASE("training touches nothing but the regressor weights") {
  const Fixture f;
  const ToyGenerator gen;
  const auto proj_before = gen.projection().checksum();
  const auto probe = embed_text("an old man with short grey hair", f.embedder);
  const auto image_before = gen.generate(f.data.records[0].latent).pixels;
  const auto records_before = f.data.records;

  train(init_model(small_config(), 2), f.data.records, f.parts, f.embedder, quick(2, 8));

  CHECK(gen.projection().checksum() == proj_before);
  CHECK(make_projection().checksum() == proj_before);
  CHECK(embed_text("an old man with short grey hair", f.embedder) == probe);
  CHECK(gen.generate(f.data.records[0].latent).pixels == image_before);
  for (std::size_t i = 0; i < records_before.size(); ++i) {
    CHECK(f.data.records[i].latent == records_before[i].latent);
    CHECK(f.data.records[i].description == records_before[i].description);
  }
}

TEST_CASE("oracle predictions score a perfect 1.0") {
  const Fixture f(200);
  const auto proj = make_projection();
  std::vector<std::uint64_t> ids(200);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  std::vector<LatentVector> truth;
  for (const auto& r : f.data.records) truth.push_back(r.latent);
  const auto r = evaluate_predictions(f.data.records, ids, truth, proj);
  CHECK(r.macro_accuracy == 1.0);
  CHECK(r.mean_match == 1.0);
  CHECK(r.mse.mse == 0.0);
  CHECK(r.records == 200);
  CHECK(r.per_channel.size() == kAttributeCount);
  // Mandatory channels are described on every record.
  CHECK(r.per_channel_support.at("gender") == 200);
}

TEST_CASE("random predictions score near chance") {
  const Fixture f(3000);
  const auto proj = make_projection();
  std::vector<std::uint64_t> ids(3000);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  SplitMix64 rng(99);
  std::vector<LatentVector> guesses;
  for (std::size_t i = 0; i < ids.size(); ++i) guesses.push_back(facegen::testing::random_latent(rng));
  const auto r = evaluate_predictions(f.data.records, ids, guesses, proj);
  CHECK(std::abs(r.macro_accuracy - chance_baseline_exact()) < 0.03);
  CHECK(r.mse.mse == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("evaluate scores forward predictions") {
  const Fixture f;
  const auto m = init_model(small_config(), 8);
  const auto proj = make_projection();
  std::vector<EmbeddingVector> xs;
  for (auto id : f.parts.test_ids) xs.push_back(embed_text(f.data.records[id].description, f.embedder));
  const auto direct = evaluate_predictions(f.data.records, f.parts.test_ids, forward_batch(m, xs), proj);
  const auto via = evaluate(m, f.data.records, f.parts.test_ids, f.embedder, proj);
  CHECK(via.macro_accuracy == direct.macro_accuracy);
  CHECK(via.mse.mse == doctest::Approx(direct.mse.mse).epsilon(1e-9));
  CHECK_FAILS_WITH(evaluate(m, f.data.records, {}, f.embedder, proj), ErrorKind::EmptySplit);
}

TEST_CASE("scores are undefined when no record mentions an attribute") {
  std::vector<DatasetRecord> records(2);
  for (std::uint64_t i = 0; i < 2; ++i) {
    records[i].id = i;
    records[i].description = "qwerty zxcvb";
  }
  const std::vector<std::uint64_t> ids{0, 1};
  const std::vector<LatentVector> preds(2);
  CHECK_FAILS_WITH(evaluate_predictions(records, ids, preds, make_projection()), ErrorKind::UndefinedScore);
  CHECK_FAILS_WITH(evaluate_predictions(records, ids, std::span<const LatentVector>(preds).first(1), make_projection()),
                   ErrorKind::Shape);
}

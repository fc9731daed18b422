#include <cmath>
#include <numeric>

#include "facegen/regressor.hpp"
#include "gradient_oracle.hpp"
#include "test_support.hpp"

using namespace facegen;
using facegen::testing::finite_difference_check;
using facegen::testing::micro_config;

namespace {

EmbedderInfo info_for(std::size_t dim) { return EmbedderInfo{"test", dim, true}; }

EmbeddingVector random_embedding(SplitMix64& rng, std::size_t dim) {
  EmbeddingVector e;
  for (std::size_t i = 0; i < dim; ++i) e.values.push_back(static_cast<float>(rng.normal()));
  return e;
}

const TensorSpec& find(const std::vector<TensorSpec>& layout, const std::string& name) {
  for (const auto& t : layout)
    if (t.name == name) return t;
  FAIL("missing tensor " << name);
  return layout.front();
}

}  // namespace

TEST_CASE("default layout for a 64-dimensional embedding") {
  const ArchitectureConfig cfg;
  const auto layout = tensor_layout(cfg);
  REQUIRE(layout.size() == 8);
  CHECK(find(layout, "conv0.weight").shape == std::vector<std::size_t>{64, 1, 5});
  CHECK(find(layout, "conv1.weight").shape == std::vector<std::size_t>{128, 64, 5});
  // Two pools take 64 positions to 16.
  CHECK(find(layout, "fc0.weight").shape == std::vector<std::size_t>{1024, 128 * 16});
  CHECK(find(layout, "out.weight").shape == std::vector<std::size_t>{512, 1024});
  CHECK(find(layout, "out.bias").shape == std::vector<std::size_t>{512});
  const std::size_t expected = (64 * 5 + 64) + (128 * 64 * 5 + 128) + (1024 * 2048 + 1024) + (512 * 1024 + 512);
  CHECK(parameter_count(cfg) == expected);
  std::size_t offset = 0;
  for (const auto& t : layout) {
    CHECK(t.offset == offset);
    offset += t.size;
  }
}

TEST_CASE("architecture validation") {
  const auto bad = [](auto mutate) {
    ArchitectureConfig c;
    mutate(c);
    CHECK_FAILS_WITH(c.validate(), ErrorKind::Configuration);
  };
  bad([](ArchitectureConfig& c) { c.output_dim = 511; });
  bad([](ArchitectureConfig& c) { c.input_dim = 7; });
  bad([](ArchitectureConfig& c) { c.conv[0].kernel_size = 4; });
  bad([](ArchitectureConfig& c) { c.conv[0].kernel_size = 0; });
  bad([](ArchitectureConfig& c) { c.conv[1].out_channels = 0; });
  bad([](ArchitectureConfig& c) { c.fc = {0}; });
  bad([](ArchitectureConfig& c) { c.input_dim = 8, c.conv = {{2, 3}, {2, 3}, {2, 3}, {2, 3}}; });
  ArchitectureConfig ok;
  ok.conv.clear();
  ok.fc.clear();
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("initialization is seeded Glorot-uniform with zero biases") {
  const ArchitectureConfig cfg;
  const auto a = init_model(cfg, 5);
  const auto b = init_model(cfg, 5);
  const auto c = init_model(cfg, 6);
  CHECK(a.weights == b.weights);
  CHECK(a.weights_checksum() == b.weights_checksum());
  CHECK(a.weights != c.weights);
  for (const auto& t : a.layout) {
    const auto w = a.tensor(t.name);
    if (t.bias) {
      CHECK(std::all_of(w.begin(), w.end(), [](float v) { return v == 0.0f; }));
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(t.fan_in + t.fan_out));
    double sq = 0.0;
    for (float v : w) {
      CHECK(std::abs(v) <= bound);
      sq += double(v) * v;
    }
    if (t.size > 10000) CHECK(sq / t.size == doctest::Approx(bound * bound / 3.0).epsilon(0.02));
  }
  CHECK_FAILS_WITH(init_model(cfg, 1, info_for(32)), ErrorKind::Configuration);
}

TEST_CASE("zero weights map any input to the zero latent") {
  for (std::size_t dim : {64u, 768u}) {
    ArchitectureConfig cfg;
    cfg.input_dim = dim;
    auto m = init_model(cfg, 1, info_for(dim));
    std::fill(m.weights.begin(), m.weights.end(), 0.0f);
    SplitMix64 rng(dim);
    const auto z = forward(m, random_embedding(rng, dim));
    CHECK(z == LatentVector{});
  }
}

TEST_CASE("forward always emits 512 finite values for valid configurations") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ArchitectureConfig cfg;
    cfg.input_dim = 8 + rng.below(120);
    cfg.conv.clear();
    std::size_t length = cfg.input_dim;
    const auto blocks = rng.below(3);
    for (std::uint64_t i = 0; i < blocks && length / 2 > 0; ++i, length /= 2) {
      cfg.conv.push_back({1 + rng.below(8), 1 + 2 * rng.below(3)});
    }
    cfg.fc.clear();
    for (std::uint64_t i = rng.below(3); i > 0; --i) cfg.fc.push_back(1 + rng.below(32));
    const auto m = init_model(cfg, rng.next(), info_for(cfg.input_dim));
    std::vector<EmbeddingVector> batch;
    for (int b = 0; b < 3; ++b) batch.push_back(random_embedding(rng, cfg.input_dim));
    const auto out = forward_batch(m, batch);
    REQUIRE(out.size() == 3);
    for (const auto& z : out) CHECK(z.is_finite());
    // Batched and single-sample evaluation agree up to summation order.
    const auto single = forward(m, batch[1]);
    for (std::size_t i = 0; i < kLatentDim; ++i) CHECK(single[i] == doctest::Approx(out[1][i]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("hand-computed micro instance") {
  // One 3-tap conv channel, no hidden fc. The 4-value example is zero-padded
  // to the minimum input length; positions past the example do not reach
  // the first two pooled outputs.
  ArchitectureConfig cfg;
  cfg.input_dim = 8;
  cfg.conv = {{1, 3}};
  cfg.fc = {};
  auto m = init_model(cfg, 0, info_for(8));
  const auto layout = m.layout;
  const auto& kernel = find(layout, "conv0.weight");
  const auto& out_w = find(layout, "out.weight");
  const auto& out_b = find(layout, "out.bias");
  REQUIRE(out_w.shape == std::vector<std::size_t>{512, 4});
  m.weights[kernel.offset + 0] = 1.0f;
  m.weights[kernel.offset + 1] = 0.0f;
  m.weights[kernel.offset + 2] = -1.0f;
  m.weights[find(layout, "conv0.bias").offset] = 0.0f;
  for (std::size_t i = 0; i < 512; ++i) {
    const float wi = static_cast<float>(i) / 64.0f;
    const float row[4] = {wi, -1.0f, 0.5f, 0.25f};
    for (std::size_t j = 0; j < 4; ++j) m.weights[out_w.offset + i * 4 + j] = row[j];
    m.weights[out_b.offset + i] = 0.125f;
  }

  SUBCASE("example input") {
    // conv [2, 2, 2, -3, -4, 0, 0, 0] -> relu [2, 2, 2, 0, 0, 0, 0, 0] -> pool [2, 2, 0, 0]
    const EmbeddingVector x{{1, 2, 3, 4, 0, 0, 0, 0}};
    const auto z = forward(m, x);
    for (std::size_t i = 0; i < 512; ++i) {
      const float expected = 2.0f * (static_cast<float>(i) / 64.0f) - 2.0f + 0.125f;
      CHECK(z[i] == doctest::Approx(expected).epsilon(1e-6));
    }
  }
  SUBCASE("example shifted to the end") {
    // conv [0, 0, 0, 1, 2, 2, 2, -3] -> relu [0, 0, 0, 1, 2, 2, 2, 0] -> pool [0, 1, 2, 2]
    const EmbeddingVector x{{0, 0, 0, 0, 1, 2, 3, 4}};
    const auto z = forward(m, x);
    for (std::size_t i = 0; i < 512; ++i) CHECK(z[i] == doctest::Approx(-1.0 + 1.0 + 0.5 + 0.125).epsilon(1e-6));
  }
}

TEST_CASE("loss examples") {
  SplitMix64 rng(4);
  std::vector<LatentVector> y{facegen::testing::random_latent(rng), facegen::testing::random_latent(rng)};
  CHECK(loss_mse(y, y).mse == 0.0);
  auto shifted = y;
  for (auto& z : shifted)
    for (std::size_t i = 0; i < kLatentDim; ++i) z[i] += 1.0f;
  CHECK(loss_mse(shifted, y).mse == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(loss_mse(y, shifted).mse >= 0.0);
  CHECK_FAILS_WITH(loss_mse({}, {}), ErrorKind::EmptyBatch);
  CHECK_FAILS_WITH(loss_mse(y, std::span<const LatentVector>(y).first(1)), ErrorKind::Shape);
}

TEST_CASE("analytic gradients match central finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = finite_difference_check(micro_config(), seed);
    CAPTURE(seed);
    CAPTURE(r.worst_tensor);
    CHECK(r.checked > 200);
    CHECK(r.max_relative_error < 1e-3);
  }
  // The first point drawn for seed 3 has a branch flip inside the stencil;
  // the probe must notice it.
  CHECK(finite_difference_check(micro_config(), 3).redraws >= 1);
}

TEST_CASE("float and double networks agree on the gradient") {
  const auto cfg = micro_config();
  const auto m = init_model(cfg, 3, info_for(8));
  SplitMix64 rng(8);
  std::vector<EmbeddingVector> xs;
  std::vector<LatentVector> ts;
  for (int b = 0; b < 4; ++b) {
    xs.push_back(random_embedding(rng, 8));
    ts.push_back(facegen::testing::random_latent(rng));
  }
  const auto g = backward(m, xs, ts);

  std::vector<double> params(m.weights.begin(), m.weights.end()), inputs, targets;
  for (const auto& x : xs) inputs.insert(inputs.end(), x.values.begin(), x.values.end());
  for (const auto& t : ts) targets.insert(targets.end(), t.values().begin(), t.values().end());
  std::vector<double> gd(params.size());
  Network<double> net(cfg);
  net.gradient(params, inputs, targets, xs.size(), gd);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(gd[i]).epsilon(1e-4).scale(1e-6));
}

TEST_CASE("duplicating a batch leaves the gradient unchanged") {
  const auto cfg = micro_config();
  SplitMix64 rng(21);
  std::vector<double> params(parameter_count(cfg)), inputs(2 * 8), targets(2 * kLatentDim);
  for (auto& p : params) p = 0.3 * rng.normal();
  for (auto& x : inputs) x = rng.normal();
  for (auto& t : targets) t = rng.normal();
  auto twice = [](const std::vector<double>& v) {
    auto out = v;
    out.insert(out.end(), v.begin(), v.end());
    return out;
  };
  Network<double> net(cfg);
  std::vector<double> g1(params.size()), g2(params.size());
  const double l1 = net.gradient(params, inputs, targets, 2, g1);
  const double l2 = net.gradient(params, twice(inputs), twice(targets), 4, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-10).scale(1e-12));
}

TEST_CASE("perfect predictions give a zero output-bias gradient") {
  const auto cfg = micro_config();
  const auto m = init_model(cfg, 9, info_for(8));
  SplitMix64 rng(2);
  std::vector<EmbeddingVector> xs{random_embedding(rng, 8), random_embedding(rng, 8)};
  const auto ts = forward_batch(m, xs);
  const auto g = backward(m, xs, ts);
  const auto& bias = find(m.layout, "out.bias");
  for (std::size_t i = bias.offset; i < bias.offset + bias.size; ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("shape and batch errors") {
  const auto m = init_model(micro_config(), 1, info_for(8));
  SplitMix64 rng(3);
  CHECK_FAILS_WITH(forward(m, random_embedding(rng, 9)), ErrorKind::Shape);
  CHECK_FAILS_WITH(backward(m, {}, {}), ErrorKind::EmptyBatch);
  Network<float> net(m.config);
  std::vector<float> out(kLatentDim);
  std::vector<float> x(8);
  CHECK_FAILS_WITH(net.forward(m.weights, x, 0, out), ErrorKind::EmptyBatch);
  CHECK_FAILS_WITH(net.forward(std::span<const float>(m.weights).first(10), x, 1, out), ErrorKind::Shape);
  CHECK_FAILS_WITH(net.forward(m.weights, x, 2, out), ErrorKind::Shape);
}

TEST_CASE("Adam: first step on a scalar") {
  TrainConfig cfg;
  std::vector<double> w{0.0};
  const std::vector<double> g{1.0};
  AdamState<double> s(1);
  adam_step<double>(w, g, s, cfg);
  // m_hat = v_hat = 1 on the first step.
  CHECK(w[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(-9.99999990e-4).epsilon(1e-8));
  CHECK(s.step == 1);

  std::vector<float> wf{0.0f};
  const std::vector<float> gf{1.0f};
  AdamState<float> sf(1);
  adam_step<float>(wf, gf, sf, cfg);
  CHECK(wf[0] == doctest::Approx(-9.99999990e-4).epsilon(1e-6));
}

TEST_CASE("Adam: zero gradient and determinism") {
  TrainConfig cfg;
  std::vector<double> w{0.5, -2.0};
  AdamState<double> s(2);
  adam_step<double>(w, std::vector<double>{0.0, 0.0}, s, cfg);
  CHECK(w == std::vector<double>{0.5, -2.0});

  std::vector<float> a{1.0f, 2.0f, 3.0f}, b = a;
  AdamState<float> sa(3), sb(3);
  const std::vector<float> g{0.1f, -0.2f, 0.3f};
  for (int i = 0; i < 3; ++i) {
    adam_step<float>(a, g, sa, cfg);
    adam_step<float>(b, g, sb, cfg);
  }
  CHECK(a == b);
}

TEST_CASE("Adam: a non-finite gradient names its tensor and leaves weights alone") {
  const auto m = init_model(micro_config(), 1, info_for(8));
  auto w = m.weights;
  std::vector<float> g(w.size(), 0.0f);
  const auto& fc = find(m.layout, "fc0.bias");
  g[fc.offset + 2] = std::numeric_limits<float>::quiet_NaN();
  AdamState<float> s(w.size());
  try {
    adam_step<float>(w, g, s, TrainConfig{}, m.layout);
    FAIL("expected TrainingDiverged");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TrainingDiverged);
    CHECK(std::string(e.what()).find("fc0.bias") != std::string::npos);
  }
  CHECK(w == m.weights);
  CHECK(s.step == 0);
}

TEST_CASE("train configuration validation") {
  const auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    CHECK_FAILS_WITH(c.validate(), ErrorKind::Configuration);
  };
  bad([](TrainConfig& c) { c.epochs = 0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.learning_rate = 0.0; });
  bad([](TrainConfig& c) { c.beta1 = 1.0; });
  bad([](TrainConfig& c) { c.epsilon = 0.0; });
  bad([](TrainConfig& c) { c.eval_every = -1; });
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("results do not depend on where the caller's buffers live") {
  const auto cfg = micro_config();
  const auto m = init_model(cfg, 12, info_for(8));
  const std::size_t P = m.weights.size(), B = 8;
  SplitMix64 rng(6);
  std::vector<float> xs(B * 8), ys(B * kLatentDim);
  for (auto& v : xs) v = static_cast<float>(rng.normal());
  for (auto& v : ys) v = static_cast<float>(rng.normal());

  Network<float> net(cfg);
  std::vector<float> first_grad, first_out;
  for (std::size_t shift = 0; shift < 16; shift += 3) {
    std::vector<float> wb(P + 16), xb(xs.size() + 16), yb(ys.size() + 16), gb(P + 16), ob(B * kLatentDim + 16);
    std::copy(m.weights.begin(), m.weights.end(), wb.begin() + static_cast<std::ptrdiff_t>(shift));
    std::copy(xs.begin(), xs.end(), xb.begin() + static_cast<std::ptrdiff_t>((shift * 7) % 16));
    std::copy(ys.begin(), ys.end(), yb.begin() + static_cast<std::ptrdiff_t>((shift * 5) % 16));
    const std::span<const float> w(wb.data() + shift, P), x(xb.data() + (shift * 7) % 16, xs.size()),
        y(yb.data() + (shift * 5) % 16, ys.size());
    const std::span<float> g(gb.data() + (shift * 11) % 16, P), out(ob.data() + (shift * 13) % 16, B * kLatentDim);
    net.gradient(w, x, y, B, g);
    net.forward(w, x, B, out);
    if (shift == 0) {
      first_grad.assign(g.begin(), g.end());
      first_out.assign(out.begin(), out.end());
    } else {
      CHECK(std::equal(g.begin(), g.end(), first_grad.begin()));
      CHECK(std::equal(out.begin(), out.end(), first_out.begin()));
    }
  }
}

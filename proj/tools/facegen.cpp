// Command-line front end: dataset build/split, train, eval, generate, serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "facegen/dataset.hpp"
#include "facegen/descriptor.hpp"
#include "facegen/errors.hpp"
#include "facegen/generator.hpp"
#include "facegen/http_api.hpp"
#include "facegen/image_codec.hpp"
#include "facegen/inference.hpp"
#include "facegen/model_io.hpp"
#include "facegen/persistence.hpp"
#include "facegen/regressor.hpp"
#include "facegen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Backends {
  std::string embedder_cmd;
  std::size_t embedder_dim = 768;
  std::string generator_cmd;
};

void add_backend_options(CLI::App* cmd, Backends& b) {
  cmd->add_option("--embedder-cmd", b.embedder_cmd, "External sentence encoder command (default: built-in hash embedder)");
  cmd->add_option("--embedder-dim", b.embedder_dim, "Output dimension of the external encoder");
  cmd->add_option("--generator-cmd", b.generator_cmd, "External generator command with {latents} and {out}");
}

std::shared_ptr<const facegen::Embedder> make_training_embedder(const Backends& b) {
  if (b.embedder_cmd.empty()) return std::make_shared<facegen::HashEmbedder>();
  return std::make_shared<facegen::ExternalEmbedder>(b.embedder_cmd, b.embedder_dim);
}

std::shared_ptr<const facegen::Generator> make_generator(const Backends& b, std::uint64_t seed) {
  if (b.generator_cmd.empty()) return std::make_shared<facegen::ToyGenerator>(seed);
  return std::make_shared<facegen::ExternalGenerator>(b.generator_cmd);
}

std::vector<facegen::ConvBlockConfig> parse_conv(const std::string& spec) {
  std::vector<facegen::ConvBlockConfig> out;
  if (spec.empty() || spec == "none") return out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--conv", "expected CxK items such as 64x5,128x5");
    out.push_back({std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1))});
  }
  return out;
}

ordered_json history_json(const std::vector<facegen::EpochRecord>& history) {
  ordered_json out = ordered_json::array();
  for (const auto& h : history) {
    out.push_back({{"epoch", h.epoch},
                   {"train_mse", h.train_mse},
                   {"test_mse", h.test_mse ? ordered_json(*h.test_mse) : ordered_json(nullptr)}});
  }
  return out;
}

facegen::TrainTestSplit split_for(const fs::path& data, const facegen::DatasetManifest& manifest, double fraction,
                                  std::uint64_t seed) {
  if (fs::exists(data / "split.json")) return facegen::read_split(data, manifest.n);
  auto s = facegen::split(manifest, fraction, seed);
  facegen::write_split(data, s);
  return s;
}

ordered_json result_json(const facegen::GenerationResult& r) {
  ordered_json attrs = nullptr;
  if (r.attributes) {
    attrs = ordered_json::object();
    for (int c = 0; c < static_cast<int>(facegen::kAttributeCount); ++c) {
      attrs[std::string(facegen::channel_name(c))] = std::string(facegen::level_name(c, r.attributes->levels[c]));
    }
  }
  std::vector<float> latent(r.latent.values().begin(), r.latent.values().end());
  return {{"latent_id", r.latent_id},
          {"latent", latent},
          {"attributes", attrs},
          {"match", r.match ? ordered_json(*r.match) : ordered_json(nullptr)}};
}

facegen::ApiServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-face generation through a latent regressor"};
  app.require_subcommand(1);

  // dataset ---------------------------------------------------------------
  auto* dataset = app.add_subcommand("dataset", "Build or split a synthetic dataset");
  dataset->require_subcommand(1);

  facegen::BuildConfig build;
  std::uint64_t generator_seed = facegen::kDefaultProjectionSeed;
  std::string generator_cmd;
  auto* build_cmd = dataset->add_subcommand("build", "Sample latents, caption and optionally render them");
  build_cmd->add_option("--n", build.n, "Number of records")->check(CLI::PositiveNumber);
  build_cmd->add_option("--latent-seed", build.latent_seed);
  build_cmd->add_option("--descriptor-seed", build.descriptor_seed);
  build_cmd->add_option("--generator-seed", generator_seed);
  build_cmd->add_option("--out", build.output_dir, "Output directory")->required();
  build_cmd->add_flag("--images", build.include_images, "Also write images/<id>.png");
  build_cmd->add_option("--generator-cmd", generator_cmd, "External generator command with {latents} and {out}");

  fs::path split_dir;
  double split_fraction = 0.75;
  std::uint64_t split_seed = 0;
  auto* split_cmd = dataset->add_subcommand("split", "Write split.json for a dataset");
  split_cmd->add_option("--dir,--data", split_dir, "Dataset directory")->required();
  split_cmd->add_option("--train-fraction,--fraction", split_fraction, "Train fraction");
  split_cmd->add_option("--seed", split_seed);

  // train -----------------------------------------------------------------
  fs::path data_dir, model_path, history_path, report_path;
  facegen::TrainConfig train_cfg;
  std::uint64_t seed = 0;
  std::string conv_spec = "64x5,128x5";
  std::vector<std::size_t> fc_widths = {1024};
  Backends backends;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train the embedding-to-latent regressor");
  train_cmd->add_option("--data", data_dir)->required();
  train_cmd->add_option("--epochs", train_cfg.epochs);
  train_cmd->add_option("--batch", train_cfg.batch_size);
  train_cmd->add_option("--lr", train_cfg.learning_rate);
  train_cmd->add_option("--seed", seed, "Initialization and shuffle seed");
  train_cmd->add_option("--eval-every", train_cfg.eval_every);
  train_cmd->add_option("--conv", conv_spec, "Conv blocks as CxK list, or 'none'");
  train_cmd->add_option("--fc", fc_widths, "Hidden fully connected widths")->expected(0, -1);
  train_cmd->add_option("--split-fraction", split_fraction, "Used when the dataset has no split.json");
  train_cmd->add_option("--split-seed", split_seed);
  train_cmd->add_option("--out", model_path)->required();
  train_cmd->add_option("--history", history_path);
  train_cmd->add_flag("--quiet", quiet);
  add_backend_options(train_cmd, backends);

  // eval ------------------------------------------------------------------
  std::string side = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on one side of the split");
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--report", report_path);
  eval_cmd->add_option("--side", side)->check(CLI::IsMember({"train", "test"}));
  add_backend_options(eval_cmd, backends);

  // generate --------------------------------------------------------------
  std::string text;
  fs::path image_path, json_path;
  auto* gen_cmd = app.add_subcommand("generate", "Generate a face from a description");
  gen_cmd->add_option("text", text)->required();
  gen_cmd->add_option("--model", model_path)->required();
  gen_cmd->add_option("--out", image_path, "PNG output path");
  gen_cmd->add_option("--json", json_path, "Result JSON output path");
  add_backend_options(gen_cmd, backends);

  // serve -----------------------------------------------------------------
  facegen::ServerConfig server_cfg;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP/JSON API");
  serve_cmd->add_option("--model", model_path)->required();
  serve_cmd->add_option("--data", data_dir, "Dataset whose generator seed must match the model");
  serve_cmd->add_option("--host", server_cfg.host);
  serve_cmd->add_option("--port", server_cfg.port);
  serve_cmd->add_option("--sessions", server_cfg.sessions_dir, "Session log directory");
  serve_cmd->add_option("--static", server_cfg.static_dir, "Browser client directory served at /");
  add_backend_options(serve_cmd, backends);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_cmd) {
      auto generator = make_generator({.generator_cmd = generator_cmd}, generator_seed);
      const auto m = facegen::build(build, *generator);
      std::cout << "wrote " << m.n << " records to " << build.output_dir.string() << "\n";
    } else if (*split_cmd) {
      const auto ds = facegen::load(split_dir);
      const auto s = facegen::split(ds.manifest, split_fraction, split_seed);
      facegen::write_split(split_dir, s);
      std::cout << "train " << s.train_ids.size() << ", test " << s.test_ids.size() << "\n";
    } else if (*train_cmd) {
      const auto ds = facegen::load(data_dir);
      const auto s = split_for(data_dir, ds.manifest, split_fraction, split_seed);
      const auto embedder = make_training_embedder(backends);
      facegen::ArchitectureConfig arch;
      arch.input_dim = embedder->info().dimension;
      arch.conv = parse_conv(conv_spec);
      arch.fc = fc_widths;
      train_cfg.shuffle_seed = seed;
      auto model = facegen::init_model(arch, seed, embedder->info());
      model = facegen::train(std::move(model), ds.records, s, *embedder, train_cfg, [&](const facegen::EpochRecord& r) {
        if (quiet) return;
        std::printf("epoch %4d  train_mse %.6f", r.epoch, r.train_mse);
        if (r.test_mse) std::printf("  test_mse %.6f", *r.test_mse);
        std::printf("\n");
        std::fflush(stdout);
      });
      model.training.generator_seed = ds.manifest.generator_seed;
      const auto bytes = facegen::write_model(model, model_path);
      if (!history_path.empty()) facegen::write_file_text(history_path, history_json(model.history).dump(2) + "\n");
      std::cout << "wrote " << bytes << " bytes to " << model_path.string() << "\n";
    } else if (*eval_cmd) {
      const auto ds = facegen::load(data_dir);
      const auto s = facegen::read_split(data_dir, ds.manifest.n);
      const auto model = facegen::read_model(model_path);
      const auto embedder = facegen::make_embedder(model.embedder, backends.embedder_cmd);
      const auto proj = facegen::make_projection(ds.manifest.generator_seed);
      const auto& ids = side == "test" ? s.test_ids : s.train_ids;
      const auto report = facegen::evaluate(model, ds.records, ids, *embedder, proj);
      const double chance = facegen::chance_baseline_monte_carlo(proj, 10000, 0);
      ordered_json j = {{side + "_mse", report.mse.mse},
                        {"macro_accuracy", report.macro_accuracy},
                        {"per_channel", report.per_channel},
                        {"chance_baseline", chance},
                        {"records", report.records}};
      if (!report_path.empty()) facegen::write_file_text(report_path, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
    } else if (*gen_cmd) {
      auto model = std::make_shared<const facegen::RegressorModel>(facegen::read_model(model_path));
      std::shared_ptr<const facegen::Embedder> embedder = facegen::make_embedder(model->embedder, backends.embedder_cmd);
      const facegen::Pipeline pipeline(model, embedder, make_generator(backends, model->training.generator_seed));
      const auto result = pipeline.generate_from_text(text);
      if (!image_path.empty()) facegen::write_file_bytes(image_path, facegen::encode_png(result.image));
      const auto j = result_json(result);
      if (!json_path.empty()) facegen::write_file_text(json_path, j.dump(2) + "\n");
      std::cout << "latent_id " << result.latent_id;
      if (result.match) std::cout << "  match " << *result.match;
      std::cout << "\n";
    } else if (*serve_cmd) {
      auto model = std::make_shared<const facegen::RegressorModel>(facegen::read_model(model_path));
      if (!data_dir.empty()) {
        const auto manifest = facegen::manifest_from_json(facegen::read_file_text(data_dir / "manifest.json"));
        if (manifest.generator_seed != model->training.generator_seed) {
          facegen::fail(facegen::ErrorKind::Configuration, "model was trained against a different generator seed");
        }
      }
      std::shared_ptr<const facegen::Embedder> embedder = facegen::make_embedder(model->embedder, backends.embedder_cmd);
      auto pipeline = std::make_shared<const facegen::Pipeline>(
          model, embedder, make_generator(backends, model->training.generator_seed));
      server_cfg.model_name = model_path.stem().string();
      facegen::ApiServer server(pipeline, server_cfg);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << server_cfg.host << ":" << port << "\n" << std::flush;
      server.listen();
      g_server = nullptr;
    }
  } catch (const facegen::Error& e) {
    std::cerr << "facegen: " << facegen::to_string(e.kind()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "facegen: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

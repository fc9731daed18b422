#include "facegen/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <system_error>

#include <json.hpp>

#include "facegen/errors.hpp"
#include "facegen/persistence.hpp"

namespace facegen {

using nlohmann::ordered_json;

namespace {

ordered_json header(const RegressorModel& m) {
  ordered_json arch;
  arch["input_dim"] = m.config.input_dim;
  arch["conv"] = ordered_json::array();
  for (const auto& b : m.config.conv) arch["conv"].push_back({{"out_channels", b.out_channels}, {"kernel_size", b.kernel_size}});
  arch["fc"] = m.config.fc;
  arch["output_dim"] = m.config.output_dim;

  ordered_json history = ordered_json::array();
  for (const auto& h : m.history) {
    history.push_back({{"epoch", h.epoch},
                       {"train_mse", h.train_mse},
                       {"test_mse", h.test_mse ? ordered_json(*h.test_mse) : ordered_json(nullptr)}});
  }
  ordered_json tensors = ordered_json::array();
  for (const auto& t : m.layout) tensors.push_back({{"name", t.name}, {"shape", t.shape}});

  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["architecture"] = std::move(arch);
  j["embedder"] = {{"name", m.embedder.name}, {"dimension", m.embedder.dimension}, {"deterministic", m.embedder.deterministic}};
  j["init_seed"] = m.init_seed;
  j["training"] = {{"generator_seed", m.training.generator_seed},
                   {"shuffle_seed", m.training.shuffle_seed},
                   {"epochs", m.training.epochs},
                   {"batch_size", m.training.batch_size},
                   {"learning_rate", m.training.learning_rate},
                   {"train_records", m.training.train_records}};
  j["history"] = std::move(history);
  j["tensors"] = std::move(tensors);
  return j;
}

RegressorModel model_from_header(const ordered_json& j) {
  RegressorModel m;
  const auto& a = j.at("architecture");
  m.config.input_dim = a.at("input_dim").get<std::size_t>();
  m.config.conv.clear();
  for (const auto& b : a.at("conv")) {
    m.config.conv.push_back({b.at("out_channels").get<std::size_t>(), b.at("kernel_size").get<std::size_t>()});
  }
  m.config.fc = a.at("fc").get<std::vector<std::size_t>>();
  m.config.output_dim = a.at("output_dim").get<std::size_t>();

  const auto& e = j.at("embedder");
  m.embedder = {e.at("name").get<std::string>(), e.at("dimension").get<std::size_t>(), e.at("deterministic").get<bool>()};
  m.init_seed = j.at("init_seed").get<std::uint64_t>();

  const auto& t = j.at("training");
  m.training.generator_seed = t.at("generator_seed").get<std::uint64_t>();
  m.training.shuffle_seed = t.at("shuffle_seed").get<std::uint64_t>();
  m.training.epochs = t.at("epochs").get<int>();
  m.training.batch_size = t.at("batch_size").get<std::size_t>();
  m.training.learning_rate = t.at("learning_rate").get<double>();
  m.training.train_records = t.at("train_records").get<std::size_t>();

  for (const auto& h : j.at("history")) {
    EpochRecord r;
    r.epoch = h.at("epoch").get<int>();
    r.train_mse = h.at("train_mse").get<double>();
    if (!h.at("test_mse").is_null()) r.test_mse = h.at("test_mse").get<double>();
    m.history.push_back(r);
  }
  return m;
}

}  // namespace

std::string model_header_json(const RegressorModel& model) { return header(model).dump(); }

std::vector<std::uint8_t> serialize_model(const RegressorModel& model) {
  if (model.weights.size() != parameter_count(model.config)) fail(ErrorKind::Shape, "model weights do not match its config");
  if (!std::all_of(model.weights.begin(), model.weights.end(), [](float w) { return std::isfinite(w); })) {
    fail(ErrorKind::CorruptModel, "refusing to write a model with non-finite weights");
  }
  const std::string head = model_header_json(model) + "\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.reserve(out.size() + model.weights.size() * sizeof(float));
  for (float w : model.weights) append_f32_le(out, w);
  return out;
}

RegressorModel deserialize_model(std::span<const std::uint8_t> bytes) {
  const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (newline == bytes.end()) fail(ErrorKind::CorruptModel, "model header is not newline-terminated");
  const std::string head(bytes.begin(), newline);

  ordered_json j;
  try {
    j = ordered_json::parse(head);
  } catch (const ordered_json::exception& e) {
    fail(ErrorKind::CorruptModel, std::string("model header is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format_version") || !j["format_version"].is_number_integer()) {
    fail(ErrorKind::CorruptModel, "model header lacks an integer format_version");
  }
  const auto version = j["format_version"].get<std::int64_t>();
  if (version != kModelFormatVersion) {
    fail(ErrorKind::Version, "unsupported model format_version " + std::to_string(version));
  }

  RegressorModel m;
  try {
    m = model_from_header(j);
    m.layout = tensor_layout(m.config);
  } catch (const ordered_json::exception& e) {
    fail(ErrorKind::CorruptModel, std::string("malformed model header: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::CorruptModel, std::string("invalid architecture in model header: ") + e.what());
  }
  if (m.embedder.dimension != m.config.input_dim) fail(ErrorKind::CorruptModel, "embedder dimension disagrees with input_dim");

  try {
    const auto& listed = j.at("tensors");
    if (listed.size() != m.layout.size()) fail(ErrorKind::CorruptModel, "tensor list does not match the architecture");
    for (std::size_t i = 0; i < listed.size(); ++i) {
      if (listed[i].at("name").get<std::string>() != m.layout[i].name ||
          listed[i].at("shape").get<std::vector<std::size_t>>() != m.layout[i].shape) {
        fail(ErrorKind::CorruptModel, "tensor " + m.layout[i].name + " has an unexpected name or shape in the header");
      }
    }
  } catch (const ordered_json::exception& e) {
    fail(ErrorKind::CorruptModel, std::string("malformed tensor list: ") + e.what());
  }

  const std::size_t count = parameter_count(m.config);
  const auto payload = bytes.subspan(static_cast<std::size_t>(newline - bytes.begin()) + 1);
  if (payload.size() != count * sizeof(float)) {
    fail(ErrorKind::CorruptModel, "model payload holds " + std::to_string(payload.size()) + " bytes, header implies " +
                                      std::to_string(count * sizeof(float)));
  }
  m.weights.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    m.weights[i] = load_f32_le(payload.data() + i * sizeof(float));
    if (!std::isfinite(m.weights[i])) fail(ErrorKind::CorruptModel, "model contains a non-finite weight");
  }
  return m;
}

std::uint64_t write_model(const RegressorModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  auto tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::Persistence, "cannot move model into place at " + path.string());
  }
  return bytes.size();
}

RegressorModel read_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace facegen

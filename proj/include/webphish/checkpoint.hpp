#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "webphish/training.hpp"

namespace webphish {

// Layout:
//   line 1:  "WEBPHISH-CHECKPOINT <format_version> crc32=<8 hex digits> bytes=<payload length>"
//   rest:    JSON payload, keys in fixed order:
//            format_version, model_config, vocabularies{url,html}, tensors[{name,shape,data}]
// The CRC-32 covers the payload bytes exactly as written. Vocabularies are stored as
// code point arrays in index order (first entry = index 2).

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "WEBPHISH-CHECKPOINT";

class CheckpointError : public DataError {
 public:
  CheckpointError(std::string kind, const std::string& what) : DataError(std::move(kind), what) {}
};

namespace detail {

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = variant_name(c.variant);
  j["embed_dim"] = c.embed_dim;
  j["url_len"] = c.url_len;
  j["html_len"] = c.html_len;
  j["kernel_width"] = c.kernel_width;
  j["conv_filters"] = c.conv_filters;
  j["conv_layers"] = c.conv_layers;
  j["fc_units"] = c.fc_units;
  j["use_embedding"] = c.use_embedding;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.url_len = j.at("url_len").get<std::size_t>();
  c.html_len = j.at("html_len").get<std::size_t>();
  c.kernel_width = j.at("kernel_width").get<std::size_t>();
  c.conv_filters = j.at("conv_filters").get<std::size_t>();
  c.conv_layers = j.at("conv_layers").get<std::size_t>();
  c.fc_units = j.at("fc_units").get<std::vector<std::size_t>>();
  c.use_embedding = j.at("use_embedding").get<bool>();
  return c;
}

inline nlohmann::ordered_json vocab_to_json(const CharVocabulary& v) {
  auto arr = nlohmann::ordered_json::array();
  for (char32_t c : v.chars()) arr.push_back(static_cast<std::uint32_t>(c));
  return arr;
}

inline CharVocabulary vocab_from_json(const nlohmann::json& j) {
  std::u32string chars;
  for (const auto& v : j) chars.push_back(static_cast<char32_t>(v.get<std::uint32_t>()));
  return CharVocabulary::from_chars(chars);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Classifier& model) {
  nlohmann::ordered_json payload;
  payload["format_version"] = kCheckpointVersion;
  payload["model_config"] = detail::config_to_json(model.config);
  payload["vocabularies"]["url"] = detail::vocab_to_json(model.vocab.url);
  payload["vocabularies"]["html"] = detail::vocab_to_json(model.vocab.html);
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& n : model.params.named_tensors()) {
    nlohmann::ordered_json t;
    t["name"] = n.name;
    t["shape"] = n.tensor->shape;
    // float -> double is exact and the JSON writer emits round-trippable doubles.
    auto data = nlohmann::ordered_json::array();
    for (float v : n.tensor->data) data.push_back(static_cast<double>(v));
    t["data"] = std::move(data);
    tensors.push_back(std::move(t));
  }
  payload["tensors"] = std::move(tensors);
  const std::string body = payload.dump();
  char header[96];
  std::snprintf(header, sizeof header, "%s %d crc32=%08x bytes=%zu\n", kCheckpointMagic.data(), kCheckpointVersion,
                crc32(body), body.size());
  return std::string(header) + body;
}

inline Classifier deserialize_checkpoint(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointError("checkpoint_truncated", "checkpoint header incomplete");
  std::istringstream header(bytes.substr(0, nl));
  std::string magic, crc_field, bytes_field;
  int version = -1;
  header >> magic >> version >> crc_field >> bytes_field;
  if (magic != kCheckpointMagic) throw CheckpointError("checkpoint_format", "not a webphish checkpoint");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint_version", "checkpoint format version " + std::to_string(version) +
                                                    " is not supported (expected " +
                                                    std::to_string(kCheckpointVersion) + ")");
  if (crc_field.rfind("crc32=", 0) != 0 || bytes_field.rfind("bytes=", 0) != 0)
    throw CheckpointError("checkpoint_format", "malformed checkpoint header");
  std::uint32_t expected_crc = 0;
  std::size_t expected_len = 0;
  try {
    expected_crc = static_cast<std::uint32_t>(std::stoul(crc_field.substr(6), nullptr, 16));
    expected_len = static_cast<std::size_t>(std::stoull(bytes_field.substr(6)));
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint_format", "malformed checkpoint header");
  }
  const std::string_view body = std::string_view(bytes).substr(nl + 1);
  if (body.size() < expected_len)
    throw CheckpointError("checkpoint_truncated", "checkpoint payload truncated (" + std::to_string(body.size()) +
                                                      " of " + std::to_string(expected_len) + " bytes)");
  if (body.size() > expected_len) throw CheckpointError("checkpoint_format", "trailing bytes after checkpoint payload");
  if (crc32(body) != expected_crc) throw CheckpointError("checkpoint_checksum", "checkpoint checksum mismatch");

  Classifier model;
  try {
    const auto payload = nlohmann::json::parse(body);
    if (payload.at("format_version").get<int>() != kCheckpointVersion)
      throw CheckpointError("checkpoint_version", "payload format version mismatch");
    model.config = detail::config_from_json(payload.at("model_config"));
    model.config.validate();
    model.vocab.url = detail::vocab_from_json(payload.at("vocabularies").at("url"));
    model.vocab.html = detail::vocab_from_json(payload.at("vocabularies").at("html"));
    model.params = init_params<float>(model.config, vocab_sizes(model.vocab), 0);
    auto named = model.params.named_tensors();
    const auto& tensors = payload.at("tensors");
    if (tensors.size() != named.size())
      throw CheckpointError("checkpoint_format", "tensor count " + std::to_string(tensors.size()) + " != expected " +
                                                    std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != named[i].name)
        throw CheckpointError("checkpoint_format", "unexpected tensor '" + t.at("name").get<std::string>() + "'");
      if (t.at("shape").get<std::vector<std::size_t>>() != named[i].tensor->shape)
        throw CheckpointError("checkpoint_format", "shape mismatch for tensor " + named[i].name);
      const auto& data = t.at("data");
      if (data.size() != named[i].tensor->size())
        throw CheckpointError("checkpoint_format", "element count mismatch for tensor " + named[i].name);
      for (std::size_t k = 0; k < data.size(); ++k) named[i].tensor->data[k] = static_cast<float>(data[k].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint_format", std::string("malformed checkpoint payload: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint_format", std::string("invalid model config in checkpoint: ") + e.what());
  }
  if (!model.params.all_finite()) throw CheckpointError("checkpoint_format", "checkpoint holds non-finite values");
  return model;
}

inline void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

inline Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace webphish

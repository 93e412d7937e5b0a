#include "voxmae/checkpoint.hpp"

#include <cstdio>

#include "voxmae/bytes.hpp"
#include "voxmae/error.hpp"
#include "voxmae/rng.hpp"
#include "voxmae/volume_io.hpp"

namespace voxmae {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointMagic = "VOXMAE-CKPT";
constexpr int kCheckpointVersion = 1;
constexpr std::size_t kMaxManifestBytes = 1 << 24;

FormatError malformed(const std::string& what) {
  return FormatError(FormatError::Kind::MalformedHeader, "checkpoint manifest: " + what);
}

}  // namespace

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::MaePretrained:
      return "mae-pretrained";
    case Provenance::Scratch:
      return "scratch";
    case Provenance::Finetuned:
      return "finetuned";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  for (Provenance p : {Provenance::MaePretrained, Provenance::Scratch, Provenance::Finetuned}) {
    if (s == to_string(p)) return p;
  }
  throw malformed("unknown provenance '" + s + "'");
}

const NamedArray* Checkpoint::find(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::string fingerprint_of(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  json manifest;
  manifest["magic"] = kCheckpointMagic;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = "float32-le";
  manifest["fingerprint"] = c.fingerprint;
  manifest["encoder_fingerprint"] = c.encoder_fingerprint;
  manifest["provenance"] = to_string(c.provenance);
  manifest["epoch"] = c.epoch;
  manifest["seed"] = c.seed;
  manifest["config"] = c.config;
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& p : c.params) {
    if (numel(p.shape) != p.values.size()) {
      throw DimensionError("checkpoint parameter '" + p.name + "' has shape " +
                           to_string(p.shape) + " but " + std::to_string(p.values.size()) +
                           " values");
    }
    const std::size_t bytes = p.values.size() * sizeof(float);
    entries.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  manifest["params"] = entries;
  const std::string text = manifest.dump() + "\n";
  std::vector<std::uint8_t> out(text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& p : c.params)
    for (float v : p.values) bytes::append_le(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& data) {
  std::size_t newline = 0;
  while (newline < data.size() && newline < kMaxManifestBytes && data[newline] != '\n') ++newline;
  if (newline >= data.size()) throw malformed("no manifest line");
  json manifest;
  try {
    manifest = json::parse(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(newline));
  } catch (const json::exception& e) {
    throw malformed(std::string("invalid JSON: ") + e.what());
  }
  if (!manifest.is_object() || manifest.value("magic", "") != kCheckpointMagic) {
    throw malformed("missing magic string");
  }
  if (!manifest.contains("version") || !manifest["version"].is_number_integer()) {
    throw malformed("missing version");
  }
  if (manifest["version"].get<int>() != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::UnknownVersion,
                      "checkpoint: unknown format version " + manifest["version"].dump());
  }
  Checkpoint c;
  const std::uint8_t* payload = data.data() + newline + 1;
  const std::size_t payload_bytes = data.size() - newline - 1;
  std::size_t expected_offset = 0;
  try {
    if (manifest.at("dtype").get<std::string>() != "float32-le") throw malformed("unsupported dtype");
    c.fingerprint = manifest.at("fingerprint").get<std::string>();
    c.encoder_fingerprint = manifest.at("encoder_fingerprint").get<std::string>();
    c.provenance = provenance_from_string(manifest.at("provenance").get<std::string>());
    c.epoch = manifest.at("epoch").get<std::size_t>();
    c.seed = manifest.at("seed").get<std::uint64_t>();
    c.config = manifest.at("config");
    for (const auto& entry : manifest.at("params")) {
      NamedArray p;
      p.name = entry.at("name").get<std::string>();
      p.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto bytes = entry.at("bytes").get<std::size_t>();
      const std::size_t count = numel(p.shape);
      if (bytes != count * sizeof(float) || offset != expected_offset) {
        throw FormatError(FormatError::Kind::ShapeMismatch,
                          "checkpoint parameter '" + p.name + "': shape " + to_string(p.shape) +
                              " implies " + std::to_string(count * sizeof(float)) +
                              " bytes at offset " + std::to_string(expected_offset) +
                              ", manifest records " + std::to_string(bytes) + " bytes at offset " +
                              std::to_string(offset));
      }
      if (offset + bytes > payload_bytes) {
        throw FormatError(FormatError::Kind::LengthMismatch,
                          "checkpoint parameter '" + p.name + "' extends past the payload (" +
                              std::to_string(payload_bytes) + " bytes)");
      }
      p.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        p.values[i] = bytes::load_le<float>(payload + offset + i * sizeof(float));
      }
      expected_offset += bytes;
      c.params.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw malformed(e.what());
  }
  if (expected_offset != payload_bytes) {
    throw FormatError(FormatError::Kind::LengthMismatch,
                      "checkpoint: manifest describes " + std::to_string(expected_offset) +
                          " payload bytes, file holds " + std::to_string(payload_bytes));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_bytes(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

template <typename T>
std::vector<NamedArray> export_parameters(const ParameterStore<T>& store, std::string_view prefix) {
  std::vector<NamedArray> out;
  for (const auto& p : store.all()) {
    if (p.name().compare(0, prefix.size(), prefix) != 0) continue;
    NamedArray a;
    a.name = p.name();
    a.shape = p.shape();
    a.values.assign(p.data().begin(), p.data().end());
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
std::vector<std::string> import_parameters(ParameterStore<T>& store,
                                           const std::vector<NamedArray>& arrays,
                                           bool require_all) {
  // Validate everything before writing anything.
  for (const auto& a : arrays) {
    const Tensor<T>* p = store.find(a.name);
    if (!p) throw TransferError("parameter '" + a.name + "' does not exist in the target model");
    if (p->shape() != a.shape) {
      throw TransferError("parameter '" + a.name + "' has shape " + to_string(a.shape) +
                          " in the checkpoint but " + to_string(p->shape()) + " in the model");
    }
  }
  if (require_all) {
    for (const auto& p : store.all()) {
      bool found = false;
      for (const auto& a : arrays) found = found || a.name == p.name();
      if (!found) throw TransferError("checkpoint lacks parameter '" + p.name() + "'");
    }
  }
  std::vector<std::string> written;
  for (const auto& a : arrays) {
    Tensor<T> p = store.at(a.name);
    auto dst = p.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a.values[i]);
    written.push_back(a.name);
  }
  return written;
}

template std::vector<NamedArray> export_parameters(const ParameterStore<float>&, std::string_view);
template std::vector<NamedArray> export_parameters(const ParameterStore<double>&, std::string_view);
template std::vector<std::string> import_parameters(ParameterStore<float>&,
                                                    const std::vector<NamedArray>&, bool);
template std::vector<std::string> import_parameters(ParameterStore<double>&,
                                                    const std::vector<NamedArray>&, bool);

}  // namespace voxmae

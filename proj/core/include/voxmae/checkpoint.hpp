#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voxmae/parameters.hpp"
#include "voxmae/tensor.hpp"

namespace voxmae {

enum class Provenance { MaePretrained, Scratch, Finetuned };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

/// Serialized named-parameter set with provenance metadata.
struct Checkpoint {
  std::vector<NamedArray> params;
  /// Hash of the full producing config.
  std::string fingerprint;
  /// Hash of the encoder-side architecture (encoder config + patch extents).
  std::string encoder_fingerprint;
  Provenance provenance = Provenance::Scratch;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();

  const NamedArray* find(std::string_view name) const;
};

/// 16 hex digits of FNV-1a over the canonical (sorted-key) JSON dump.
std::string fingerprint_of(const nlohmann::json& config);

/// Checkpoint file layout:
///
///   {"magic":"VOXMAE-CKPT","version":1,"dtype":"float32-le",...,
///    "params":[{"name":..,"shape":[..],"offset":bytes,"bytes":n},...]}\n
///   concatenated little-endian float32 payloads
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
/// Throws FormatError; shape/offset inconsistencies name the parameter.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies (as float32) every parameter whose name starts with `prefix`.
template <typename T>
std::vector<NamedArray> export_parameters(const ParameterStore<T>& store, std::string_view prefix = "");

/// Overwrites store parameters from `arrays`; names and shapes must match.
/// Returns the names written. Throws TransferError naming the first
/// incompatible parameter.
template <typename T>
std::vector<std::string> import_parameters(ParameterStore<T>& store,
                                           const std::vector<NamedArray>& arrays,
                                           bool require_all = true);

}  // namespace voxmae

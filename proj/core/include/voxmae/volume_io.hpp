#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxmae/phantom.hpp"
#include "voxmae/volume.hpp"

namespace voxmae {

/// Volume file layout:
///
///   {"magic":"VOXMAE1","version":1,"extents":[D,H,W],"spacing":[sd,sh,sw],
///    "dtype":"float32-le","labels":{"dtype":"uint8","num_classes":C}}\n
///   D*H*W little-endian float32 intensities
///   D*H*W uint8 class ids (only when "labels" is not null)
inline constexpr const char* kVolumeMagic = "VOXMAE1";
inline constexpr int kVolumeVersion = 1;

struct VolumeRecord {
  Volume volume;
  std::optional<LabelMap> labels;
};

std::vector<std::uint8_t> encode_volume(const Volume& v, const LabelMap* labels = nullptr);
/// Throws FormatError (MalformedHeader, UnknownVersion, LengthMismatch).
VolumeRecord decode_volume(const std::vector<std::uint8_t>& bytes);

void write_volume(const std::filesystem::path& path, const Volume& v,
                  const LabelMap* labels = nullptr);
VolumeRecord read_volume(const std::filesystem::path& path);

/// Writes dataset.json (config, seed, split membership) plus one volume file
/// per item into `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace voxmae

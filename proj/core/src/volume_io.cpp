#include "voxmae/volume_io.hpp"

#include <fstream>
#include <iterator>

#include "json.hpp"
#include "voxmae/bytes.hpp"
#include "voxmae/config.hpp"
#include "voxmae/error.hpp"

namespace voxmae {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxHeaderBytes = 1 << 16;

FormatError malformed(const std::string& what) {
  return FormatError(FormatError::Kind::MalformedHeader, "volume header: " + what);
}

}  // namespace

std::vector<std::uint8_t> encode_volume(const Volume& v, const LabelMap* labels) {
  if (v.voxels.size() != voxel_count(v.extents)) {
    throw DimensionError("encode_volume: voxel payload does not match extents " +
                         to_string(v.extents));
  }
  json header;
  header["magic"] = kVolumeMagic;
  header["version"] = kVolumeVersion;
  header["extents"] = v.extents;
  header["spacing"] = v.spacing;
  header["dtype"] = "float32-le";
  if (labels) {
    if (labels->extents != v.extents) {
      throw DimensionError("encode_volume: label extents " + to_string(labels->extents) +
                           " differ from volume extents " + to_string(v.extents));
    }
    labels->validate();
    header["labels"] = {{"dtype", "uint8"}, {"num_classes", labels->num_classes}};
  } else {
    header["labels"] = nullptr;
  }
  const std::string text = header.dump() + "\n";
  std::vector<std::uint8_t> out(text.begin(), text.end());
  out.reserve(out.size() + v.voxels.size() * (sizeof(float) + (labels ? 1 : 0)));
  for (float x : v.voxels) bytes::append_le(out, x);
  if (labels) out.insert(out.end(), labels->classes.begin(), labels->classes.end());
  return out;
}

VolumeRecord decode_volume(const std::vector<std::uint8_t>& data) {
  std::size_t newline = 0;
  while (newline < data.size() && newline < kMaxHeaderBytes && data[newline] != '\n') ++newline;
  if (newline >= data.size() || data[newline] != '\n') throw malformed("no header line");
  json header;
  try {
    header = json::parse(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(newline));
  } catch (const json::exception& e) {
    throw malformed(std::string("invalid JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("magic", "") != kVolumeMagic) {
    throw malformed("missing magic string VOXMAE1");
  }
  if (!header.contains("version") || !header["version"].is_number_integer()) {
    throw malformed("missing version");
  }
  if (header["version"].get<int>() != kVolumeVersion) {
    throw FormatError(FormatError::Kind::UnknownVersion,
                      "volume header: unknown format version " + header["version"].dump());
  }
  VolumeRecord record;
  std::optional<std::size_t> num_classes;
  try {
    record.volume.extents = header.at("extents").get<Extents>();
    record.volume.spacing = header.at("spacing").get<Spacing>();
    if (header.at("dtype").get<std::string>() != "float32-le") throw malformed("unsupported dtype");
    const json& labels = header.at("labels");
    if (!labels.is_null()) {
      if (labels.at("dtype").get<std::string>() != "uint8") throw malformed("unsupported label dtype");
      num_classes = labels.at("num_classes").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw malformed(e.what());
  }
  for (auto e : record.volume.extents) {
    if (e == 0) throw malformed("extents must be positive");
  }

  const std::size_t count = voxel_count(record.volume.extents);
  const std::size_t payload = data.size() - newline - 1;
  const std::size_t voxel_bytes = count * sizeof(float);
  const std::size_t expected = voxel_bytes + (num_classes ? count : 0);
  if (payload != expected) {
    std::string msg = "volume " + to_string(record.volume.extents) + ": expected " +
                      std::to_string(count) + " voxel values";
    if (payload < voxel_bytes) {
      msg += ", payload holds " + std::to_string(payload / sizeof(float));
      if (payload % sizeof(float)) msg += " (+" + std::to_string(payload % sizeof(float)) + " bytes)";
    } else if (num_classes) {
      msg += " and " + std::to_string(count) + " labels, found " +
             std::to_string(payload - voxel_bytes) + " label bytes";
    } else {
      msg += ", found " + std::to_string(payload - voxel_bytes) + " trailing bytes";
    }
    throw FormatError(FormatError::Kind::LengthMismatch, msg);
  }
  const std::uint8_t* p = data.data() + newline + 1;
  record.volume.voxels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    record.volume.voxels[i] = bytes::load_le<float>(p + i * sizeof(float));
  }
  if (num_classes) {
    LabelMap labels;
    labels.extents = record.volume.extents;
    labels.num_classes = *num_classes;
    labels.classes.assign(p + voxel_bytes, p + voxel_bytes + count);
    labels.validate();
    record.labels = std::move(labels);
  }
  return record;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_volume(const std::filesystem::path& path, const Volume& v, const LabelMap* labels) {
  write_file_bytes(path, encode_volume(v, labels));
}

VolumeRecord read_volume(const std::filesystem::path& path) {
  return decode_volume(read_file_bytes(path));
}

namespace {

std::string item_file(Split split, std::size_t i) {
  return std::string(to_string(split)) + "_" + std::to_string(i) + ".vox";
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  json manifest;
  manifest["format"] = "voxmae-dataset";
  manifest["version"] = 1;
  manifest["seed"] = ds.seed;
  manifest["phantom"] = ds.config;
  json splits = json::object();
  for (Split split : {Split::PretrainUnlabeled, Split::TrainLabeled, Split::Validation, Split::Test}) {
    json files = json::array();
    const auto& list = ds.indices(split);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& item = ds.items[list[i]];
      const std::string name = item_file(split, i);
      write_volume(dir / name, item.volume, item.labels ? &*item.labels : nullptr);
      files.push_back(name);
    }
    splits[to_string(split)] = files;
  }
  manifest["splits"] = splits;
  const std::string text = manifest.dump(2) + "\n";
  write_file_bytes(dir / "dataset.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto raw = read_file_bytes(dir / "dataset.json");
  Dataset ds;
  json manifest;
  try {
    manifest = json::parse(raw.begin(), raw.end());
    if (manifest.at("format").get<std::string>() != "voxmae-dataset") {
      throw FormatError(FormatError::Kind::MalformedHeader, "dataset.json: wrong format tag");
    }
    if (manifest.at("version").get<int>() != 1) {
      throw FormatError(FormatError::Kind::UnknownVersion, "dataset.json: unknown version");
    }
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.config = manifest.at("phantom").get<PhantomConfig>();
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::MalformedHeader,
                      "dataset.json in '" + dir.string() + "': " + e.what());
  }
  for (Split split : {Split::PretrainUnlabeled, Split::TrainLabeled, Split::Validation, Split::Test}) {
    const json& files = manifest.at("splits").at(to_string(split));
    for (const auto& f : files) {
      VolumeRecord rec = read_volume(dir / f.get<std::string>());
      if (split == Split::PretrainUnlabeled) rec.labels.reset();
      else if (!rec.labels) {
        throw DataError("dataset item '" + f.get<std::string>() + "' in split " +
                        to_string(split) + " has no labels");
      }
      ds.indices(split).push_back(ds.items.size());
      ds.items.push_back(DatasetItem{std::move(rec.volume), std::move(rec.labels)});
    }
  }
  ds.validate();
  return ds;
}

}  // namespace voxmae

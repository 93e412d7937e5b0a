#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "helpers.hpp"
#include "voxmae/config.hpp"
#include "voxmae/error.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/volume_io.hpp"

namespace {

using namespace voxmae;
namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("voxmae_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Phantom, SameSeedIsBitIdentical) {
  Rng a(5, "phantom"), b(5, "phantom");
  EXPECT_EQ(generate_phantom(PhantomConfig{}, a), generate_phantom(PhantomConfig{}, b));
}

TEST(Phantom, ZeroNoiseGivesClassMeans) {
  PhantomConfig c;
  c.noise_sigma = 0.0;
  Rng rng(6, "phantom");
  const auto [v, l] = generate_phantom(c, rng);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    EXPECT_EQ(v.voxels[i], static_cast<float>(c.class_means[l.classes[i]]));
  }
}

TEST(Phantom, EveryClassPresentAndLesionInsideOrgan) {
  const PhantomConfig c;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(s, "phantom/scan");
    const auto [v, l] = generate_phantom(c, rng);
    std::set<std::uint8_t> seen(l.classes.begin(), l.classes.end());
    EXPECT_EQ(seen.size(), 3u) << "seed " << s;

    // Lesion voxels form one 6-connected blob away from the border that
    // touches organ voxels.
    const auto& e = l.extents;
    std::vector<std::size_t> lesion;
    for (std::size_t i = 0; i < l.classes.size(); ++i)
      if (l.classes[i] == 2) lesion.push_back(i);
    std::vector<bool> reached(l.classes.size(), false);
    std::vector<std::size_t> frontier{lesion.front()};
    reached[lesion.front()] = true;
    std::size_t count = 0;
    bool touches_organ = false;
    while (!frontier.empty()) {
      const std::size_t i = frontier.back();
      frontier.pop_back();
      ++count;
      const std::size_t z = i / (e[1] * e[2]), y = (i / e[2]) % e[1], x = i % e[2];
      ASSERT_TRUE(z > 0 && y > 0 && x > 0 && z + 1 < e[0] && y + 1 < e[1] && x + 1 < e[2]);
      for (std::size_t n : {l.index(z - 1, y, x), l.index(z + 1, y, x), l.index(z, y - 1, x),
                            l.index(z, y + 1, x), l.index(z, y, x - 1), l.index(z, y, x + 1)}) {
        touches_organ = touches_organ || l.classes[n] == 1;
        if (l.classes[n] == 2 && !reached[n]) {
          reached[n] = true;
          frontier.push_back(n);
        }
      }
    }
    EXPECT_EQ(count, lesion.size()) << "seed " << s;
    EXPECT_TRUE(touches_organ) << "seed " << s;
  }
}

TEST(Phantom, InvalidConfigsAreRejected) {
  PhantomConfig c;
  c.organ_radius = {0.3, 0.6};
  EXPECT_THROW(c.validate(), ConfigError);
  c = PhantomConfig{};
  c.extents = {4, 4, 4};
  EXPECT_THROW(c.validate(), ConfigError);
  c = PhantomConfig{};
  c.class_means = {0.0, 1.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = PhantomConfig{};
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Dataset, SplitsAreDisjointAndPretrainIsUnlabeled) {
  const Dataset ds = generate_dataset(PhantomConfig{}, SplitCounts{3, 2, 1, 1}, 4);
  EXPECT_EQ(ds.items.size(), 7u);
  EXPECT_NO_THROW(ds.validate());
  for (std::size_t i : ds.indices(Split::PretrainUnlabeled)) EXPECT_FALSE(ds.items[i].labels);
  for (std::size_t i : ds.indices(Split::Test)) EXPECT_TRUE(ds.items[i].labels);
  Dataset bad = ds;
  bad.indices(Split::Test).push_back(bad.indices(Split::Validation)[0]);
  EXPECT_THROW(bad.validate(), DataError);
}

TEST(Dataset, ItemsDependOnlyOnSplitAndIndex) {
  const Dataset a = generate_dataset(PhantomConfig{}, SplitCounts{1, 2, 1, 1}, 4);
  const Dataset b = generate_dataset(PhantomConfig{}, SplitCounts{5, 3, 1, 1}, 4);
  const auto& ta = a.items[a.indices(Split::TrainLabeled)[1]];
  const auto& tb = b.items[b.indices(Split::TrainLabeled)[1]];
  EXPECT_EQ(ta.volume, tb.volume);
}

TEST(VolumeIo, RoundTripWithAndWithoutLabels) {
  Rng rng(7, "io");
  const auto [v, l] = generate_phantom(PhantomConfig{}, rng);
  const auto bytes = encode_volume(v, &l);
  const auto rec = decode_volume(bytes);
  EXPECT_EQ(rec.volume, v);
  ASSERT_TRUE(rec.labels);
  EXPECT_EQ(*rec.labels, l);
  EXPECT_EQ(encode_volume(rec.volume, &*rec.labels), bytes);
  const auto plain = decode_volume(encode_volume(v));
  EXPECT_FALSE(plain.labels);
}

FormatError::Kind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_volume(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError";
  return FormatError::Kind::MalformedHeader;
}

TEST(VolumeIo, CorruptionIsClassified) {
  Rng rng(8, "io");
  const Volume v = voxmae::testing::random_volume({4, 4, 4}, rng);
  auto bytes = encode_volume(v);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_EQ(decode_error(truncated), FormatError::Kind::LengthMismatch);
  auto extended = bytes;
  extended.push_back(0);
  EXPECT_EQ(decode_error(extended), FormatError::Kind::LengthMismatch);
  auto garbled = bytes;
  garbled[0] = '#';
  EXPECT_EQ(decode_error(garbled), FormatError::Kind::MalformedHeader);
  EXPECT_EQ(decode_error({}), FormatError::Kind::MalformedHeader);

  std::string text(bytes.begin(), bytes.end());
  const auto pos = text.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 11, "\"version\":9");
  EXPECT_EQ(decode_error(std::vector<std::uint8_t>(text.begin(), text.end())),
            FormatError::Kind::UnknownVersion);
}

TEST(VolumeIo, DatasetDirectoryRoundTrip) {
  const fs::path dir = scratch_dir("dataset");
  const Dataset ds = generate_dataset(PhantomConfig{}, SplitCounts{2, 2, 1, 1}, 9);
  write_dataset(dir, ds);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.items.size(), ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    EXPECT_EQ(back.items[i].volume, ds.items[i].volume);
    EXPECT_EQ(back.items[i].labels, ds.items[i].labels);
  }
  for (Split s : {Split::PretrainUnlabeled, Split::TrainLabeled, Split::Validation, Split::Test}) {
    EXPECT_EQ(back.indices(s), ds.indices(s));
  }
  EXPECT_EQ(back.config.extents, ds.config.extents);
  EXPECT_THROW(read_dataset(dir / "missing"), IoError);
}

TEST(Config, PartialObjectsKeepDefaultsAndUnknownKeysFail) {
  const auto c = nlohmann::json{{"noise_sigma", 0.5}}.get<PhantomConfig>();
  EXPECT_EQ(c.noise_sigma, 0.5);
  EXPECT_EQ(c.extents, PhantomConfig{}.extents);
  EXPECT_THROW((nlohmann::json{{"noise", 0.5}}.get<PhantomConfig>()), ConfigError);
  const PhantomConfig round = nlohmann::json(c).get<PhantomConfig>();
  EXPECT_EQ(round.noise_sigma, c.noise_sigma);
  EXPECT_EQ(round.organ_radius, c.organ_radius);
}

}  // namespace

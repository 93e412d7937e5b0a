#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>

#include "json.hpp"
#include "voxmae/mae.hpp"
#include "voxmae/optimizer.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/segmentation.hpp"
#include "voxmae/transformer.hpp"

/// JSON conversions for every configuration type. Readers accept partial
/// objects (missing keys keep their defaults) and reject unknown keys with
/// ConfigError.
namespace voxmae {

void to_json(nlohmann::json& j, const AttentionKind& k);
void from_json(const nlohmann::json& j, AttentionKind& k);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);

void to_json(nlohmann::json& j, const SplitCounts& c);
void from_json(const nlohmann::json& j, SplitCounts& c);

void to_json(nlohmann::json& j, const MaeConfig& c);
void from_json(const nlohmann::json& j, MaeConfig& c);

void to_json(nlohmann::json& j, const SegConfig& c);
void from_json(const nlohmann::json& j, SegConfig& c);

/// Throws ConfigError naming `context` and the first key not in `allowed`.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const std::string& context);

/// Parses a JSON file; IoError when unreadable, ConfigError when malformed.
nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace voxmae

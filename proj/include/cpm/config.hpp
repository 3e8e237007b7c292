// JSON configuration for descriptors, search schedule, similarity and consistency voting.
#pragma once

#include <filesystem>

#include "json.hpp"

#include "cpm/consistent.hpp"
#include "cpm/search.hpp"

namespace cpm {

struct MatcherConfig {
    SearchConfig search;
    ConsistentConfig consistent;
};

// Plain point matching for variant 1 without weighting, consistent point matching otherwise.
MatchResult run_matcher(const Volume &source, const Vec3 &q, const Volume &target, const MatcherConfig &config);

nlohmann::json to_json(const DescriptorSpec &spec);
DescriptorSpec descriptor_spec_from_json(const nlohmann::json &j);

nlohmann::json to_json(const LevelSchedule &s);
LevelSchedule level_schedule_from_json(const nlohmann::json &j);

nlohmann::json to_json(const SimilarityParams &p);
SimilarityParams similarity_params_from_json(const nlohmann::json &j);

nlohmann::json to_json(const ConsistentConfig &c);
ConsistentConfig consistent_config_from_json(const nlohmann::json &j);

nlohmann::json to_json(const MatcherConfig &c);
// Missing sections and keys keep their defaults. Throws std::invalid_argument on bad values.
MatcherConfig matcher_config_from_json(const nlohmann::json &j);
MatcherConfig load_matcher_config(const std::filesystem::path &path);

nlohmann::json vec3_to_json(const Vec3 &v);
Vec3 vec3_from_json(const nlohmann::json &j);

nlohmann::json to_json(const MatchResult &r, bool include_trace);

} // namespace cpm

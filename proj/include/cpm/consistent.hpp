// Consistency-weighted point matching: neighbouring queries vote for the target location,
// each vote weighted by how well its round trip (source -> target -> source) returns.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cpm/search.hpp"

namespace cpm {

enum class MeanMode { Plain, Weighted };

std::string to_string(MeanMode m);
MeanMode mean_mode_from_string(const std::string &name);

struct ConsistentConfig {
    int variant = 13; // 1, 3, 7 or 13 votes per level
    int top_k = 5;
    MeanMode mean = MeanMode::Plain;
    // Unset: weighting on for variants 3/7/13, off for variant 1 (plain point matching).
    std::optional<bool> weighting;
    // Re-score the consolidated centre at the last level instead of reporting the best vote weight.
    bool rescore_center = false;

    void validate() const;
    bool weighting_enabled() const { return weighting.value_or(variant != 1); }
};

// Neighbour offsets for a level with candidate step s:
//   13: 0, +-1.5s and +-0.5s along each axis;  7: 0, +-0.5s along each axis;
//    3: 0, +-0.5s along x;                       1: 0.
std::vector<Vec3> neighbor_offsets(int variant, double step);

// exp(-d / s0) * sim
double consistency_weight(double distance_mm, double s0, double similarity);

// Throws SearchError when q is outside the source or a search region is empty.
MatchResult consistent_point_matching(const Volume &source, const Vec3 &q, const Volume &target,
                                      const SearchConfig &config, const ConsistentConfig &cc);

// Backward single-level search from `forward` (target) into the source, centred on q; returns |q - q'|.
double consistency_distance(const Volume &source, const Vec3 &q, const Volume &target, const Vec3 &forward, int level,
                            const SearchConfig &config);

} // namespace cpm

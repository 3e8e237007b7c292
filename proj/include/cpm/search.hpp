// Coarse-to-fine descriptor search ("point matching") between two volumes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpm/descriptor.hpp"
#include "cpm/geometry.hpp"
#include "cpm/similarity.hpp"
#include "cpm/volume.hpp"

namespace cpm {

struct SearchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// "algorithm": step(l) = s0 * 2^-l  -> 8, 4, 2, 1, 0.5 mm for s0 = 16.
// "text":      step(l) = s0 * 2^(1-l) -> 16, 8, 4, 2, 1 mm.
enum class StepMode { Algorithm, Text };

std::string to_string(StepMode m);
StepMode step_mode_from_string(const std::string &name);

struct LevelSchedule {
    double s0 = 16.0;
    int levels = 5;
    StepMode step_mode = StepMode::Algorithm;
    // Descriptor offsets are multiplied by scale(l) = first_level_scale * 2^-(l-1).
    double first_level_scale = 1.0;
    // Levels after the first search a cube of half-width region_steps * step(l) around the centre.
    double region_steps = 4.0;
    // Candidate pitch for the whole-image first level; 0 uses step(1).
    double level1_pitch_mm = 0.0;

    void validate() const;

    double step(int level) const;
    double scale(int level) const;
    double pitch(int level) const;
    // +inf for level 1 (whole image).
    double region_halfwidth(int level) const;
};

struct SearchConfig {
    DescriptorSpec spec = DescriptorSpec::default_spec();
    LevelSchedule schedule;
    SimilarityParams similarity;
};

struct CandidateScore {
    Vec3 point;
    double similarity = 0.0;
};

// Regular lattice centre + pitch * (kx, ky, kz) over a box of integer indices.
// Candidates are enumerated z-major, so a smaller index is a lexicographically smaller (z, y, x).
struct CandidateGrid {
    Vec3 center;
    double pitch = 1.0;
    std::array<int64_t, 3> lo{};
    std::array<int64_t, 3> hi{}; // inclusive

    size_t size() const;
    Vec3 point(size_t index) const;
};

// Candidates for one level: the whole target box at level 1, otherwise the region around
// `center` clipped to the target box expanded by the first-level pitch.
// Throws SearchError when no candidate remains.
CandidateGrid candidate_grid(const Volume &target, const Vec3 &center, int level, const LevelSchedule &schedule);

struct VoteRecord {
    Vec3 offset;
    Vec3 forward;    // match of query + offset in the target
    Vec3 round_trip; // match of `forward` back in the source (NaN when not measured)
    Vec3 estimate;   // forward - offset
    double distance = std::numeric_limits<double>::quiet_NaN();
    double similarity = 0.0;
    double weight = 0.0;
    bool selected = false;
};

struct LevelTrace {
    int level = 0;
    double step = 0.0;
    double scale = 0.0;
    Vec3 center_in;
    Vec3 center_out;
    double best_similarity = 0.0;
    size_t candidates = 0;
    size_t forward_searches = 0;
    size_t backward_searches = 0;
    std::vector<VoteRecord> votes; // empty for plain point matching
};

struct MatchResult {
    Vec3 point;
    double similarity = 0.0;
    double mean_consistency_mm = std::numeric_limits<double>::quiet_NaN();
    std::vector<LevelTrace> trace;
    double seconds = 0.0;
};

// Scores every candidate of one level against several query points sampled from `query_volume`,
// sampling each candidate descriptor once. Returns one best candidate per query; ties go to the
// lexicographically smallest (z, y, x) candidate.
std::vector<CandidateScore> level_search_batch(const Volume &query_volume, std::span<const Vec3> query_points,
                                               const Volume &target, const Vec3 &center, int level,
                                               const SearchConfig &config);

CandidateScore level_search(const Volume &query_volume, const Vec3 &query_point, const Volume &target,
                            const Vec3 &center, int level, const SearchConfig &config);

// Total level searches (queries scored) issued by this process; for instrumentation.
uint64_t level_search_count();

// Prints a one-time warning when both volumes carry known but different frame labels.
void check_frame_labels(const Volume &source, const Volume &target);

// Runs all levels, re-centring each on the previous best. Throws SearchError when q is outside source.
MatchResult point_matching(const Volume &source, const Vec3 &q, const Volume &target, const SearchConfig &config);

} // namespace cpm

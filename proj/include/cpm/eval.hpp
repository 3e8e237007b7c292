// Evaluation harness: annotated point-pair manifests, FROC curves, distance and timing summaries.
#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cpm/config.hpp"

namespace cpm {

struct PairEntry {
    std::string id;
    std::filesystem::path source;
    std::filesystem::path target;
    Vec3 query_mm;
    Vec3 truth_mm;
    std::string tag;
};

struct PairManifest {
    std::vector<PairEntry> entries;

    // JSON lines: {"id", "source", "target", "query_mm": [x,y,z], "truth_mm": [x,y,z], "tag"}.
    // Relative paths resolve against the manifest's directory; a missing id becomes the line index.
    static PairManifest load_jsonl(const std::filesystem::path &path);
    void save_jsonl(const std::filesystem::path &path) const;
};

struct FrocCurve {
    std::vector<double> thresholds;
    std::vector<double> sensitivity;
    size_t n = 0;
};

// 0 to 20 mm in 0.5 mm steps.
std::vector<double> default_thresholds();

// sensitivity(t) = |{d <= t}| / n; +inf marks a failed pair. Throws std::invalid_argument on
// empty or negative input.
FrocCurve froc(std::span<const double> distances, std::span<const double> thresholds);

double sensitivity_at(std::span<const double> distances, double threshold);

enum class PairStatus { Ok, LoadFailed, MatchFailed };

std::string to_string(PairStatus s);

struct EvalRecord {
    std::string id;
    std::string tag;
    PairStatus status = PairStatus::Ok;
    Vec3 estimate_mm;
    double distance_mm = std::numeric_limits<double>::infinity();
    double seconds = 0.0;
    double similarity = 0.0;
    std::string error;
};

struct EvalSummary {
    size_t n = 0;
    size_t failed = 0;
    double mean_mm = 0.0;   // over successful pairs; NaN when none succeeded
    double median_mm = 0.0; // over successful pairs; NaN when none succeeded
    double sens_at_10mm = 0.0;
    double mean_seconds = 0.0;
};

struct EvalOptions {
    size_t workers = 1;
    bool record_timing = true;
    std::vector<double> thresholds = default_thresholds();
};

struct EvalReport {
    std::vector<EvalRecord> records; // manifest order
    FrocCurve curve;
    EvalSummary summary;
};

EvalSummary summarize(std::span<const EvalRecord> records);

// Failed loads or matches are recorded and counted as misses; the run continues.
EvalReport run_eval(const PairManifest &manifest, const MatcherConfig &config, const EvalOptions &options = {});

// Writes froc.csv, pairs.csv and summary.json into out_dir (created if needed). With
// record_timing off the seconds column is left empty so reruns are byte-identical.
void write_eval_outputs(const EvalReport &report, const std::filesystem::path &out_dir, const MatcherConfig &config,
                        bool record_timing);

struct CohortEntry {
    std::string id;
    std::filesystem::path volume;
    Vec3 truth_mm;
};

// JSON lines: {"id", "volume", "truth_mm"}.
std::vector<CohortEntry> load_cohort_jsonl(const std::filesystem::path &path);

// Matches one template landmark into every cohort volume.
EvalReport landmark_cohort(const std::filesystem::path &template_volume, const Vec3 &template_point,
                           std::span<const CohortEntry> cohort, const MatcherConfig &config,
                           const EvalOptions &options = {});

// Maps a tracking-annotation CSV onto a manifest. Column names are configurable so that published
// lesion-tracking tables can be ingested without reformatting.
struct CsvColumns {
    std::string id = "id";
    std::string source = "source_path";
    std::string target = "target_path";
    std::array<std::string, 3> query = {"query_x", "query_y", "query_z"};
    std::array<std::string, 3> truth = {"truth_x", "truth_y", "truth_z"};
    std::string tag = "tag";
    // Coordinates are voxel indices; converted to mm through each volume's header.
    bool voxel_coordinates = false;
    // Prefix for relative volume paths.
    std::filesystem::path base_dir;
};

PairManifest manifest_from_csv(const std::filesystem::path &csv_path, const CsvColumns &columns);

} // namespace cpm

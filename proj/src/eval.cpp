#include "cpm/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace cpm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path &base, const fs::path &p) { return p.is_absolute() || base.empty() ? p : base / p; }

std::string format_double(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

} // namespace

PairManifest PairManifest::load_jsonl(const fs::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::invalid_argument("cannot open manifest " + path.string());
    }
    const fs::path base = path.parent_path();
    PairManifest m;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            PairEntry e;
            e.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                    : std::to_string(m.entries.size());
            e.source = resolve(base, j.at("source").get<std::string>());
            e.target = resolve(base, j.at("target").get<std::string>());
            e.query_mm = vec3_from_json(j.at("query_mm"));
            e.truth_mm = vec3_from_json(j.at("truth_mm"));
            e.tag = j.value("tag", std::string());
            m.entries.push_back(std::move(e));
        } catch (const std::exception &ex) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return m;
}

void PairManifest::save_jsonl(const fs::path &path) const {
    std::ofstream os(path);
    for (const PairEntry &e : entries) {
        json j = {{"id", e.id},
                  {"source", e.source.string()},
                  {"target", e.target.string()},
                  {"query_mm", vec3_to_json(e.query_mm)},
                  {"truth_mm", vec3_to_json(e.truth_mm)}};
        if (!e.tag.empty()) {
            j["tag"] = e.tag;
        }
        os << j.dump() << '\n';
    }
    if (!os) {
        throw std::runtime_error("cannot write manifest " + path.string());
    }
}

std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 40; ++i) {
        t.push_back(0.5 * i);
    }
    return t;
}

double sensitivity_at(std::span<const double> distances, double threshold) {
    if (distances.empty()) {
        throw std::invalid_argument("no distances");
    }
    const auto hits = std::count_if(distances.begin(), distances.end(), [&](double d) { return d <= threshold; });
    return static_cast<double>(hits) / static_cast<double>(distances.size());
}

FrocCurve froc(std::span<const double> distances, std::span<const double> thresholds) {
    if (distances.empty()) {
        throw std::invalid_argument("FROC needs at least one distance");
    }
    if (std::any_of(distances.begin(), distances.end(), [](double d) { return !(d >= 0.0); })) {
        throw std::invalid_argument("distances must be non-negative");
    }
    std::vector<double> sorted(distances.begin(), distances.end());
    std::sort(sorted.begin(), sorted.end());
    FrocCurve c;
    c.n = sorted.size();
    c.thresholds.assign(thresholds.begin(), thresholds.end());
    for (double t : thresholds) {
        const auto hits = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        c.sensitivity.push_back(static_cast<double>(hits) / static_cast<double>(c.n));
    }
    return c;
}

std::string to_string(PairStatus s) {
    switch (s) {
    case PairStatus::Ok: return "ok";
    case PairStatus::LoadFailed: return "load_failed";
    case PairStatus::MatchFailed: return "match_failed";
    }
    return "ok";
}

EvalSummary summarize(std::span<const EvalRecord> records) {
    EvalSummary s;
    s.n = records.size();
    std::vector<double> ok;
    double seconds = 0.0;
    for (const EvalRecord &r : records) {
        if (r.status == PairStatus::Ok) {
            ok.push_back(r.distance_mm);
            seconds += r.seconds;
        } else {
            ++s.failed;
        }
    }
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    if (ok.empty()) {
        s.mean_mm = s.median_mm = nan;
    } else {
        s.mean_mm = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
        std::sort(ok.begin(), ok.end());
        const size_t m = ok.size() / 2;
        s.median_mm = ok.size() % 2 == 1 ? ok[m] : 0.5 * (ok[m - 1] + ok[m]);
        s.mean_seconds = seconds / static_cast<double>(ok.size());
    }
    if (s.n > 0) {
        size_t hits = 0;
        for (const EvalRecord &r : records) {
            hits += r.distance_mm <= 10.0 ? 1 : 0;
        }
        s.sens_at_10mm = static_cast<double>(hits) / static_cast<double>(s.n);
    }
    return s;
}

namespace {

// Shares loaded volumes between concurrently evaluated pairs; a volume is dropped once no pair holds it.
class VolumeCache {
  public:
    std::shared_ptr<const Volume> get(const fs::path &path) {
        std::shared_ptr<Slot> slot;
        {
            std::lock_guard lock(mu_);
            auto &weak = slots_[path.string()];
            slot = weak.lock();
            if (!slot) {
                slot = std::make_shared<Slot>();
                weak = slot;
            }
        }
        std::call_once(slot->once, [&] {
            try {
                slot->volume = std::make_shared<const Volume>(load_volume(path));
            } catch (const std::exception &e) {
                slot->error = e.what();
            }
        });
        if (!slot->volume) {
            throw VolumeError(slot->error);
        }
        // Aliasing pointer keeps the slot (and its weak cache entry) alive while the volume is used.
        return std::shared_ptr<const Volume>(slot, slot->volume.get());
    }

  private:
    struct Slot {
        std::once_flag once;
        std::shared_ptr<const Volume> volume;
        std::string error;
    };
    std::mutex mu_;
    std::map<std::string, std::weak_ptr<Slot>> slots_;
};

EvalRecord evaluate_entry(const PairEntry &e, const MatcherConfig &config, VolumeCache &cache) {
    EvalRecord r;
    r.id = e.id;
    r.tag = e.tag;
    std::shared_ptr<const Volume> source, target;
    try {
        source = cache.get(e.source);
        target = cache.get(e.target);
    } catch (const std::exception &ex) {
        r.status = PairStatus::LoadFailed;
        r.error = ex.what();
        return r;
    }
    try {
        const MatchResult m = run_matcher(*source, e.query_mm, *target, config);
        r.estimate_mm = m.point;
        r.distance_mm = distance(m.point, e.truth_mm);
        r.seconds = m.seconds;
        r.similarity = m.similarity;
    } catch (const std::exception &ex) {
        r.status = PairStatus::MatchFailed;
        r.error = ex.what();
    }
    return r;
}

} // namespace

EvalReport run_eval(const PairManifest &manifest, const MatcherConfig &config, const EvalOptions &options) {
    if (manifest.entries.empty()) {
        throw std::invalid_argument("manifest is empty");
    }
    EvalReport report;
    report.records.resize(manifest.entries.size());
    VolumeCache cache;
    std::atomic<size_t> next{0};
    auto work = [&] {
        for (size_t i = next.fetch_add(1); i < manifest.entries.size(); i = next.fetch_add(1)) {
            report.records[i] = evaluate_entry(manifest.entries[i], config, cache);
        }
    };
    const size_t workers = std::clamp<size_t>(options.workers, 1, manifest.entries.size());
    std::vector<std::thread> threads;
    for (size_t w = 1; w < workers; ++w) {
        threads.emplace_back(work);
    }
    work();
    for (auto &t : threads) {
        t.join();
    }
    if (!options.record_timing) {
        for (auto &r : report.records) {
            r.seconds = 0.0;
        }
    }
    std::vector<double> distances;
    for (const auto &r : report.records) {
        distances.push_back(r.distance_mm);
    }
    report.curve = froc(distances, options.thresholds);
    report.summary = summarize(report.records);
    return report;
}

void write_eval_outputs(const EvalReport &report, const fs::path &out_dir, const MatcherConfig &config,
                        bool record_timing) {
    fs::create_directories(out_dir);
    {
        std::ofstream os(out_dir / "froc.csv");
        os << "threshold,sensitivity\n";
        for (size_t i = 0; i < report.curve.thresholds.size(); ++i) {
            os << format_double(report.curve.thresholds[i], 2) << ',' << format_double(report.curve.sensitivity[i], 6)
               << '\n';
        }
    }
    {
        std::ofstream os(out_dir / "pairs.csv");
        os << "id,distance_mm,seconds,status\n";
        for (const EvalRecord &r : report.records) {
            os << r.id << ',' << (r.status == PairStatus::Ok ? format_double(r.distance_mm, 6) : std::string()) << ','
               << (record_timing && r.status == PairStatus::Ok ? format_double(r.seconds, 6) : std::string()) << ','
               << to_string(r.status) << '\n';
        }
    }
    {
        auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
        json failures = json::array();
        for (const EvalRecord &r : report.records) {
            if (r.status != PairStatus::Ok) {
                failures.push_back({{"id", r.id}, {"status", to_string(r.status)}, {"error", r.error}});
            }
        }
        const EvalSummary &s = report.summary;
        json j = {{"n", s.n},
                  {"failed", s.failed},
                  {"mean_mm", num(s.mean_mm)},
                  {"median_mm", num(s.median_mm)},
                  {"sens_at_10mm", s.sens_at_10mm},
                  {"mean_seconds", record_timing ? num(s.mean_seconds) : json(nullptr)},
                  {"failures", failures},
                  {"config", to_json(config)}};
        std::ofstream os(out_dir / "summary.json");
        os << j.dump(2) << '\n';
    }
}

std::vector<CohortEntry> load_cohort_jsonl(const fs::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::invalid_argument("cannot open cohort manifest " + path.string());
    }
    const fs::path base = path.parent_path();
    std::vector<CohortEntry> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            CohortEntry e;
            e.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                    : std::to_string(out.size());
            e.volume = resolve(base, j.at("volume").get<std::string>());
            e.truth_mm = vec3_from_json(j.at("truth_mm"));
            out.push_back(std::move(e));
        } catch (const std::exception &ex) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

EvalReport landmark_cohort(const fs::path &template_volume, const Vec3 &template_point,
                           std::span<const CohortEntry> cohort, const MatcherConfig &config,
                           const EvalOptions &options) {
    {
        const Volume t = load_volume(template_volume);
        if (!t.contains(template_point)) {
            throw SearchError("template point lies outside the template volume");
        }
    }
    PairManifest m;
    for (const CohortEntry &c : cohort) {
        m.entries.push_back({c.id, template_volume, c.volume, template_point, c.truth_mm, "landmark"});
    }
    return run_eval(m, config, options);
}

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

PairManifest manifest_from_csv(const fs::path &csv_path, const CsvColumns &columns) {
    std::ifstream is(csv_path);
    if (!is) {
        throw std::invalid_argument("cannot open " + csv_path.string());
    }
    std::string line;
    if (!std::getline(is, line)) {
        throw std::invalid_argument("empty CSV " + csv_path.string());
    }
    const std::vector<std::string> header = split_csv_line(line);
    auto column = [&](const std::string &name, bool required) -> long {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) {
                throw std::invalid_argument("CSV is missing column '" + name + "'");
            }
            return -1;
        }
        return it - header.begin();
    };
    const long id_col = column(columns.id, false);
    const long tag_col = column(columns.tag, false);
    const long src_col = column(columns.source, true);
    const long tgt_col = column(columns.target, true);
    std::array<long, 3> q_cols{}, t_cols{};
    for (int a = 0; a < 3; ++a) {
        q_cols[a] = column(columns.query[a], true);
        t_cols[a] = column(columns.truth[a], true);
    }

    std::map<std::string, WorldFrame> frames;
    auto to_mm = [&](const fs::path &volume, const Vec3 &v) {
        if (!columns.voxel_coordinates) {
            return v;
        }
        auto it = frames.find(volume.string());
        if (it == frames.end()) {
            it = frames.emplace(volume.string(), load_volume(volume).frame()).first;
        }
        return it->second.voxel_to_world(v);
    };

    PairManifest m;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const std::vector<std::string> f = split_csv_line(line);
        auto field = [&](long c) -> const std::string & {
            if (c < 0 || static_cast<size_t>(c) >= f.size()) {
                throw std::invalid_argument(csv_path.string() + ":" + std::to_string(lineno) + ": short row");
            }
            return f[static_cast<size_t>(c)];
        };
        PairEntry e;
        e.id = id_col >= 0 ? field(id_col) : std::to_string(m.entries.size());
        e.tag = tag_col >= 0 ? field(tag_col) : std::string();
        e.source = resolve(columns.base_dir, field(src_col));
        e.target = resolve(columns.base_dir, field(tgt_col));
        Vec3 q, t;
        for (int a = 0; a < 3; ++a) {
            q[a] = std::stod(field(q_cols[a]));
            t[a] = std::stod(field(t_cols[a]));
        }
        e.query_mm = to_mm(e.source, q);
        e.truth_mm = to_mm(e.target, t);
        m.entries.push_back(std::move(e));
    }
    return m;
}

} // namespace cpm

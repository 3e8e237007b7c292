#include "cpm/search.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>

#include "cpm/parallel.hpp"

namespace cpm {

std::string to_string(StepMode m) { return m == StepMode::Algorithm ? "algorithm" : "text"; }

StepMode step_mode_from_string(const std::string &name) {
    if (name == "algorithm") return StepMode::Algorithm;
    if (name == "text") return StepMode::Text;
    throw std::invalid_argument("unknown step mode '" + name + "'");
}

void LevelSchedule::validate() const {
    if (!(s0 > 0.0) || levels < 1 || levels > 12 || !(first_level_scale > 0.0) || !(region_steps >= 0.0) ||
        !(level1_pitch_mm >= 0.0)) {
        throw std::invalid_argument("invalid level schedule");
    }
}

double LevelSchedule::step(int level) const {
    const int e = step_mode == StepMode::Algorithm ? level : level - 1;
    return std::ldexp(s0, -e);
}

double LevelSchedule::scale(int level) const { return std::ldexp(first_level_scale, -(level - 1)); }

double LevelSchedule::pitch(int level) const {
    return (level == 1 && level1_pitch_mm > 0.0) ? level1_pitch_mm : step(level);
}

double LevelSchedule::region_halfwidth(int level) const {
    return level == 1 ? std::numeric_limits<double>::infinity() : region_steps * step(level);
}

size_t CandidateGrid::size() const {
    size_t n = 1;
    for (int a = 0; a < 3; ++a) {
        n *= static_cast<size_t>(hi[a] - lo[a] + 1);
    }
    return n;
}

Vec3 CandidateGrid::point(size_t index) const {
    const auto nx = static_cast<size_t>(hi[0] - lo[0] + 1);
    const auto ny = static_cast<size_t>(hi[1] - lo[1] + 1);
    const auto kx = lo[0] + static_cast<int64_t>(index % nx);
    const auto ky = lo[1] + static_cast<int64_t>((index / nx) % ny);
    const auto kz = lo[2] + static_cast<int64_t>(index / (nx * ny));
    return {center.x + static_cast<double>(kx) * pitch, center.y + static_cast<double>(ky) * pitch,
            center.z + static_cast<double>(kz) * pitch};
}

CandidateGrid candidate_grid(const Volume &target, const Vec3 &center, int level, const LevelSchedule &schedule) {
    if (level < 1 || level > schedule.levels) {
        throw SearchError("search level out of range");
    }
    if (!center.finite()) {
        throw SearchError("invalid search region: non-finite centre");
    }
    const Box box = target.bounds();
    const double pitch = schedule.pitch(level);
    const double margin = level == 1 ? 0.0 : schedule.pitch(1);
    const double half = schedule.region_halfwidth(level);
    CandidateGrid g{center, pitch, {}, {}};
    for (int a = 0; a < 3; ++a) {
        double lo = (box.lo[a] - margin - center[a]) / pitch;
        double hi = (box.hi[a] + margin - center[a]) / pitch;
        if (std::isfinite(half)) {
            const double r = std::floor(half / pitch + 1e-9);
            lo = std::max(lo, -r);
            hi = std::min(hi, r);
        }
        lo = std::ceil(lo);
        hi = std::floor(hi);
        if (!(lo <= hi) || std::abs(lo) > 1e9 || std::abs(hi) > 1e9) {
            throw SearchError("invalid search region: no candidates inside the target");
        }
        g.lo[a] = static_cast<int64_t>(lo);
        g.hi[a] = static_cast<int64_t>(hi);
    }
    return g;
}

namespace {

std::atomic<uint64_t> g_level_searches{0};

struct Best {
    double score = -1.0;
    size_t index = 0;

    void offer(double s, size_t i) {
        if (s > score || (s == score && i < index)) {
            score = s;
            index = i;
        }
    }
};

} // namespace

uint64_t level_search_count() { return g_level_searches.load(); }

std::vector<CandidateScore> level_search_batch(const Volume &query_volume, std::span<const Vec3> query_points,
                                               const Volume &target, const Vec3 &center, int level,
                                               const SearchConfig &config) {
    config.schedule.validate();
    const CandidateGrid grid = candidate_grid(target, center, level, config.schedule);
    const double scale = config.schedule.scale(level);
    const DescriptorSampler query_sampler(config.spec, query_volume.frame(), scale);
    const DescriptorSampler target_sampler(config.spec, target.frame(), scale);
    const size_t len = config.spec.total_length();
    const Scorer scorer(len, config.similarity);

    std::vector<PreparedDescriptor> queries(query_points.size());
    {
        std::vector<Intensity> buf(len);
        for (size_t q = 0; q < query_points.size(); ++q) {
            query_sampler.sample_raw(query_volume, query_points[q], buf);
            scorer.prepare(buf, queries[q]);
        }
    }

    const size_t n = grid.size();
    constexpr size_t kChunk = 64;
    const size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<std::vector<Best>> chunk_best(chunks, std::vector<Best>(queries.size()));
    compute_pool().run(chunks, [&](size_t c) {
        std::vector<Intensity> buf(len);
        PreparedDescriptor cand;
        auto &best = chunk_best[c];
        const size_t end = std::min(n, (c + 1) * kChunk);
        for (size_t i = c * kChunk; i < end; ++i) {
            target_sampler.sample_raw(target, grid.point(i), buf);
            scorer.prepare(buf, cand);
            for (size_t q = 0; q < queries.size(); ++q) {
                // Candidates arrive in index order, so one that can at most tie the current best loses.
                const double cos = scorer.cosine(queries[q], cand);
                if (scorer.upper_bound(cos) <= best[q].score) {
                    continue;
                }
                best[q].offer(scorer.combined_with_cosine(queries[q], cand, cos), i);
            }
        }
    });

    std::vector<CandidateScore> out(queries.size());
    for (size_t q = 0; q < queries.size(); ++q) {
        Best b;
        for (const auto &cb : chunk_best) {
            b.offer(cb[q].score, cb[q].index);
        }
        out[q] = {grid.point(b.index), b.score};
    }
    g_level_searches.fetch_add(queries.size());
    return out;
}

CandidateScore level_search(const Volume &query_volume, const Vec3 &query_point, const Volume &target,
                            const Vec3 &center, int level, const SearchConfig &config) {
    return level_search_batch(query_volume, std::span<const Vec3>(&query_point, 1), target, center, level,
                              config)[0];
}

void check_frame_labels(const Volume &source, const Volume &target) {
    const FrameLabel a = source.frame().label, b = target.frame().label;
    static std::atomic<bool> warned{false};
    if (a != b && a != FrameLabel::Unknown && b != FrameLabel::Unknown && !warned.exchange(true)) {
        std::cerr << "warning: source frame is " << to_string(a) << " but target frame is " << to_string(b)
                  << "; coordinates are used as stored\n";
    }
}

MatchResult point_matching(const Volume &source, const Vec3 &q, const Volume &target, const SearchConfig &config) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!q.finite() || !source.contains(q)) {
        throw SearchError("query point lies outside the source volume");
    }
    check_frame_labels(source, target);
    config.schedule.validate();
    MatchResult r;
    Vec3 center = q;
    for (int level = 1; level <= config.schedule.levels; ++level) {
        LevelTrace t;
        t.level = level;
        t.step = config.schedule.step(level);
        t.scale = config.schedule.scale(level);
        t.center_in = center;
        t.candidates = candidate_grid(target, center, level, config.schedule).size();
        const CandidateScore best = level_search(source, q, target, center, level, config);
        t.forward_searches = 1;
        t.best_similarity = best.similarity;
        t.center_out = best.point;
        center = best.point;
        r.similarity = best.similarity;
        r.trace.push_back(std::move(t));
    }
    r.point = center;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

} // namespace cpm

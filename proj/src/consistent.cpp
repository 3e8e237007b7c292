#include "cpm/consistent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace cpm {

std::string to_string(MeanMode m) { return m == MeanMode::Plain ? "plain" : "weighted"; }

MeanMode mean_mode_from_string(const std::string &name) {
    if (name == "plain") return MeanMode::Plain;
    if (name == "weighted") return MeanMode::Weighted;
    throw std::invalid_argument("unknown mean mode '" + name + "'");
}

void ConsistentConfig::validate() const {
    if (variant != 1 && variant != 3 && variant != 7 && variant != 13) {
        throw std::invalid_argument("variant must be one of 1, 3, 7, 13");
    }
    if (top_k < 1) {
        throw std::invalid_argument("top_k must be positive");
    }
}

std::vector<Vec3> neighbor_offsets(int variant, double step) {
    const double near = 0.5 * step;
    const double far = 1.5 * step;
    switch (variant) {
    case 1: return {Vec3{}};
    case 3: return {Vec3{}, {near, 0, 0}, {-near, 0, 0}};
    case 7: return {Vec3{}, {near, 0, 0}, {-near, 0, 0}, {0, near, 0}, {0, -near, 0}, {0, 0, near}, {0, 0, -near}};
    case 13:
        return {Vec3{},        {far, 0, 0},  {-far, 0, 0}, {near, 0, 0}, {-near, 0, 0}, {0, far, 0}, {0, -far, 0},
                {0, near, 0},  {0, -near, 0}, {0, 0, far},  {0, 0, -far}, {0, 0, near},  {0, 0, -near}};
    default: break;
    }
    throw std::invalid_argument("variant must be one of 1, 3, 7, 13");
}

double consistency_weight(double distance_mm, double s0, double similarity) {
    return std::exp(-distance_mm / s0) * similarity;
}

MatchResult consistent_point_matching(const Volume &source, const Vec3 &q, const Volume &target,
                                      const SearchConfig &config, const ConsistentConfig &cc) {
    const auto t0 = std::chrono::steady_clock::now();
    cc.validate();
    config.schedule.validate();
    if (!q.finite() || !source.contains(q)) {
        throw SearchError("query point lies outside the source volume");
    }
    check_frame_labels(source, target);
    const bool weighting = cc.weighting_enabled();
    const double s0 = config.schedule.s0;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();

    MatchResult r;
    Vec3 center = q;
    for (int level = 1; level <= config.schedule.levels; ++level) {
        LevelTrace t;
        t.level = level;
        t.step = config.schedule.step(level);
        t.scale = config.schedule.scale(level);
        t.center_in = center;
        t.candidates = candidate_grid(target, center, level, config.schedule).size();

        const std::vector<Vec3> offsets = neighbor_offsets(cc.variant, t.step);
        std::vector<Vec3> queries;
        queries.reserve(offsets.size());
        for (const Vec3 &o : offsets) {
            queries.push_back(q + o);
        }
        const std::vector<CandidateScore> fwd = level_search_batch(source, queries, target, center, level, config);
        t.forward_searches = fwd.size();

        std::vector<CandidateScore> back;
        if (weighting) {
            std::vector<Vec3> found;
            found.reserve(fwd.size());
            for (const auto &f : fwd) {
                found.push_back(f.point);
            }
            back = level_search_batch(target, found, source, q, level, config);
            t.backward_searches = back.size();
        }

        t.votes.resize(offsets.size());
        for (size_t i = 0; i < offsets.size(); ++i) {
            VoteRecord &v = t.votes[i];
            v.offset = offsets[i];
            v.forward = fwd[i].point;
            v.estimate = fwd[i].point - offsets[i];
            v.similarity = fwd[i].similarity;
            if (weighting) {
                v.round_trip = back[i].point;
                v.distance = distance(queries[i], back[i].point);
                v.weight = consistency_weight(v.distance, s0, v.similarity);
            } else {
                v.round_trip = {nan, nan, nan};
                v.weight = v.similarity;
            }
        }

        std::vector<size_t> order(offsets.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return t.votes[a].weight > t.votes[b].weight; });
        const size_t k = std::min(order.size(), static_cast<size_t>(cc.top_k));
        order.resize(k);

        // Accumulate deviations from the first selected estimate so identical estimates average exactly.
        const Vec3 ref = t.votes[order[0]].estimate;
        Vec3 acc;
        double wsum = 0.0;
        for (size_t i : order) {
            t.votes[i].selected = true;
            wsum += t.votes[i].weight;
        }
        const bool weighted = cc.mean == MeanMode::Weighted && wsum > 0.0;
        for (size_t i : order) {
            const Vec3 dev = t.votes[i].estimate - ref;
            acc += weighted ? dev * (t.votes[i].weight / wsum) : dev;
        }
        center = ref + (weighted ? acc : acc / static_cast<double>(k));

        t.best_similarity = t.votes[order[0]].weight;
        t.center_out = center;
        if (level == config.schedule.levels) {
            r.similarity = t.best_similarity;
            if (weighting) {
                double dsum = 0.0;
                for (size_t i : order) {
                    dsum += t.votes[i].distance;
                }
                r.mean_consistency_mm = dsum / static_cast<double>(k);
            }
        }
        r.trace.push_back(std::move(t));
    }
    r.point = center;
    if (cc.rescore_center) {
        const int last = config.schedule.levels;
        const double scale = config.schedule.scale(last);
        const Descriptor a = sample_descriptor(source, q, config.spec, scale);
        const Descriptor b = sample_descriptor(target, center, config.spec, scale);
        r.similarity = combined_similarity(a.values, b.values, config.similarity);
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

double consistency_distance(const Volume &source, const Vec3 &q, const Volume &target, const Vec3 &forward, int level,
                            const SearchConfig &config) {
    const CandidateScore back = level_search(target, forward, source, q, level, config);
    return distance(q, back.point);
}

} // namespace cpm

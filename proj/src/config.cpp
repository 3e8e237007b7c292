#include "cpm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace cpm {

using nlohmann::json;

namespace {

void check_keys(const json &j, const char *section, std::initializer_list<const char *> allowed) {
    if (!j.is_object()) {
        throw std::invalid_argument(std::string("config section '") + section + "' must be an object");
    }
    for (const auto &item : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char *k) { return item.key() == k; }) ==
            allowed.end()) {
            throw std::invalid_argument(std::string("unknown key '") + item.key() + "' in config section '" +
                                        section + "'");
        }
    }
}

} // namespace

MatchResult run_matcher(const Volume &source, const Vec3 &q, const Volume &target, const MatcherConfig &config) {
    if (config.consistent.variant == 1 && !config.consistent.weighting_enabled()) {
        return point_matching(source, q, target, config.search);
    }
    return consistent_point_matching(source, q, target, config.search, config.consistent);
}

json vec3_to_json(const Vec3 &v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const json &j) {
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument("expected a 3-element coordinate array");
    }
    Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    if (!v.finite()) {
        throw std::invalid_argument("coordinates must be finite");
    }
    return v;
}

json to_json(const DescriptorSpec &spec) {
    json parts = json::array();
    for (const PartConfig &p : spec.part_configs()) {
        parts.push_back({{"kind", to_string(p.kind)}, {"extent", p.extent}, {"spacing_mm", p.spacing_mm}});
    }
    return {{"parts", parts}};
}

DescriptorSpec descriptor_spec_from_json(const json &j) {
    check_keys(j, "descriptor", {"parts"});
    if (!j.contains("parts") || !j["parts"].is_array()) {
        throw std::invalid_argument("descriptor spec needs a 'parts' array");
    }
    std::vector<PartConfig> parts;
    for (const json &p : j["parts"]) {
        check_keys(p, "descriptor.parts", {"kind", "extent", "spacing_mm"});
        PartConfig c;
        c.kind = grid_kind_from_string(p.value("kind", std::string("grid3d")));
        c.extent = p.value("extent", 7);
        c.spacing_mm = p.at("spacing_mm").get<double>();
        parts.push_back(c);
    }
    return DescriptorSpec::make(parts);
}

json to_json(const LevelSchedule &s) {
    return {{"s0", s.s0},
            {"levels", s.levels},
            {"step_mode", to_string(s.step_mode)},
            {"first_level_scale", s.first_level_scale},
            {"region_steps", s.region_steps},
            {"level1_pitch_mm", s.level1_pitch_mm}};
}

LevelSchedule level_schedule_from_json(const json &j) {
    check_keys(j, "search", {"s0", "levels", "step_mode", "first_level_scale", "region_steps", "level1_pitch_mm"});
    LevelSchedule s;
    s.s0 = j.value("s0", s.s0);
    s.levels = j.value("levels", s.levels);
    s.step_mode = step_mode_from_string(j.value("step_mode", to_string(s.step_mode)));
    s.first_level_scale = j.value("first_level_scale", s.first_level_scale);
    s.region_steps = j.value("region_steps", s.region_steps);
    s.level1_pitch_mm = j.value("level1_pitch_mm", s.level1_pitch_mm);
    s.validate();
    return s;
}

json to_json(const SimilarityParams &p) {
    return {{"histogram_bins", p.histogram_bins},
            {"intensity_range", json::array({p.intensity_min, p.intensity_max})},
            {"combine", to_string(p.combine)}};
}

SimilarityParams similarity_params_from_json(const json &j) {
    check_keys(j, "similarity", {"histogram_bins", "intensity_range", "combine"});
    SimilarityParams p;
    p.histogram_bins = j.value("histogram_bins", p.histogram_bins);
    if (j.contains("intensity_range")) {
        const json &r = j["intensity_range"];
        if (!r.is_array() || r.size() != 2) {
            throw std::invalid_argument("intensity_range must be [min, max]");
        }
        p.intensity_min = r[0].get<double>();
        p.intensity_max = r[1].get<double>();
    }
    p.combine = combine_from_string(j.value("combine", to_string(p.combine)));
    p.validate();
    return p;
}

json to_json(const ConsistentConfig &c) {
    json j = {{"variant", c.variant},
              {"top_k", c.top_k},
              {"mean", to_string(c.mean)},
              {"rescore_center", c.rescore_center}};
    j["weighting"] = c.weighting ? json(*c.weighting) : json(nullptr);
    return j;
}

ConsistentConfig consistent_config_from_json(const json &j) {
    check_keys(j, "consistency", {"variant", "top_k", "mean", "rescore_center", "weighting"});
    ConsistentConfig c;
    c.variant = j.value("variant", c.variant);
    c.top_k = j.value("top_k", c.top_k);
    c.mean = mean_mode_from_string(j.value("mean", to_string(c.mean)));
    c.rescore_center = j.value("rescore_center", c.rescore_center);
    if (j.contains("weighting") && !j["weighting"].is_null()) {
        c.weighting = j["weighting"].get<bool>();
    }
    c.validate();
    return c;
}

json to_json(const MatcherConfig &c) {
    return {{"descriptor", to_json(c.search.spec)},
            {"search", to_json(c.search.schedule)},
            {"similarity", to_json(c.search.similarity)},
            {"consistency", to_json(c.consistent)}};
}

MatcherConfig matcher_config_from_json(const json &j) {
    MatcherConfig c;
    check_keys(j, "root", {"descriptor", "search", "similarity", "consistency"});
    try {
        if (j.contains("descriptor")) c.search.spec = descriptor_spec_from_json(j["descriptor"]);
        if (j.contains("search")) c.search.schedule = level_schedule_from_json(j["search"]);
        if (j.contains("similarity")) c.search.similarity = similarity_params_from_json(j["similarity"]);
        if (j.contains("consistency")) c.consistent = consistent_config_from_json(j["consistency"]);
    } catch (const json::exception &e) {
        throw std::invalid_argument(std::string("bad matcher config: ") + e.what());
    }
    return c;
}

MatcherConfig load_matcher_config(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::invalid_argument("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception &e) {
        throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return matcher_config_from_json(j);
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace

json to_json(const MatchResult &r, bool include_trace) {
    json j = {{"point_mm", vec3_to_json(r.point)},
              {"similarity", r.similarity},
              {"mean_consistency_mm", number_or_null(r.mean_consistency_mm)},
              {"elapsed_seconds", r.seconds}};
    if (include_trace) {
        json levels = json::array();
        for (const LevelTrace &t : r.trace) {
            json votes = json::array();
            for (const VoteRecord &v : t.votes) {
                votes.push_back({{"offset_mm", vec3_to_json(v.offset)},
                                 {"forward_mm", vec3_to_json(v.forward)},
                                 {"round_trip_mm", v.round_trip.finite() ? vec3_to_json(v.round_trip) : json(nullptr)},
                                 {"estimate_mm", vec3_to_json(v.estimate)},
                                 {"distance_mm", number_or_null(v.distance)},
                                 {"similarity", v.similarity},
                                 {"weight", v.weight},
                                 {"selected", v.selected}});
            }
            levels.push_back({{"level", t.level},
                              {"step_mm", t.step},
                              {"scale", t.scale},
                              {"center_in_mm", vec3_to_json(t.center_in)},
                              {"center_out_mm", vec3_to_json(t.center_out)},
                              {"best_similarity", t.best_similarity},
                              {"candidates", t.candidates},
                              {"forward_searches", t.forward_searches},
                              {"backward_searches", t.backward_searches},
                              {"votes", votes}});
        }
        j["trace"] = levels;
    }
    return j;
}

} // namespace cpm

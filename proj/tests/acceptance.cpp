// Acceptance suite: one PASS/FAIL/SKIP line per top-level criterion.
// Usage: acceptance [criterion-name ...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "cpm/eval.hpp"
#include "cpm/phantom.hpp"
#include "oracles.hpp"

using namespace cpm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    enum Kind { Pass, Fail, Skip } kind;
    std::string detail;
};

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean_of(const std::vector<double> &v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

MatchResult run_variant(const Volume &s, const Vec3 &q, const Volume &t, int variant) {
    const SearchConfig cfg;
    if (variant == 1) return point_matching(s, q, t, cfg);
    ConsistentConfig cc;
    cc.variant = variant;
    return consistent_point_matching(s, q, t, cfg, cc);
}

// Identity pairs: 100 in-body queries split over 3 phantoms, source = target.
Outcome identity_matching() {
    const auto t0 = std::chrono::steady_clock::now();
    const PhantomGeometry g;
    int pm_ok = 0, cpm_ok = 0, n = 0;
    double worst_pm = 0, worst_cpm = 0;
    for (int ph = 0; ph < 3; ++ph) {
        const PhantomModel model = PhantomModel::random(100 + ph, phantom_extent(g));
        const Volume v = render_phantom(model, g);
        const size_t count = ph == 0 ? 34 : 33;
        for (const QueryPair &qp : sample_queries(model, v, v, {}, count, 200 + ph)) {
            const double dp = distance(run_variant(v, qp.query, v, 1).point, qp.query);
            const double dc = distance(run_variant(v, qp.query, v, 13).point, qp.query);
            pm_ok += dp <= 1.0;
            cpm_ok += dc <= 1.0;
            worst_pm = std::max(worst_pm, dp);
            worst_cpm = std::max(worst_cpm, dc);
            ++n;
        }
    }
    const double secs = seconds_since(t0);
    const bool pass = pm_ok >= 0.99 * n && cpm_ok >= 0.99 * n && secs < 120.0;
    return {pass ? Outcome::Pass : Outcome::Fail,
            fmt("%d queries; within 1 mm: PM %d, CPM(13) %d; max error PM %.2f mm, CPM(13) %.2f mm; %.1f s (limit 120 s)",
                n, pm_ok, cpm_ok, worst_pm, worst_cpm, secs)};
}

// Rigid translations of up to 40 mm per axis, in whole voxels.
Outcome translation_recovery() {
    const PhantomGeometry g;
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> vx(-20, 20), vz(-16, 16);
    std::vector<Vec3> shifts = {{40, -40, 40}, {-40, 40, -40}};
    while (shifts.size() < 4) shifts.push_back({vx(rng) * g.spacing.x, vx(rng) * g.spacing.y, vz(rng) * g.spacing.z});
    int ok = 0, n = 0;
    double worst = 0;
    for (size_t i = 0; i < shifts.size(); ++i) {
        const PhantomModel model = PhantomModel::random(300 + i, phantom_extent(g));
        RenderOptions ro;
        ro.shift = shifts[i];
        const Volume s = render_phantom(model, g), t = render_phantom(model, g, ro);
        for (const QueryPair &qp : sample_queries(model, s, t, ro, 25, 400 + i)) {
            const double d = distance(run_variant(s, qp.query, t, 13).point, qp.truth);
            ok += d <= 2.0;
            worst = std::max(worst, d);
            ++n;
        }
    }
    return {ok >= 0.95 * n ? Outcome::Pass : Outcome::Fail,
            fmt("%d queries over shifts up to 40 mm per axis; CPM(13) within 2 mm: %d (need >= 95%%); max error %.2f mm",
                n, ok, worst)};
}

// Smoothly warped follow-up scans with local intensity changes and noise.
Outcome warped_suite() {
    constexpr double kWarpAmplitude = 20.0, kWarpWavelength = 120.0, kNoise = 20.0, kChangeFraction = 0.2;
    constexpr int kQueries = 50;
    const int variants[] = {1, 3, 7, 13};
    std::vector<std::vector<double>> err(4);
    std::vector<double> secs(4, 0.0);
    const PhantomGeometry g;
    const int per = (kQueries + 2) / 3;
    for (int ph = 0; ph < 3; ++ph) {
        const PhantomModel model = PhantomModel::random(1 + ph, phantom_extent(g));
        const Volume src = render_phantom(model, g, RenderOptions{Vec3{}, nullptr, kNoise, 100ull + ph});
        // Follow-up anatomy: a fraction of blobs change size and contrast.
        std::mt19937_64 rng(77 + ph);
        std::uniform_real_distribution<double> u(0, 1);
        PhantomModel changed = model;
        for (Blob &b : changed.blobs)
            if (u(rng) < kChangeFraction) {
                b.amplitude *= 0.4 + 1.2 * u(rng);
                b.radius_mm *= 0.7 + 0.6 * u(rng);
            }
        const Warp warp = Warp::random(13 + ph, kWarpAmplitude, kWarpWavelength);
        RenderOptions ro;
        ro.warp = &warp;
        ro.noise_sigma = kNoise;
        ro.noise_seed = 200 + ph;
        const Volume tgt = render_phantom(changed, g, ro);
        const size_t n = std::min(per, kQueries - ph * per);
        for (const QueryPair &qp : sample_queries(model, src, tgt, ro, n, 1000 + ph))
            for (int vi = 0; vi < 4; ++vi) {
                const MatchResult r = run_variant(src, qp.query, tgt, variants[vi]);
                err[vi].push_back(distance(r.point, qp.truth));
                secs[vi] += r.seconds;
            }
    }
    double mean[4], median[4];
    for (int vi = 0; vi < 4; ++vi) {
        mean[vi] = mean_of(err[vi]);
        median[vi] = median_of(err[vi]);
        std::printf("    warped suite %-7s mean %.3f mm  median %.3f mm  %.3f s/match\n",
                    vi == 0 ? "PM" : fmt("CPM(%d)", variants[vi]).c_str(), mean[vi], median[vi],
                    secs[vi] / double(err[vi].size()));
    }
    const bool ordered = mean[3] <= mean[2] && mean[2] <= mean[1] && mean[1] <= mean[0];
    const double mean_drop = 1.0 - mean[3] / mean[0], median_drop = 1.0 - median[3] / median[0];
    const bool robust = mean_drop > median_drop;
    return {ordered && robust ? Outcome::Pass : Outcome::Fail,
            fmt("%zu queries; mean ordering CPM(13) <= CPM(7) <= CPM(3) <= PM: %s; relative drop PM to CPM(13): "
                "mean %.3f vs median %.3f (%s)",
                err[0].size(), ordered ? "holds" : "violated", mean_drop, median_drop,
                robust ? "mean drops more" : "median drops more")};
}

// Instrumented run checked against independent recomputation.
Outcome algorithm_structure() {
    PhantomGeometry g;
    const PhantomModel model = PhantomModel::random(500, phantom_extent(g));
    const Warp warp = Warp::random(501, 8.0, 120.0);
    RenderOptions ro;
    ro.shift = {6, -4, 5};
    ro.warp = &warp;
    const Volume s = render_phantom(model, g), t = render_phantom(model, g, ro);
    const SearchConfig cfg;
    size_t level_count_errors = 0, weight_checks = 0, mean_checks = 0;
    double worst_weight = 0, worst_mean = 0;
    for (const QueryPair &qp : sample_queries(model, s, t, ro, 3, 502)) {
        const uint64_t before = level_search_count();
        const MatchResult r = consistent_point_matching(s, qp.query, t, cfg, ConsistentConfig{});
        if (level_search_count() - before != 26u * 5u) ++level_count_errors;
        for (const LevelTrace &lt : r.trace) {
            if (lt.forward_searches + lt.backward_searches != 26) ++level_count_errors;
            const double scale = cfg.schedule.scale(lt.level);
            for (const VoteRecord &v : lt.votes) {
                // Independent similarity (brute-force oracle) and backward search.
                const Vec3 qo = qp.query + v.offset;
                const double sim = oracle::combined(sample_descriptor(s, qo, cfg.spec, scale).values,
                                                    sample_descriptor(t, v.forward, cfg.spec, scale).values);
                const CandidateScore back = level_search(t, v.forward, s, qp.query, lt.level, cfg);
                const double d = distance(qo, back.point);
                const double w = std::exp(-d / cfg.schedule.s0) * sim;
                worst_weight = std::max(worst_weight, std::abs(w - v.weight));
                ++weight_checks;
            }
            // Brute force: every subset of size k, choose the one with the largest weights.
            const size_t k = std::min<size_t>(5, lt.votes.size());
            std::vector<double> ws;
            for (const VoteRecord &v : lt.votes) ws.push_back(v.weight);
            std::vector<double> sorted = ws;
            std::sort(sorted.rbegin(), sorted.rend());
            const double cut = sorted[k - 1];
            Vec3 sum;
            size_t taken = 0;
            for (const VoteRecord &v : lt.votes)
                if (v.weight > cut) sum += v.estimate, ++taken;
            for (const VoteRecord &v : lt.votes)
                if (v.weight == cut && taken < k) sum += v.estimate, ++taken;
            worst_mean = std::max(worst_mean, distance(sum / double(k), lt.center_out));
            ++mean_checks;
        }
    }
    const bool pass = level_count_errors == 0 && worst_weight <= 1e-12 && worst_mean <= 1e-9;
    return {pass ? Outcome::Pass : Outcome::Fail,
            fmt("level-search count mismatches %zu (expect 26 per level); %zu weights, max |w - exp(-d/s0) sim| = %.2e; "
                "%zu top-5 means, max deviation %.2e mm",
                level_count_errors, weight_checks, worst_weight, mean_checks, worst_mean)};
}

Outcome similarity_oracles() {
    std::mt19937_64 rng(600);
    std::uniform_int_distribution<int> len(16, 2500);
    double worst = 0;
    size_t violations = 0;
    for (int n = 0; n < 1000; ++n) {
        const size_t l = static_cast<size_t>(len(rng));
        const auto a = oracle::random_vector(rng, l), b = oracle::random_vector(rng, l);
        const double c = cosine(a, b), m = normalized_mutual_information(a, b), s = combined_similarity(a, b);
        worst = std::max({worst, std::abs(c - oracle::cosine(a, b)), std::abs(m - oracle::nmi(a, b))});
        violations += c != cosine(b, a) || m != normalized_mutual_information(b, a) || s != combined_similarity(b, a);
        violations += !(c >= -1 && c <= 1 && m >= 0 && m <= 1 && s >= 0 && s <= 1);
    }
    return {worst <= 1e-9 && violations == 0 ? Outcome::Pass : Outcome::Fail,
            fmt("1000 pairs; max deviation from brute force %.2e (limit 1e-9); symmetry/range violations %zu", worst,
                violations)};
}

Outcome froc_oracle() {
    std::mt19937_64 rng(700);
    std::uniform_int_distribution<int> len(1, 400), grid(0, 50);
    std::uniform_real_distribution<double> cont(0, 25);
    size_t mismatches = 0, nonmonotone = 0;
    for (int n = 0; n < 1000; ++n) {
        std::vector<double> d(static_cast<size_t>(len(rng)));
        for (double &x : d) x = n % 2 ? grid(rng) * 0.5 : cont(rng);
        if (n % 10 == 0) d.back() = std::numeric_limits<double>::infinity();
        const FrocCurve c = froc(d, default_thresholds());
        for (size_t i = 0; i < c.thresholds.size(); ++i) {
            mismatches += c.sensitivity[i] != oracle::count_sensitivity(d, c.thresholds[i]);
            nonmonotone += i > 0 && c.sensitivity[i] < c.sensitivity[i - 1];
        }
    }
    return {mismatches == 0 && nonmonotone == 0 ? Outcome::Pass : Outcome::Fail,
            fmt("1000 distance sets; mismatches vs brute-force count %zu; monotonicity violations %zu", mismatches,
                nonmonotone)};
}

std::string read_file(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path dir = oracle::temp_dir("acceptance_det");
    PhantomGeometry g;
    g.dims = {64, 64, 40};
    const PhantomModel model = PhantomModel::random(800, phantom_extent(g));
    RenderOptions ro;
    ro.shift = {6, 4, -5};
    const Warp warp = Warp::random(801, 6.0, 120.0);
    ro.warp = &warp;
    ro.noise_sigma = 15;
    save_volume(render_phantom(model, g), dir / "src.nii.gz");
    const Volume t = render_phantom(model, g, ro);
    save_volume(t, dir / "tgt.nii");
    PairManifest m;
    const Volume s = load_volume(dir / "src.nii.gz");
    size_t i = 0;
    for (const QueryPair &qp : sample_queries(model, s, t, ro, 6, 802))
        m.entries.push_back({"q" + std::to_string(i++), "src.nii.gz", "tgt.nii", qp.query, qp.truth, "toy"});
    m.entries.push_back({"missing", "absent.nii", "tgt.nii", {0, 0, 0}, {0, 0, 0}, "toy"});
    m.save_jsonl(dir / "manifest.jsonl");

    MatcherConfig config;
    EvalOptions opts;
    opts.record_timing = false;
    const PairManifest loaded = PairManifest::load_jsonl(dir / "manifest.jsonl");
    opts.workers = 1;
    write_eval_outputs(run_eval(loaded, config, opts), dir / "run1", config, false);
    opts.workers = 3;
    write_eval_outputs(run_eval(loaded, config, opts), dir / "run2", config, false);
    const std::string a = read_file(dir / "run1" / "pairs.csv"), b = read_file(dir / "run2" / "pairs.csv");
    fs::remove_all(dir);
    return {a == b && !a.empty() ? Outcome::Pass : Outcome::Fail,
            fmt("two eval runs (1 and 3 workers) over a %zu-entry manifest: pairs.csv %s (%zu bytes)",
                loaded.entries.size(), a == b ? "byte-identical" : "differs", a.size())};
}

Outcome published_numbers_reproduction() {
    return {Outcome::Skip, "optional; needs the public lesion-tracking test annotations and scans, which are not "
                           "available offline (run `cpm convert-csv` + `cpm eval` when they are)"};
}

} // namespace

int main(int argc, char **argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"identity_matching", identity_matching},   {"translation_recovery", translation_recovery},
        {"warped_suite_robustness", warped_suite},  {"algorithm_structure", algorithm_structure},
        {"similarity_oracles", similarity_oracles}, {"froc_oracle", froc_oracle},
        {"determinism", determinism},               {"published_numbers_reproduction", published_numbers_reproduction},
    };
    std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto &[name, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {Outcome::Fail, std::string("exception: ") + e.what()};
        }
        const char *tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Fail ? "FAIL" : "SKIP";
        std::printf("[%s] %s: %s\n", tag, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += o.kind == Outcome::Fail;
    }
    return failed ? 1 : 0;
}

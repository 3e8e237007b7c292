#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "cpm/eval.hpp"
#include "cpm/phantom.hpp"
#include "oracles.hpp"

using namespace cpm;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

MatcherConfig fast_config() {
    MatcherConfig c;
    c.consistent.variant = 3;
    return c;
}

// Writes a small shifted phantom pair and returns its manifest.
PairManifest toy_manifest(const fs::path &dir, size_t n) {
    PhantomGeometry g;
    g.dims = {40, 40, 30};
    g.spacing = {2, 2, 2.5};
    const PhantomModel model = PhantomModel::random(21, phantom_extent(g));
    RenderOptions ro;
    ro.shift = {4, -2, 0};
    const Volume s = render_phantom(model, g), t = render_phantom(model, g, ro);
    save_volume(s, dir / "s.nii.gz");
    save_volume(t, dir / "t.mhd");
    PairManifest m;
    size_t i = 0;
    for (const auto &q : sample_queries(model, s, t, ro, n, 22))
        m.entries.push_back({"p" + std::to_string(i++), dir / "s.nii.gz", dir / "t.mhd", q.query, q.truth, "toy"});
    return m;
}

} // namespace

TEST_CASE("FROC examples") {
    const std::vector<double> d = {3, 12, 5};
    CHECK(sensitivity_at(d, 10) == doctest::Approx(2.0 / 3.0));
    const std::vector<double> t = {10};
    CHECK(froc(d, t).sensitivity[0] == doctest::Approx(2.0 / 3.0));
    const std::vector<double> zeros(5, 0.0);
    const FrocCurve c = froc(zeros, default_thresholds());
    for (double s : c.sensitivity) CHECK(s == 1.0);
    const std::vector<double> one = {0.0}, t0 = {0.0};
    CHECK(froc(one, t0).sensitivity[0] == 1.0);
    CHECK_THROWS_AS(froc(std::vector<double>{}, t0), std::invalid_argument);
    CHECK_THROWS_AS(froc(std::vector<double>{-1.0}, t0), std::invalid_argument);
}

TEST_CASE("default thresholds cover 0..20 mm at 0.5 mm") {
    const auto t = default_thresholds();
    REQUIRE(t.size() == 41);
    CHECK(t.front() == 0.0);
    CHECK(t[20] == 10.0);
    CHECK(t.back() == 20.0);
}

TEST_CASE("FROC equals brute-force counting and is monotone") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> len(1, 300);
    std::uniform_int_distribution<int> grid(0, 60);
    for (int n = 0; n < 200; ++n) {
        std::vector<double> d(static_cast<size_t>(len(rng)));
        for (double &x : d) x = grid(rng) * 0.5; // on the threshold grid so ties are exercised
        if (n % 7 == 0) d[0] = std::numeric_limits<double>::infinity();
        const FrocCurve c = froc(d, default_thresholds());
        CHECK(c.n == d.size());
        for (size_t i = 0; i < c.thresholds.size(); ++i) {
            CHECK(c.sensitivity[i] == oracle::count_sensitivity(d, c.thresholds[i]));
            if (i > 0) CHECK(c.sensitivity[i] >= c.sensitivity[i - 1]);
        }
    }
}

TEST_CASE("summary statistics match a brute-force pass") {
    std::vector<EvalRecord> recs(7);
    const double d[] = {1.5, 12, 0.25, 3, 8, 100, 2};
    for (size_t i = 0; i < 7; ++i) {
        recs[i].distance_mm = d[i];
        recs[i].seconds = 0.1 * i;
    }
    recs[5].status = PairStatus::LoadFailed;
    recs[5].distance_mm = std::numeric_limits<double>::infinity();
    const EvalSummary s = summarize(recs);
    CHECK(s.n == 7);
    CHECK(s.failed == 1);
    CHECK(s.mean_mm == doctest::Approx((1.5 + 12 + 0.25 + 3 + 8 + 2) / 6));
    CHECK(s.median_mm == doctest::Approx((2 + 3) / 2.0));
    CHECK(s.sens_at_10mm == doctest::Approx(5.0 / 7.0));
    CHECK(s.mean_seconds == doctest::Approx((0 + 0.1 + 0.2 + 0.3 + 0.4 + 0.6) / 6));
}

TEST_CASE("manifest JSON lines round trip and relative paths") {
    const fs::path dir = oracle::temp_dir("manifest");
    {
        std::ofstream os(dir / "m.jsonl");
        os << R"({"id": "a", "source": "x.nii", "target": "/abs/y.nii", "query_mm": [1, 2, 3], "truth_mm": [4, 5, 6], "tag": "t"})"
           << "\n\n"
           << R"({"source": "x.nii", "target": "y.nii", "query_mm": [0, 0, 0], "truth_mm": [0, 0, 0]})" << "\n";
    }
    const PairManifest m = PairManifest::load_jsonl(dir / "m.jsonl");
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].id == "a");
    CHECK(m.entries[0].source == dir / "x.nii");
    CHECK(m.entries[0].target == fs::path("/abs/y.nii"));
    CHECK(m.entries[0].truth_mm == Vec3{4, 5, 6});
    CHECK(m.entries[1].id == "1");
    m.save_jsonl(dir / "m2.jsonl");
    const PairManifest m2 = PairManifest::load_jsonl(dir / "m2.jsonl");
    CHECK(m2.entries[0].query_mm == m.entries[0].query_mm);
    CHECK(m2.entries[1].source == m.entries[1].source);
    {
        std::ofstream os(dir / "bad.jsonl");
        os << R"({"source": "x.nii"})" << "\n";
    }
    CHECK_THROWS_AS(PairManifest::load_jsonl(dir / "bad.jsonl"), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("run_eval: failures are misses, outputs are deterministic") {
    const fs::path dir = oracle::temp_dir("run_eval");
    PairManifest m = toy_manifest(dir, 3);
    m.entries.push_back({"missing", dir / "nope.nii", dir / "t.mhd", {0, 0, 0}, {0, 0, 0}, ""});
    m.entries.push_back({"outside", dir / "s.nii.gz", dir / "t.mhd", {-999, 0, 0}, {0, 0, 0}, ""});
    EvalOptions opts;
    opts.workers = 2;
    opts.record_timing = false;
    const EvalReport r = run_eval(m, fast_config(), opts);
    REQUIRE(r.records.size() == 5);
    for (int i = 0; i < 3; ++i) {
        CHECK(r.records[i].status == PairStatus::Ok);
        CHECK(r.records[i].distance_mm <= 2.0);
    }
    CHECK(r.records[3].status == PairStatus::LoadFailed);
    CHECK(r.records[4].status == PairStatus::MatchFailed);
    CHECK(std::isinf(r.records[3].distance_mm));
    CHECK(r.curve.sensitivity.back() == doctest::Approx(3.0 / 5.0));
    CHECK(r.summary.failed == 2);

    write_eval_outputs(r, dir / "out1", fast_config(), false);
    opts.workers = 1;
    write_eval_outputs(run_eval(m, fast_config(), opts), dir / "out2", fast_config(), false);
    const std::string a = read_file(dir / "out1" / "pairs.csv");
    CHECK(a == read_file(dir / "out2" / "pairs.csv"));
    CHECK(read_file(dir / "out1" / "froc.csv") == read_file(dir / "out2" / "froc.csv"));
    CHECK(a.rfind("id,distance_mm,seconds,status\np0,", 0) == 0);
    CHECK(a.find("missing,,,load_failed") != std::string::npos);
    const auto summary = nlohmann::json::parse(read_file(dir / "out1" / "summary.json"));
    CHECK(summary["n"] == 5);
    CHECK(summary["failures"].size() == 2);
    CHECK_THROWS_AS(run_eval(PairManifest{}, fast_config()), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("landmark cohort: template itself and translated copies") {
    const fs::path dir = oracle::temp_dir("landmark");
    PhantomGeometry g;
    g.dims = {40, 40, 30};
    g.spacing = {2, 2, 2.5};
    const PhantomModel model = PhantomModel::random(31, phantom_extent(g));
    const Volume tmpl = render_phantom(model, g);
    save_volume(tmpl, dir / "template.nii");
    const Vec3 point = sample_queries(model, tmpl, tmpl, {}, 1, 32)[0].query;
    std::vector<CohortEntry> cohort = {{"self", dir / "template.nii", point}};
    for (int i = 0; i < 2; ++i) {
        RenderOptions ro;
        ro.shift = {2.0 * (i + 1), -2.0 * i, 2.5 * i};
        save_volume(render_phantom(model, g, ro), dir / ("c" + std::to_string(i) + ".nii"));
        cohort.push_back({"c" + std::to_string(i), dir / ("c" + std::to_string(i) + ".nii"), phantom_truth(point, ro)});
    }
    const EvalReport r = landmark_cohort(dir / "template.nii", point, cohort, fast_config());
    REQUIRE(r.records.size() == 3);
    CHECK(r.records[0].distance_mm <= 1.0);
    for (const auto &rec : r.records) CHECK(rec.distance_mm <= 2.0);
    CHECK_THROWS_AS(landmark_cohort(dir / "template.nii", {1e5, 0, 0}, cohort, fast_config()), SearchError);
    fs::remove_all(dir);
}

TEST_CASE("CSV adapter with configurable columns and voxel coordinates") {
    const fs::path dir = oracle::temp_dir("csv");
    WorldFrame f;
    f.origin = {-10, 0, 5};
    f.spacing = {0.5, 0.5, 5};
    save_volume(Volume({4, 4, 4}, f, std::vector<Intensity>(64, 1)), dir / "a.nii");
    {
        std::ofstream os(dir / "ann.csv");
        os << "lesion,\"scan, baseline\",followup,qx,qy,qz,tx,ty,tz\n"
           << "L1,a.nii,a.nii,2,0,1,0,2,3\n"
           << "\"L\"\"2\",a.nii,a.nii,0,0,0,1,1,1\n";
    }
    CsvColumns cols;
    cols.id = "lesion";
    cols.source = "scan, baseline";
    cols.target = "followup";
    cols.query = {"qx", "qy", "qz"};
    cols.truth = {"tx", "ty", "tz"};
    cols.base_dir = dir;
    cols.voxel_coordinates = true;
    const PairManifest m = manifest_from_csv(dir / "ann.csv", cols);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].id == "L1");
    CHECK(m.entries[1].id == "L\"2");
    CHECK(m.entries[0].query_mm.x == doctest::Approx(-9));
    CHECK(m.entries[0].query_mm.z == doctest::Approx(10));
    CHECK(m.entries[0].truth_mm.y == doctest::Approx(1));
    cols.truth = {"tx", "ty", "missing"};
    CHECK_THROWS_AS(manifest_from_csv(dir / "ann.csv", cols), std::invalid_argument);
    fs::remove_all(dir);
}

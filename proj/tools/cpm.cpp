// Command-line front end: matching, evaluation, benchmarking, phantoms and the HTTP service.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "cpm/eval.hpp"
#include "cpm/parallel.hpp"
#include "cpm/phantom.hpp"
#include "cpm/service.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace cpm;

namespace {

struct CommonOptions {
    std::string config_path;
    int variant = 0; // 0 keeps the config's variant
    size_t threads = 0;
};

MatcherConfig make_config(const CommonOptions &o) {
    MatcherConfig c = o.config_path.empty() ? MatcherConfig{} : load_matcher_config(o.config_path);
    if (o.variant != 0) {
        if (o.variant != 1 && o.variant != 3 && o.variant != 7 && o.variant != 13) {
            throw std::invalid_argument("variant must be one of 1, 3, 7, 13");
        }
        if (o.variant != c.consistent.variant) {
            c.consistent.variant = o.variant;
            c.consistent.weighting.reset();
        }
    }
    if (o.threads > 0) {
        set_compute_threads(o.threads);
    }
    return c;
}

void add_common(CLI::App *cmd, CommonOptions &o) {
    cmd->add_option("--config", o.config_path, "Matcher configuration JSON")->envname("CPM_CONFIG");
    cmd->add_option("--variant", o.variant, "Consistency variant: 1, 3, 7 or 13")->envname("CPM_VARIANT");
    cmd->add_option("--threads", o.threads, "Compute threads (0 = all cores)")->envname("CPM_THREADS");
}

Vec3 to_vec(const std::vector<double> &v) { return {v.at(0), v.at(1), v.at(2)}; }

void print_json(const json &j) { std::cout << j.dump(2) << std::endl; }

int fail(const std::string &code, const std::string &message, int exit_code = 1) {
    std::cout << json{{"error", {{"code", code}, {"message", message}}}}.dump(2) << std::endl;
    return exit_code;
}

json summary_json(const EvalReport &r, bool record_timing) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"n", r.summary.n},
            {"failed", r.summary.failed},
            {"mean_mm", num(r.summary.mean_mm)},
            {"median_mm", num(r.summary.median_mm)},
            {"sens_at_10mm", r.summary.sens_at_10mm},
            {"mean_seconds", record_timing ? num(r.summary.mean_seconds) : json(nullptr)}};
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Consistent point matching for 3D medical volumes"};
    app.require_subcommand(1);

    CommonOptions common;

    // match
    auto *match = app.add_subcommand("match", "Find the point in target corresponding to a source point");
    std::string m_source, m_target;
    std::vector<double> m_query;
    bool m_trace = false;
    match->add_option("--source", m_source, "Source volume")->required();
    match->add_option("--target", m_target, "Target volume")->required();
    match->add_option("--query", m_query, "Query point in source world mm")->expected(3)->required();
    match->add_flag("--trace", m_trace, "Include per-level votes");
    add_common(match, common);

    // eval
    auto *eval = app.add_subcommand("eval", "Evaluate a JSON-lines pair manifest");
    std::string e_manifest, e_out;
    size_t e_workers = 1;
    bool e_no_timing = false;
    eval->add_option("--manifest", e_manifest)->required();
    eval->add_option("--out", e_out, "Output directory")->required();
    eval->add_option("--workers", e_workers, "Pairs evaluated concurrently");
    eval->add_flag("--no-timing", e_no_timing, "Leave the seconds column empty for byte-stable output");
    add_common(eval, common);

    // landmark
    auto *landmark = app.add_subcommand("landmark", "Locate one template landmark in a cohort");
    std::string l_template, l_cohort, l_out;
    std::vector<double> l_point;
    size_t l_workers = 1;
    landmark->add_option("--template", l_template)->required();
    landmark->add_option("--point", l_point, "Template landmark in world mm")->expected(3)->required();
    landmark->add_option("--cohort", l_cohort, "JSON lines of {id, volume, truth_mm}")->required();
    landmark->add_option("--out", l_out, "Output directory")->required();
    landmark->add_option("--workers", l_workers);
    add_common(landmark, common);

    // bench
    auto *bench = app.add_subcommand("bench", "Time one match repeatedly");
    std::string b_source, b_target;
    std::vector<double> b_query;
    int b_repeats = 10;
    bench->add_option("--source", b_source)->required();
    bench->add_option("--target", b_target)->required();
    bench->add_option("--query", b_query)->expected(3)->required();
    bench->add_option("-n,--repeats", b_repeats)->check(CLI::PositiveNumber);
    add_common(bench, common);

    // serve
    auto *serve = app.add_subcommand("serve", "Serve volumes, slices and matching over HTTP");
    std::string s_dir, s_bind = "127.0.0.1:8080", s_static;
    serve->add_option("--volumes-dir", s_dir)->envname("CPM_VOLUMES_DIR")->required();
    serve->add_option("--bind", s_bind, "host:port")->envname("CPM_BIND");
    serve->add_option("--static-dir", s_static, "Viewer bundle served at /")->envname("CPM_STATIC_DIR");
    add_common(serve, common);

    // phantom
    auto *phantom = app.add_subcommand("phantom", "Write a synthetic source/target pair with a query manifest");
    std::string p_out;
    uint64_t p_seed = 1;
    std::vector<double> p_shift{0, 0, 0};
    double p_warp = 0.0, p_wavelength = 120.0, p_noise = 0.0;
    size_t p_queries = 10;
    phantom->add_option("--out-dir", p_out)->required();
    phantom->add_option("--seed", p_seed);
    phantom->add_option("--shift", p_shift, "Target content translation in mm")->expected(3);
    phantom->add_option("--warp-amplitude", p_warp, "Smooth warp amplitude in mm (0 = none)");
    phantom->add_option("--warp-wavelength", p_wavelength, "Shortest warp wavelength in mm");
    phantom->add_option("--noise", p_noise, "Gaussian noise sigma");
    phantom->add_option("--queries", p_queries, "Query pairs written to manifest.jsonl");

    // decode
    auto *decode = app.add_subcommand("decode", "Render one descriptor part as a PNG");
    std::string d_volume, d_out;
    std::vector<double> d_point;
    size_t d_part = 0;
    double d_scale = 1.0, d_resolution = 1.0;
    decode->add_option("--volume", d_volume)->required();
    decode->add_option("--point", d_point)->expected(3)->required();
    decode->add_option("--part", d_part, "Descriptor part index");
    decode->add_option("--scale", d_scale);
    decode->add_option("--resolution", d_resolution, "Output pixel size in mm");
    decode->add_option("--out", d_out, "PNG path")->required();
    add_common(decode, common);

    // convert-csv
    auto *convert = app.add_subcommand("convert-csv", "Convert an annotation CSV into a pair manifest");
    std::string c_csv, c_out;
    CsvColumns cols;
    std::string c_base;
    convert->add_option("--csv", c_csv)->required();
    convert->add_option("--out", c_out, "Manifest path (JSON lines)")->required();
    convert->add_option("--id-column", cols.id);
    convert->add_option("--source-column", cols.source);
    convert->add_option("--target-column", cols.target);
    convert->add_option("--query-columns", cols.query)->expected(3);
    convert->add_option("--truth-columns", cols.truth)->expected(3);
    convert->add_option("--tag-column", cols.tag);
    convert->add_option("--base-dir", c_base, "Prefix for relative volume paths");
    convert->add_flag("--voxel-coordinates", cols.voxel_coordinates, "Coordinates are voxel indices");

    auto *config_cmd = app.add_subcommand("config", "Print the effective matcher configuration");
    add_common(config_cmd, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*config_cmd) {
            print_json(to_json(make_config(common)));
            return 0;
        }
        if (*match) {
            const MatcherConfig config = make_config(common);
            const Volume source = load_volume(m_source);
            const Volume target = load_volume(m_target);
            print_json(to_json(run_matcher(source, to_vec(m_query), target, config), m_trace));
            return 0;
        }
        if (*eval) {
            const MatcherConfig config = make_config(common);
            const PairManifest manifest = PairManifest::load_jsonl(e_manifest);
            EvalOptions opts;
            opts.workers = e_workers;
            opts.record_timing = !e_no_timing;
            const EvalReport report = run_eval(manifest, config, opts);
            write_eval_outputs(report, e_out, config, opts.record_timing);
            print_json(summary_json(report, opts.record_timing));
            return report.summary.failed > 0 ? 3 : 0;
        }
        if (*landmark) {
            const MatcherConfig config = make_config(common);
            const auto cohort = load_cohort_jsonl(l_cohort);
            EvalOptions opts;
            opts.workers = l_workers;
            const EvalReport report = landmark_cohort(l_template, to_vec(l_point), cohort, config, opts);
            write_eval_outputs(report, l_out, config, true);
            print_json(summary_json(report, true));
            return report.summary.failed > 0 ? 3 : 0;
        }
        if (*bench) {
            const MatcherConfig config = make_config(common);
            const Volume source = load_volume(b_source);
            const Volume target = load_volume(b_target);
            std::vector<double> seconds;
            MatchResult last;
            for (int i = 0; i < b_repeats; ++i) {
                last = run_matcher(source, to_vec(b_query), target, config);
                seconds.push_back(last.seconds);
            }
            double mean = 0.0, var = 0.0;
            for (double s : seconds) mean += s;
            mean /= static_cast<double>(seconds.size());
            for (double s : seconds) var += (s - mean) * (s - mean);
            const double stddev = seconds.size() > 1 ? std::sqrt(var / static_cast<double>(seconds.size() - 1)) : 0.0;
            print_json({{"repeats", b_repeats},
                        {"variant", config.consistent.variant},
                        {"mean_seconds", mean},
                        {"stddev_seconds", stddev},
                        {"threads", compute_pool().size()},
                        {"point_mm", vec3_to_json(last.point)}});
            return 0;
        }
        if (*serve) {
            ServiceOptions opts;
            opts.volumes_dir = s_dir;
            opts.static_dir = s_static;
            opts.config = make_config(common);
            MatchService service(opts);
            httplib::Server server;
            service.register_routes(server);
            const size_t colon = s_bind.rfind(':');
            if (colon == std::string::npos) {
                return fail("invalid_bind", "--bind must be host:port");
            }
            const std::string host = s_bind.substr(0, colon);
            const int port = std::stoi(s_bind.substr(colon + 1));
            std::cerr << "serving " << service.volume_ids().size() << " volumes on " << host << ':' << port
                      << std::endl;
            if (!server.listen(host, port)) {
                return fail("bind_failed", "could not listen on " + s_bind);
            }
            return 0;
        }
        if (*phantom) {
            fs::create_directories(p_out);
            PhantomGeometry g;
            const PhantomModel model = PhantomModel::random(p_seed, phantom_extent(g));
            const Volume source = render_phantom(model, g, RenderOptions{Vec3{}, nullptr, p_noise, p_seed * 2});
            const Warp warp = Warp::random(p_seed * 13, p_warp, p_wavelength);
            RenderOptions ro;
            ro.shift = to_vec(p_shift);
            ro.warp = p_warp > 0.0 ? &warp : nullptr;
            ro.noise_sigma = p_noise;
            ro.noise_seed = p_seed * 2 + 1;
            const Volume target = render_phantom(model, g, ro);
            save_volume(source, fs::path(p_out) / "source.nii.gz");
            save_volume(target, fs::path(p_out) / "target.nii.gz");
            PairManifest m;
            size_t i = 0;
            for (const QueryPair &qp : sample_queries(model, source, target, ro, p_queries, p_seed + 1000)) {
                m.entries.push_back({std::to_string(i++), "source.nii.gz", "target.nii.gz", qp.query, qp.truth, "phantom"});
            }
            m.save_jsonl(fs::path(p_out) / "manifest.jsonl");
            print_json({{"source", (fs::path(p_out) / "source.nii.gz").string()},
                        {"target", (fs::path(p_out) / "target.nii.gz").string()},
                        {"manifest", (fs::path(p_out) / "manifest.jsonl").string()},
                        {"queries", m.entries.size()}});
            return 0;
        }
        if (*decode) {
            const MatcherConfig config = make_config(common);
            const Volume volume = load_volume(d_volume);
            const DescriptorSpec &spec = config.search.spec;
            if (d_part >= spec.part_configs().size()) {
                return fail("invalid_part", "descriptor has " + std::to_string(spec.part_configs().size()) + " parts");
            }
            const Descriptor d = sample_descriptor(volume, to_vec(d_point), spec, d_scale);
            const DecodedImage img = decode_descriptor(d, spec, d_part, d_resolution);
            SliceImage out;
            out.width = static_cast<size_t>(img.width);
            out.height = static_cast<size_t>(img.height);
            for (float v : img.pixels) {
                out.pixels.push_back(static_cast<uint8_t>(std::lround(std::clamp(v / kIntensityMax * 255.0, 0.0, 255.0))));
            }
            std::ofstream os(d_out, std::ios::binary);
            os << encode_png(out);
            if (!os) {
                return fail("write_failed", "cannot write " + d_out);
            }
            print_json({{"out", d_out}, {"width", img.width}, {"height", img.height}, {"resolution_mm", d_resolution}});
            return 0;
        }
        if (*convert) {
            cols.base_dir = c_base;
            const PairManifest m = manifest_from_csv(c_csv, cols);
            m.save_jsonl(c_out);
            print_json({{"out", c_out}, {"entries", m.entries.size()}});
            return 0;
        }
    } catch (const VolumeError &e) {
        return fail("volume_error", e.what());
    } catch (const SearchError &e) {
        return fail("precondition_failed", e.what());
    } catch (const ServiceError &e) {
        return fail(e.code, e.what());
    } catch (const std::invalid_argument &e) {
        return fail("invalid_argument", e.what());
    } catch (const std::exception &e) {
        return fail("error", e.what());
    }
    return 0;
}

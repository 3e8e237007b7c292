#include "doctest.h"

#include <future>
#include <thread>

#include "httplib.h"

#include "cpm/phantom.hpp"
#include "cpm/service.hpp"
#include "oracles.hpp"

using namespace cpm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path dir = oracle::temp_dir("service");
    PhantomModel model;
    Volume volume;
    std::unique_ptr<MatchService> service;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    Fixture() {
        PhantomGeometry g;
        g.dims = {40, 36, 30};
        g.spacing = {2, 2, 2.5};
        model = PhantomModel::random(41, phantom_extent(g));
        volume = render_phantom(model, g);
        save_volume(volume, dir / "a.nii.gz");
        save_volume(volume, dir / "b.mhd");
        {
            std::ofstream os(dir / "notes.txt");
            os << "ignored";
        }
        ServiceOptions o;
        o.volumes_dir = dir;
        o.config.consistent.variant = 3;
        service = std::make_unique<MatchService>(o);
        service->register_routes(server);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Fixture() {
        server.stop();
        thread.join();
        fs::remove_all(dir);
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

} // namespace

TEST_CASE("slice extraction and window/level") {
    WorldFrame f;
    std::vector<Intensity> v(4 * 3 * 2);
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Intensity>(i * 100);
    const Volume vol({4, 3, 2}, f, v);
    const SliceImage z = extract_slice(vol, SliceAxis::Z, 1, 0, 4096);
    CHECK(z.width == 4);
    CHECK(z.height == 3);
    CHECK(z.pixels[0] == std::lround(1200 * 255.0 / 4096));
    const SliceImage x = extract_slice(vol, SliceAxis::X, 3, 1000, 2000);
    CHECK(x.width == 3);
    CHECK(x.height == 2);
    CHECK(x.pixels[0] == 0);             // 300 below the window
    CHECK(x.pixels[1 * 3 + 2] == 255);   // voxel (3,2,1) = 2300 above the window
    CHECK(x.pixels[0 * 3 + 2] == std::lround((1100 - 1000) * 255.0 / 1000));
    CHECK_THROWS_AS(extract_slice(vol, SliceAxis::Y, 3, 0, 1), ServiceError);
    CHECK_THROWS_AS(extract_slice(vol, SliceAxis::Y, -1, 0, 1), ServiceError);
    CHECK_THROWS_AS(extract_slice(vol, SliceAxis::Y, 0, 5, 5), ServiceError);
    const std::string png = encode_png(z);
    CHECK(png.substr(1, 3) == "PNG");
}

TEST_CASE("volume ids and collisions") {
    CHECK(volume_id_for("x/ct_01.nii.gz") == "ct_01");
    CHECK(volume_id_for("ct.mhd") == "ct");
    CHECK(volume_id_for("ct.raw") == "");
    const fs::path dir = oracle::temp_dir("collide");
    WorldFrame f;
    const Volume v({2, 2, 2}, f, std::vector<Intensity>(8, 1));
    save_volume(v, dir / "a.nii");
    save_volume(v, dir / "a.mhd");
    ServiceOptions o;
    o.volumes_dir = dir;
    CHECK_THROWS_AS(MatchService{o}, ServiceError);
    fs::remove_all(dir);
}

TEST_CASE("HTTP endpoints") {
    Fixture fx;
    auto cli = fx.client();

    SUBCASE("GET /volumes") {
        auto res = cli.Get("/volumes");
        REQUIRE(res);
        CHECK(res->status == 200);
        const json j = json::parse(res->body);
        REQUIRE(j.size() == 2);
        CHECK(j[0]["id"] == "a");
        CHECK(j[0]["dims"] == json::array({40, 36, 30}));
        CHECK(j[0]["spacing"][2] == 2.5);
        CHECK(j[0]["frame"]["label"] == "RAS");
        CHECK(j[1]["frame"]["label"] == "LPS");
    }
    SUBCASE("GET /slice") {
        auto res = cli.Get("/slice?volume=a&axis=y&index=10&wl_low=0&wl_high=2000");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->get_header_value("Content-Type") == "image/png");
        const std::string expect = encode_png(extract_slice(fx.volume, SliceAxis::Y, 10, 0, 2000));
        CHECK(res->body == expect);
        // PNG IHDR width/height are big-endian at bytes 16..23.
        auto be32 = [&](size_t off) {
            const auto *b = reinterpret_cast<const unsigned char *>(res->body.data() + off);
            return (b[0] << 24) | (b[1] << 16) | (b[2] << 8) | b[3];
        };
        CHECK(be32(16) == 40);
        CHECK(be32(20) == 30);

        CHECK(cli.Get("/slice?volume=a&axis=z&index=30")->status == 400);
        CHECK(cli.Get("/slice?volume=a&axis=w&index=0")->status == 400);
        CHECK(cli.Get("/slice?volume=a&axis=z&index=abc")->status == 400);
        CHECK(cli.Get("/slice?volume=a&axis=z")->status == 400);
        auto missing = cli.Get("/slice?volume=zzz&axis=z&index=0");
        CHECK(missing->status == 404);
        CHECK(json::parse(missing->body)["error"]["code"] == "unknown_volume");
    }
    SUBCASE("POST /match") {
        const Vec3 q = sample_queries(fx.model, fx.volume, fx.volume, {}, 1, 42)[0].query;
        const json req = {{"source_id", "a"}, {"target_id", "b"}, {"point_mm", {q.x, q.y, q.z}}, {"variant", 13}};
        auto res = cli.Post("/match", req.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 200);
        const json j = json::parse(res->body);
        CHECK(distance(vec3_from_json(j["point_mm"]), q) <= 1.0);
        CHECK(j["similarity"].get<double>() >= 0.0);
        CHECK(j["similarity"].get<double>() <= 1.0);
        CHECK(j["elapsed_seconds"].get<double>() >= 0.0);
        CHECK(!j.contains("trace"));

        auto traced = cli.Post("/match?trace=1", req.dump(), "application/json");
        CHECK(json::parse(traced->body)["trace"].size() == 5);

        json v1 = req;
        v1["variant"] = 1;
        const json j1 = json::parse(cli.Post("/match", v1.dump(), "application/json")->body);
        CHECK(j1["mean_consistency_mm"].is_null());

        json bad = req;
        bad["variant"] = 5;
        CHECK(cli.Post("/match", bad.dump(), "application/json")->status == 400);
        bad = req;
        bad["source_id"] = "nope";
        CHECK(cli.Post("/match", bad.dump(), "application/json")->status == 404);
        bad = req;
        bad["point_mm"] = {1e6, 0, 0};
        CHECK(cli.Post("/match", bad.dump(), "application/json")->status == 400);
        CHECK(cli.Post("/match", "{not json", "application/json")->status == 400);
        CHECK(cli.Post("/match", R"({"source_id": "a"})", "application/json")->status == 400);
    }
    SUBCASE("concurrent identical requests give identical answers") {
        const Vec3 q = sample_queries(fx.model, fx.volume, fx.volume, {}, 1, 43)[0].query;
        const json req = {{"source_id", "a"}, {"target_id", "b"}, {"point_mm", {q.x, q.y, q.z}}, {"variant", 3}};
        std::vector<std::future<std::string>> futures;
        for (int i = 0; i < 8; ++i)
            futures.push_back(std::async(std::launch::async, [&] {
                auto c = fx.client();
                c.set_read_timeout(300, 0);
                auto r = c.Post("/match", req.dump(), "application/json");
                if (!r || r->status != 200) return std::string("failed");
                return json::parse(r->body)["point_mm"].dump();
            }));
        std::vector<std::string> answers;
        for (auto &f : futures) answers.push_back(f.get());
        for (const auto &a : answers) {
            CHECK(a != "failed");
            CHECK(a == answers[0]);
        }
    }
}

#include "cpm/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <png.h>

#include "httplib.h"

namespace cpm {

using nlohmann::json;
namespace fs = std::filesystem;

SliceAxis slice_axis_from_string(const std::string &name) {
    if (name == "x") return SliceAxis::X;
    if (name == "y") return SliceAxis::Y;
    if (name == "z") return SliceAxis::Z;
    throw ServiceError(400, "invalid_axis", "axis must be x, y or z");
}

SliceImage extract_slice(const Volume &volume, SliceAxis axis, int64_t index, double wl_low, double wl_high) {
    const Dims &d = volume.dims();
    const int64_t depth = axis == SliceAxis::X ? d.x : axis == SliceAxis::Y ? d.y : d.z;
    if (index < 0 || index >= depth) {
        throw ServiceError(400, "invalid_index", "slice index " + std::to_string(index) + " outside [0, " +
                                                     std::to_string(depth - 1) + "]");
    }
    if (!(wl_high > wl_low)) {
        throw ServiceError(400, "invalid_window", "wl_high must exceed wl_low");
    }
    SliceImage img;
    img.width = static_cast<size_t>(axis == SliceAxis::X ? d.y : d.x);
    img.height = static_cast<size_t>(axis == SliceAxis::Z ? d.y : d.z);
    img.pixels.resize(img.width * img.height);
    const double gain = 255.0 / (wl_high - wl_low);
    for (size_t r = 0; r < img.height; ++r) {
        for (size_t c = 0; c < img.width; ++c) {
            const auto u = static_cast<int64_t>(c), v = static_cast<int64_t>(r);
            Intensity value = 0;
            switch (axis) {
            case SliceAxis::X: value = volume.at(index, u, v); break;
            case SliceAxis::Y: value = volume.at(u, index, v); break;
            case SliceAxis::Z: value = volume.at(u, v, index); break;
            }
            const double g = std::clamp((value - wl_low) * gain, 0.0, 255.0);
            img.pixels[r * img.width + c] = static_cast<uint8_t>(std::lround(g));
        }
    }
    return img;
}

std::string encode_png(const SliceImage &image) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw std::runtime_error("png_create_write_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    std::string out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw std::runtime_error("PNG encoding failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            static_cast<std::string *>(png_get_io_ptr(p))->append(reinterpret_cast<const char *>(data), len);
        },
        nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (size_t r = 0; r < image.height; ++r) {
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + r * image.width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::string volume_id_for(const fs::path &path) {
    std::string name = path.filename().string();
    for (const char *ext : {".nii.gz", ".nii", ".mhd"}) {
        const size_t n = std::strlen(ext);
        if (name.size() > n && name.compare(name.size() - n, n, ext) == 0) {
            return name.substr(0, name.size() - n);
        }
    }
    return {};
}

MatchService::MatchService(ServiceOptions options) : options_(std::move(options)) {
    if (!fs::is_directory(options_.volumes_dir)) {
        throw ServiceError(500, "bad_volumes_dir", "not a directory: " + options_.volumes_dir.string());
    }
    std::vector<fs::path> files;
    for (const auto &e : fs::directory_iterator(options_.volumes_dir)) {
        if (e.is_regular_file() && !volume_id_for(e.path()).empty()) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path &f : files) {
        const std::string id = volume_id_for(f);
        if (slots_.count(id)) {
            throw ServiceError(500, "duplicate_volume_id",
                               "volume id '" + id + "' is shared by " + slots_[id]->path.filename().string() +
                                   " and " + f.filename().string());
        }
        auto slot = std::make_unique<Slot>();
        slot->path = f;
        slots_.emplace(id, std::move(slot));
    }
}

std::vector<std::string> MatchService::volume_ids() const {
    std::vector<std::string> ids;
    for (const auto &kv : slots_) {
        ids.push_back(kv.first);
    }
    return ids;
}

std::shared_ptr<const Volume> MatchService::volume(const std::string &id) {
    const auto it = slots_.find(id);
    if (it == slots_.end()) {
        throw ServiceError(404, "unknown_volume", "unknown volume '" + id + "'");
    }
    Slot &slot = *it->second;
    std::call_once(slot.once, [&] {
        try {
            slot.volume = std::make_shared<const Volume>(load_volume(slot.path));
        } catch (const std::exception &e) {
            slot.error = e.what();
        }
    });
    if (!slot.volume) {
        throw ServiceError(500, "volume_load_failed", "volume '" + id + "' could not be loaded: " + slot.error);
    }
    return slot.volume;
}

json MatchService::list_volumes() {
    json out = json::array();
    for (const std::string &id : volume_ids()) {
        const auto v = volume(id);
        const WorldFrame &f = v->frame();
        json axes = json::array();
        for (int c = 0; c < 3; ++c) {
            axes.push_back(vec3_to_json(f.axes.cols[c]));
        }
        out.push_back({{"id", id},
                       {"dims", {v->dims().x, v->dims().y, v->dims().z}},
                       {"spacing", vec3_to_json(f.spacing)},
                       {"frame", {{"label", to_string(f.label)}, {"origin", vec3_to_json(f.origin)}, {"axes", axes}}}});
    }
    return out;
}

namespace {

double parse_number(const std::string &text, double fallback, const char *name) {
    if (text.empty()) {
        return fallback;
    }
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used != text.size() || !std::isfinite(v)) {
        throw ServiceError(400, std::string("invalid_") + name, std::string(name) + " is not a number");
    }
    return v;
}

} // namespace

std::string MatchService::slice_png(const std::string &id, const std::string &axis, const std::string &index,
                                   const std::string &wl_low, const std::string &wl_high) {
    const auto v = volume(id);
    const SliceAxis a = slice_axis_from_string(axis);
    if (index.empty()) {
        throw ServiceError(400, "invalid_index", "index is required");
    }
    const double idx = parse_number(index, 0.0, "index");
    if (idx != std::floor(idx) || std::abs(idx) > 1e9) {
        throw ServiceError(400, "invalid_index", "index must be an integer");
    }
    const double lo = parse_number(wl_low, 0.0, "wl_low");
    const double hi = parse_number(wl_high, kIntensityMax, "wl_high");
    return encode_png(extract_slice(*v, a, static_cast<int64_t>(idx), lo, hi));
}

json MatchService::match(const json &request, bool include_trace) {
    if (!request.is_object()) {
        throw ServiceError(400, "invalid_request", "request body must be a JSON object");
    }
    std::string source_id, target_id;
    Vec3 point;
    int variant = options_.config.consistent.variant;
    try {
        source_id = request.at("source_id").get<std::string>();
        target_id = request.at("target_id").get<std::string>();
        point = vec3_from_json(request.at("point_mm"));
        if (request.contains("variant")) {
            variant = request["variant"].get<int>();
        }
    } catch (const std::exception &e) {
        throw ServiceError(400, "invalid_request", e.what());
    }
    if (variant != 1 && variant != 3 && variant != 7 && variant != 13) {
        throw ServiceError(400, "invalid_variant", "variant must be one of 1, 3, 7, 13");
    }
    const auto source = volume(source_id);
    const auto target = volume(target_id);
    MatcherConfig config = options_.config;
    if (variant != config.consistent.variant) {
        config.consistent.variant = variant;
        config.consistent.weighting.reset();
    }
    try {
        return to_json(run_matcher(*source, point, *target, config), include_trace);
    } catch (const SearchError &e) {
        throw ServiceError(400, "invalid_query", e.what());
    }
}

void MatchService::register_routes(httplib::Server &server) {
    auto fail = [](httplib::Response &res, int status, const std::string &code, const std::string &message) {
        res.status = status;
        res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
    };
    auto guarded = [fail](auto handler) {
        return [handler, fail](const httplib::Request &req, httplib::Response &res) {
            try {
                handler(req, res);
            } catch (const ServiceError &e) {
                fail(res, e.status, e.code, e.what());
            } catch (const std::exception &) {
                fail(res, 500, "internal_error", "internal error");
            }
        };
    };
    server.Get("/volumes", guarded([this](const httplib::Request &, httplib::Response &res) {
                   res.set_content(list_volumes().dump(), "application/json");
               }));
    server.Get("/slice", guarded([this](const httplib::Request &req, httplib::Response &res) {
                   res.set_content(slice_png(req.get_param_value("volume"), req.get_param_value("axis"),
                                             req.get_param_value("index"), req.get_param_value("wl_low"),
                                             req.get_param_value("wl_high")),
                                   "image/png");
               }));
    server.Post("/match", guarded([this](const httplib::Request &req, httplib::Response &res) {
                    json body;
                    try {
                        body = json::parse(req.body);
                    } catch (const std::exception &) {
                        throw ServiceError(400, "invalid_json", "request body is not valid JSON");
                    }
                    const std::string trace = req.get_param_value("trace");
                    res.set_content(match(body, trace == "1" || trace == "true").dump(), "application/json");
                }));
    if (!options_.static_dir.empty()) {
        server.set_mount_point("/", options_.static_dir.string());
    }
}

} // namespace cpm

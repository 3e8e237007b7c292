// HTTP service over a directory of volumes: listing, window/level slices and matching.
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpm/config.hpp"

namespace httplib {
class Server;
}

namespace cpm {

enum class SliceAxis { X, Y, Z };

SliceAxis slice_axis_from_string(const std::string &name);

struct SliceImage {
    size_t width = 0;
    size_t height = 0;
    std::vector<uint8_t> pixels; // row-major, 8-bit grayscale
};

// Orthogonal voxel slice with a linear window: wl_low maps to 0, wl_high to 255.
// axis z gives an nx-by-ny image, y gives nx-by-nz, x gives ny-by-nz.
SliceImage extract_slice(const Volume &volume, SliceAxis axis, int64_t index, double wl_low, double wl_high);

std::string encode_png(const SliceImage &image);

// Volume id for a file name: the name without .nii, .nii.gz or .mhd.
std::string volume_id_for(const std::filesystem::path &path);

struct ServiceError : std::runtime_error {
    ServiceError(int status, std::string code, const std::string &message)
        : std::runtime_error(message), status(status), code(std::move(code)) {}
    int status;
    std::string code;
};

struct ServiceOptions {
    std::filesystem::path volumes_dir;
    std::filesystem::path static_dir; // optional viewer bundle
    MatcherConfig config;
};

class MatchService {
  public:
    // Scans volumes_dir; throws ServiceError when two files map to the same id.
    explicit MatchService(ServiceOptions options);

    std::vector<std::string> volume_ids() const;

    // Loaded on first use and cached read-only afterwards. 404 for unknown ids.
    std::shared_ptr<const Volume> volume(const std::string &id);

    nlohmann::json list_volumes();
    std::string slice_png(const std::string &id, const std::string &axis, const std::string &index,
                          const std::string &wl_low, const std::string &wl_high);
    nlohmann::json match(const nlohmann::json &request, bool include_trace);

    void register_routes(httplib::Server &server);

  private:
    struct Slot {
        std::filesystem::path path;
        std::once_flag once;
        std::shared_ptr<const Volume> volume;
        std::string error;
    };
    ServiceOptions options_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
};

} // namespace cpm

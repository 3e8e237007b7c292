#include "cpm/volume.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace cpm {

std::string to_string(FrameLabel label) {
    switch (label) {
    case FrameLabel::RAS: return "RAS";
    case FrameLabel::LPS: return "LPS";
    case FrameLabel::Unknown: break;
    }
    return "unknown";
}

void WorldFrame::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw VolumeError("voxel spacing must be positive and finite");
        }
    }
    if (!origin.finite()) {
        throw VolumeError("frame origin must be finite");
    }
    for (int c = 0; c < 3; ++c) {
        for (int d = 0; d < 3; ++d) {
            const double expected = (c == d) ? 1.0 : 0.0;
            if (std::abs(axes.cols[c].dot(axes.cols[d]) - expected) > 1e-6) {
                throw VolumeError("frame axes are not orthonormal");
            }
        }
    }
}

Vec3 WorldFrame::voxel_to_world(const Vec3 &ijk) const {
    return origin + axes * Vec3{ijk.x * spacing.x, ijk.y * spacing.y, ijk.z * spacing.z};
}

Vec3 WorldFrame::world_delta_to_voxel(const Vec3 &d) const {
    const Vec3 r = axes.transpose_times(d);
    return {r.x / spacing.x, r.y / spacing.y, r.z / spacing.z};
}

Vec3 WorldFrame::world_to_voxel(const Vec3 &p) const { return world_delta_to_voxel(p - origin); }

Volume::Volume(Dims dims, WorldFrame frame, std::vector<Intensity> voxels)
    : dims_(dims), frame_(frame), voxels_(std::move(voxels)) {
    if (dims_.x <= 0 || dims_.y <= 0 || dims_.z <= 0) {
        throw VolumeError("volume dimensions must be positive");
    }
    if (static_cast<int64_t>(voxels_.size()) != dims_.count()) {
        throw VolumeError("voxel count does not match dimensions");
    }
    frame_.validate();
    if (std::any_of(voxels_.begin(), voxels_.end(), [](Intensity v) { return v > kIntensityMax; })) {
        throw VolumeError("voxel intensity above clip range");
    }
}

Volume Volume::from_raw(Dims dims, WorldFrame frame, std::span<const double> raw) {
    std::vector<Intensity> voxels(raw.size());
    std::transform(raw.begin(), raw.end(), voxels.begin(), [](double v) -> Intensity {
        if (!(v > 0.0)) {
            return 0;
        }
        if (v >= kIntensityMax) {
            return kIntensityMax;
        }
        return static_cast<Intensity>(std::lround(v));
    });
    return Volume(dims, frame, std::move(voxels));
}

Intensity Volume::sample_at(const Vec3 &p) const { return sample_voxel(world_to_voxel(p)); }

bool Volume::contains(const Vec3 &p) const {
    const Vec3 v = world_to_voxel(p);
    return v.x >= -0.5 && v.x < static_cast<double>(dims_.x) - 0.5 && v.y >= -0.5 &&
           v.y < static_cast<double>(dims_.y) - 0.5 && v.z >= -0.5 && v.z < static_cast<double>(dims_.z) - 0.5;
}

Box Volume::bounds() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Box box{{inf, inf, inf}, {-inf, -inf, -inf}};
    for (int corner = 0; corner < 8; ++corner) {
        const Vec3 ijk{(corner & 1) ? static_cast<double>(dims_.x - 1) : 0.0,
                       (corner & 2) ? static_cast<double>(dims_.y - 1) : 0.0,
                       (corner & 4) ? static_cast<double>(dims_.z - 1) : 0.0};
        const Vec3 p = voxel_to_world(ijk);
        for (int a = 0; a < 3; ++a) {
            box.lo[a] = std::min(box.lo[a], p[a]);
            box.hi[a] = std::max(box.hi[a], p[a]);
        }
    }
    return box;
}

VolumeFormat format_from_path(const std::filesystem::path &path) {
    std::string name = path.filename().string();
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".nii") || ends_with(".nii.gz")) {
        return VolumeFormat::Nifti1;
    }
    if (ends_with(".mhd")) {
        return VolumeFormat::Mhd;
    }
    throw VolumeError("unrecognised volume extension: " + path.string());
}

Volume load_volume(const std::filesystem::path &path) { return load_volume(path, format_from_path(path)); }

void save_volume(const Volume &volume, const std::filesystem::path &path) {
    save_volume(volume, path, format_from_path(path));
}

} // namespace cpm

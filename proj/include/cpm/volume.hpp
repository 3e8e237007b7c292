// Volumes with a world frame, clipped intensities and nearest-voxel lookup.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpm/geometry.hpp"

namespace cpm {

using Intensity = uint16_t;

inline constexpr Intensity kIntensityMax = 4096;
inline constexpr Intensity kFillValue = 0;

enum class FrameLabel { RAS, LPS, Unknown };

std::string to_string(FrameLabel label);

struct VolumeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WorldFrame {
    Vec3 origin;
    Vec3 spacing{1.0, 1.0, 1.0};
    Mat3 axes = Mat3::identity();
    FrameLabel label = FrameLabel::Unknown;

    // Throws VolumeError on non-positive spacing or non-orthonormal axes.
    void validate() const;

    Vec3 voxel_to_world(const Vec3 &ijk) const;
    Vec3 world_to_voxel(const Vec3 &p) const;

    // Linear part of world_to_voxel, for transforming displacements.
    Vec3 world_delta_to_voxel(const Vec3 &d) const;
};

// Immutable after construction. Voxels are stored x-fastest: index = (k*ny + j)*nx + i.
class Volume {
  public:
    Volume() = default;

    // Voxels must already lie in [0, kIntensityMax].
    Volume(Dims dims, WorldFrame frame, std::vector<Intensity> voxels);

    // Rounds raw values to integers and clamps into [0, kIntensityMax]; negatives and NaN map to 0.
    static Volume from_raw(Dims dims, WorldFrame frame, std::span<const double> raw);

    const Dims &dims() const { return dims_; }
    const WorldFrame &frame() const { return frame_; }
    std::span<const Intensity> voxels() const { return voxels_; }

    Intensity at(int64_t i, int64_t j, int64_t k) const { return voxels_[static_cast<size_t>((k * dims_.y + j) * dims_.x + i)]; }

    Vec3 world_to_voxel(const Vec3 &p) const { return frame_.world_to_voxel(p); }
    Vec3 voxel_to_world(const Vec3 &ijk) const { return frame_.voxel_to_world(ijk); }

    // Nearest-voxel lookup; kFillValue when the rounded index is outside dims.
    Intensity sample_at(const Vec3 &p) const;

    // Lookup at a continuous voxel index (rounded half up).
    Intensity sample_voxel(const Vec3 &ijk) const {
        const double hx = static_cast<double>(dims_.x) - 0.5;
        const double hy = static_cast<double>(dims_.y) - 0.5;
        const double hz = static_cast<double>(dims_.z) - 0.5;
        if (!(ijk.x >= -0.5 && ijk.x < hx && ijk.y >= -0.5 && ijk.y < hy && ijk.z >= -0.5 && ijk.z < hz)) {
            return kFillValue;
        }
        const auto i = static_cast<int64_t>(ijk.x + 0.5);
        const auto j = static_cast<int64_t>(ijk.y + 0.5);
        const auto k = static_cast<int64_t>(ijk.z + 0.5);
        return voxels_[static_cast<size_t>((k * dims_.y + j) * dims_.x + i)];
    }

    // True when p rounds to a voxel inside the volume.
    bool contains(const Vec3 &p) const;

    // World-space axis-aligned box around all voxel centres.
    Box bounds() const;

  private:
    Dims dims_;
    WorldFrame frame_;
    std::vector<Intensity> voxels_;
};

enum class VolumeFormat { Nifti1, Mhd };

// Picks the format from the extension: .nii, .nii.gz, .mhd.
VolumeFormat format_from_path(const std::filesystem::path &path);

Volume load_volume(const std::filesystem::path &path, VolumeFormat format);
Volume load_volume(const std::filesystem::path &path);

// Writes int16 voxels. NIfTI output is gzip-compressed when the name ends with .gz.
void save_volume(const Volume &volume, const std::filesystem::path &path, VolumeFormat format);
void save_volume(const Volume &volume, const std::filesystem::path &path);

} // namespace cpm

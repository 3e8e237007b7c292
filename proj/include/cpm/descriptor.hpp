// Multi-resolution sparse descriptors: intensities looked up at fixed mm offsets around a point.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpm/geometry.hpp"
#include "cpm/volume.hpp"

namespace cpm {

enum class GridKind { Grid3d, PlaneXY, PlaneXZ, PlaneYZ };

std::string to_string(GridKind kind);
GridKind grid_kind_from_string(const std::string &name);

struct SpecError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PartConfig {
    GridKind kind = GridKind::Grid3d;
    int extent = 7;
    double spacing_mm = 8.0;
};

// Offsets are centred on zero and enumerated z-major, then y, then x.
struct OffsetGrid {
    GridKind kind = GridKind::Grid3d;
    int extent = 7;
    double spacing_mm = 8.0;
    std::vector<Vec3> offsets;

    size_t size() const { return offsets.size(); }
};

// Throws SpecError on even extent or non-positive spacing.
OffsetGrid make_grid(const PartConfig &part);

class DescriptorSpec {
  public:
    DescriptorSpec() = default;

    // Throws SpecError on an empty part list or invalid part.
    static DescriptorSpec make(std::span<const PartConfig> parts);

    // 7^3 grids at 8, 20, 48, 128 mm; 7x7 planes (xy, xz, yz) at 6 mm; a 7^3 grid at 80 mm. 1862 samples.
    static DescriptorSpec default_spec();

    const std::vector<OffsetGrid> &parts() const { return parts_; }
    std::vector<PartConfig> part_configs() const;
    size_t total_length() const { return all_offsets_.size(); }

    // All part offsets concatenated in part order.
    const std::vector<Vec3> &offsets() const { return all_offsets_; }

    // Index of the first sample of part i in the concatenated layout.
    size_t part_begin(size_t i) const { return part_begin_.at(i); }

    DescriptorSpec scaled(double factor) const;

  private:
    std::vector<OffsetGrid> parts_;
    std::vector<Vec3> all_offsets_;
    std::vector<size_t> part_begin_;
};

struct Descriptor {
    std::vector<float> values;
    Vec3 point;
    double scale = 1.0;
};

// Offsets of a spec at a fixed scale, pre-transformed into the voxel space of one frame.
// Sampling a point then costs one world-to-voxel transform plus one add and one lookup per sample.
class DescriptorSampler {
  public:
    DescriptorSampler(const DescriptorSpec &spec, const WorldFrame &frame, double scale);

    size_t length() const { return ox_.size(); }
    double scale() const { return scale_; }

    // out.size() must equal length().
    void sample(const Volume &volume, const Vec3 &p, std::span<float> out) const;

    // Same lookups as sample(), writing raw intensities.
    void sample_raw(const Volume &volume, const Vec3 &p, std::span<Intensity> out) const;

  private:
    template <typename Out> void sample_into(const Volume &volume, const Vec3 &p, Out *out) const;

    double scale_;
    std::vector<double> ox_, oy_, oz_;
    // Each sample's voxel-space offset component, deduplicated per axis: sample k uses
    // axis_values_[a][axis_index_[a][k]] == o{x,y,z}_[k] exactly.
    std::array<std::vector<double>, 3> axis_values_;
    std::array<std::vector<uint16_t>, 3> axis_index_;
};

// values[k] = nearest lookup at p + scale * offsets[k]. Throws SpecError when scale <= 0.
Descriptor sample_descriptor(const Volume &volume, const Vec3 &p, const DescriptorSpec &spec, double scale);

struct DecodedImage {
    int width = 0;
    int height = 0;
    double resolution_mm = 0.0;
    std::vector<float> pixels; // row-major, row = second in-plane axis

    float at(int u, int v) const { return pixels[static_cast<size_t>(v) * width + u]; }
};

// Nearest-sample rendering of one part's centre slice (z = 0 for 3D grids) on a regular raster.
DecodedImage decode_descriptor(const Descriptor &d, const DescriptorSpec &spec, size_t part_index,
                               double out_resolution_mm);

} // namespace cpm

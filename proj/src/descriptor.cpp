#include "cpm/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpm {

std::string to_string(GridKind kind) {
    switch (kind) {
    case GridKind::Grid3d: return "grid3d";
    case GridKind::PlaneXY: return "plane_xy";
    case GridKind::PlaneXZ: return "plane_xz";
    case GridKind::PlaneYZ: return "plane_yz";
    }
    return "grid3d";
}

GridKind grid_kind_from_string(const std::string &name) {
    if (name == "grid3d") return GridKind::Grid3d;
    if (name == "plane_xy") return GridKind::PlaneXY;
    if (name == "plane_xz") return GridKind::PlaneXZ;
    if (name == "plane_yz") return GridKind::PlaneYZ;
    throw SpecError("unknown grid kind '" + name + "'");
}

OffsetGrid make_grid(const PartConfig &part) {
    if (part.extent < 1 || part.extent % 2 == 0) {
        throw SpecError("grid extent must be a positive odd number, got " + std::to_string(part.extent));
    }
    if (!(part.spacing_mm > 0.0) || !std::isfinite(part.spacing_mm)) {
        throw SpecError("grid spacing must be positive");
    }
    OffsetGrid g{part.kind, part.extent, part.spacing_mm, {}};
    const int h = part.extent / 2;
    const double s = part.spacing_mm;
    switch (part.kind) {
    case GridKind::Grid3d:
        g.offsets.reserve(static_cast<size_t>(part.extent) * part.extent * part.extent);
        for (int z = -h; z <= h; ++z)
            for (int y = -h; y <= h; ++y)
                for (int x = -h; x <= h; ++x)
                    g.offsets.push_back({x * s, y * s, z * s});
        break;
    case GridKind::PlaneXY:
        for (int y = -h; y <= h; ++y)
            for (int x = -h; x <= h; ++x)
                g.offsets.push_back({x * s, y * s, 0.0});
        break;
    case GridKind::PlaneXZ:
        for (int z = -h; z <= h; ++z)
            for (int x = -h; x <= h; ++x)
                g.offsets.push_back({x * s, 0.0, z * s});
        break;
    case GridKind::PlaneYZ:
        for (int z = -h; z <= h; ++z)
            for (int y = -h; y <= h; ++y)
                g.offsets.push_back({0.0, y * s, z * s});
        break;
    }
    return g;
}

DescriptorSpec DescriptorSpec::make(std::span<const PartConfig> parts) {
    if (parts.empty()) {
        throw SpecError("descriptor spec needs at least one part");
    }
    DescriptorSpec spec;
    for (const PartConfig &p : parts) {
        spec.part_begin_.push_back(spec.all_offsets_.size());
        spec.parts_.push_back(make_grid(p));
        const auto &o = spec.parts_.back().offsets;
        spec.all_offsets_.insert(spec.all_offsets_.end(), o.begin(), o.end());
    }
    return spec;
}

DescriptorSpec DescriptorSpec::default_spec() {
    const PartConfig parts[] = {
        {GridKind::Grid3d, 7, 8.0},   {GridKind::Grid3d, 7, 20.0},  {GridKind::Grid3d, 7, 48.0},
        {GridKind::Grid3d, 7, 128.0}, {GridKind::PlaneXY, 7, 6.0},  {GridKind::PlaneXZ, 7, 6.0},
        {GridKind::PlaneYZ, 7, 6.0},  {GridKind::Grid3d, 7, 80.0},
    };
    return make(parts);
}

std::vector<PartConfig> DescriptorSpec::part_configs() const {
    std::vector<PartConfig> out;
    for (const auto &g : parts_) {
        out.push_back({g.kind, g.extent, g.spacing_mm});
    }
    return out;
}

DescriptorSpec DescriptorSpec::scaled(double factor) const {
    auto cfg = part_configs();
    for (auto &p : cfg) {
        p.spacing_mm *= factor;
    }
    return make(cfg);
}

DescriptorSampler::DescriptorSampler(const DescriptorSpec &spec, const WorldFrame &frame, double scale)
    : scale_(scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw SpecError("descriptor scale must be positive");
    }
    const auto &offsets = spec.offsets();
    ox_.reserve(offsets.size());
    oy_.reserve(offsets.size());
    oz_.reserve(offsets.size());
    for (const Vec3 &o : offsets) {
        const Vec3 v = frame.world_delta_to_voxel(o * scale);
        ox_.push_back(v.x);
        oy_.push_back(v.y);
        oz_.push_back(v.z);
    }
    const std::vector<double> *comps[3] = {&ox_, &oy_, &oz_};
    for (int a = 0; a < 3; ++a) {
        std::vector<double> vals(comps[a]->begin(), comps[a]->end());
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        if (vals.size() > 65535) {
            throw SpecError("descriptor has too many distinct offsets");
        }
        axis_index_[a].reserve(comps[a]->size());
        for (double v : *comps[a]) {
            axis_index_[a].push_back(
                static_cast<uint16_t>(std::lower_bound(vals.begin(), vals.end(), v) - vals.begin()));
        }
        axis_values_[a] = std::move(vals);
    }
}

template <typename Out> void DescriptorSampler::sample_into(const Volume &volume, const Vec3 &p, Out *out) const {
    const Vec3 base = volume.world_to_voxel(p);
    const Dims &d = volume.dims();
    const int64_t stride[3] = {1, d.x, d.x * d.y};
    // Rounding is resolved once per distinct axis offset; an out-of-range axis contributes a large
    // negative term so that any sum involving it stays negative.
    constexpr int64_t kOutside = std::numeric_limits<int64_t>::min() / 4;
    thread_local std::array<std::vector<int64_t>, 3> linear;
    for (int a = 0; a < 3; ++a) {
        const auto &vals = axis_values_[a];
        auto &lin = linear[a];
        lin.resize(vals.size());
        const double lim = static_cast<double>(d[a]) - 0.5;
        for (size_t i = 0; i < vals.size(); ++i) {
            const double c = base[a] + vals[i];
            lin[i] = (c >= -0.5 && c < lim) ? static_cast<int64_t>(c + 0.5) * stride[a] : kOutside;
        }
    }
    const Intensity *vox = volume.voxels().data();
    const int64_t *lx = linear[0].data();
    const int64_t *ly = linear[1].data();
    const int64_t *lz = linear[2].data();
    const uint16_t *ix = axis_index_[0].data();
    const uint16_t *iy = axis_index_[1].data();
    const uint16_t *iz = axis_index_[2].data();
    const size_t n = ox_.size();
    for (size_t k = 0; k < n; ++k) {
        const int64_t idx = lx[ix[k]] + ly[iy[k]] + lz[iz[k]];
        out[k] = idx >= 0 ? static_cast<Out>(vox[idx]) : static_cast<Out>(kFillValue);
    }
}

void DescriptorSampler::sample(const Volume &volume, const Vec3 &p, std::span<float> out) const {
    sample_into(volume, p, out.data());
}

void DescriptorSampler::sample_raw(const Volume &volume, const Vec3 &p, std::span<Intensity> out) const {
    sample_into(volume, p, out.data());
}

Descriptor sample_descriptor(const Volume &volume, const Vec3 &p, const DescriptorSpec &spec, double scale) {
    const DescriptorSampler sampler(spec, volume.frame(), scale);
    Descriptor d{std::vector<float>(sampler.length()), p, scale};
    sampler.sample(volume, p, d.values);
    return d;
}

DecodedImage decode_descriptor(const Descriptor &d, const DescriptorSpec &spec, size_t part_index,
                               double out_resolution_mm) {
    if (part_index >= spec.parts().size()) {
        throw SpecError("descriptor part index out of range");
    }
    if (!(out_resolution_mm > 0.0)) {
        throw SpecError("decode resolution must be positive");
    }
    if (d.values.size() != spec.total_length()) {
        throw SpecError("descriptor length does not match spec");
    }
    const OffsetGrid &g = spec.parts()[part_index];
    const int h = g.extent / 2;
    const double pitch = g.spacing_mm * d.scale;
    const double half_span = h * pitch;
    const int n = static_cast<int>(std::floor(2.0 * half_span / out_resolution_mm + 1e-9)) + 1;

    DecodedImage img{n, n, out_resolution_mm, std::vector<float>(static_cast<size_t>(n) * n)};
    const size_t begin = spec.part_begin(part_index);
    const size_t e = static_cast<size_t>(g.extent);
    // For 3D grids the centre slice is the z = 0 layer, which starts after h full layers.
    const size_t slice_begin = begin + (g.kind == GridKind::Grid3d ? static_cast<size_t>(h) * e * e : 0);
    auto nearest = [&](double pos) {
        const long idx = std::lround(pos / pitch) + h;
        return static_cast<size_t>(std::clamp<long>(idx, 0, g.extent - 1));
    };
    for (int v = 0; v < n; ++v) {
        const size_t row = nearest(-half_span + v * out_resolution_mm);
        for (int u = 0; u < n; ++u) {
            const size_t col = nearest(-half_span + u * out_resolution_mm);
            img.pixels[static_cast<size_t>(v) * n + u] = d.values[slice_begin + row * e + col];
        }
    }
    return img;
}

} // namespace cpm

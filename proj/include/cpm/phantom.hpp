// Synthetic body-like phantoms for tests and demos: an ellipsoidal body with Gaussian blobs,
// intensity ramps and smooth texture, optionally translated or smoothly warped.
#pragma once

#include <cstdint>
#include <vector>

#include "cpm/geometry.hpp"
#include "cpm/volume.hpp"

namespace cpm {

struct Blob {
    Vec3 center;
    double radius_mm = 10.0;
    double amplitude = 500.0;
};

struct Wave {
    Vec3 k; // rad/mm
    double phase = 0.0;
    double amplitude = 0.0;
};

// Continuous intensity model in world mm.
struct PhantomModel {
    Vec3 body_center;
    Vec3 body_radii;
    double body_level = 900.0;
    Vec3 ramp; // intensity per mm inside the body
    std::vector<Blob> blobs;
    std::vector<Wave> texture;

    // Random model filling most of `extent`.
    static PhantomModel random(uint64_t seed, const Box &extent, int blob_count = 48);

    double value(const Vec3 &p) const;
};

// Smooth displacement field u(y) = sum of sinusoids; the warped image is I'(y) = I(y + u(y)).
struct Warp {
    std::vector<Wave> x, y, z;

    static Warp random(uint64_t seed, double amplitude_mm, double min_wavelength_mm = 60.0);

    Vec3 displacement(const Vec3 &p) const;
    // Solves y + u(y) = p by fixed-point iteration.
    Vec3 inverse(const Vec3 &p) const;
};

struct PhantomGeometry {
    Dims dims{96, 96, 64};
    Vec3 spacing{2.0, 2.0, 2.5};
    Vec3 origin;
};

struct RenderOptions {
    Vec3 shift;                  // content moves by +shift
    const Warp *warp = nullptr;  // applied after the shift
    double noise_sigma = 0.0;
    uint64_t noise_seed = 0;
};

Volume render_phantom(const PhantomModel &model, const PhantomGeometry &geometry, const RenderOptions &options = {});

// Where a source point lands in a volume rendered with `options`.
Vec3 phantom_truth(const Vec3 &source_point, const RenderOptions &options);

// World box of a geometry's voxel centres (identity axes).
Box phantom_extent(const PhantomGeometry &geometry);

struct QueryPair {
    Vec3 query;
    Vec3 truth;
};

// Uniform random source points inside the model's body whose true correspondence lies inside target.
std::vector<QueryPair> sample_queries(const PhantomModel &model, const Volume &source, const Volume &target,
                                      const RenderOptions &options, size_t n, uint64_t seed);

} // namespace cpm

#include "cpm/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cpm {

namespace {

Wave random_wave(std::mt19937_64 &rng, double min_wavelength, double max_wavelength, double amplitude) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 dir{g(rng), g(rng), g(rng)};
    dir = dir / std::max(dir.norm(), 1e-12);
    const double wavelength = min_wavelength + (max_wavelength - min_wavelength) * u(rng);
    return {dir * (2.0 * std::numbers::pi / wavelength), 2.0 * std::numbers::pi * u(rng), amplitude * (0.5 + u(rng))};
}

double sum_waves(const std::vector<Wave> &waves, const Vec3 &p) {
    double s = 0.0;
    for (const Wave &w : waves) {
        s += w.amplitude * std::sin(w.k.dot(p) + w.phase);
    }
    return s;
}

} // namespace

PhantomModel PhantomModel::random(uint64_t seed, const Box &extent, int blob_count) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PhantomModel m;
    const Vec3 size = extent.hi - extent.lo;
    m.body_center = (extent.lo + extent.hi) * 0.5;
    m.body_radii = {size.x * (0.40 + 0.05 * u(rng)), size.y * (0.38 + 0.05 * u(rng)), size.z * 0.7};
    m.body_level = 800.0 + 300.0 * u(rng);
    m.ramp = {2.0 * (u(rng) - 0.5), 2.0 * (u(rng) - 0.5), 3.0 + 2.0 * u(rng)};
    for (int b = 0; b < blob_count; ++b) {
        Blob blob;
        blob.center = {m.body_center.x + m.body_radii.x * 1.6 * (u(rng) - 0.5),
                       m.body_center.y + m.body_radii.y * 1.6 * (u(rng) - 0.5),
                       extent.lo.z + size.z * u(rng)};
        blob.radius_mm = 3.0 + 12.0 * u(rng);
        blob.amplitude = (u(rng) < 0.35 ? -1.0 : 1.0) * (250.0 + 1100.0 * u(rng));
        m.blobs.push_back(blob);
    }
    for (int w = 0; w < 6; ++w) {
        m.texture.push_back(random_wave(rng, 8.0, 40.0, 60.0));
    }
    return m;
}

double PhantomModel::value(const Vec3 &p) const {
    const Vec3 d = p - body_center;
    const double r2 = (d.x * d.x) / (body_radii.x * body_radii.x) + (d.y * d.y) / (body_radii.y * body_radii.y) +
                      (d.z * d.z) / (body_radii.z * body_radii.z);
    if (r2 > 1.0) {
        return 0.0;
    }
    double v = body_level + ramp.dot(d) + sum_waves(texture, p);
    for (const Blob &b : blobs) {
        const Vec3 e = p - b.center;
        const double q = e.dot(e) / (b.radius_mm * b.radius_mm);
        if (q < 9.0) {
            v += b.amplitude * std::exp(-0.5 * q);
        }
    }
    return v;
}

Warp Warp::random(uint64_t seed, double amplitude_mm, double min_wavelength_mm) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    Warp w;
    for (auto *axis : {&w.x, &w.y, &w.z}) {
        for (int i = 0; i < 3; ++i) {
            axis->push_back(random_wave(rng, min_wavelength_mm, 2.5 * min_wavelength_mm, amplitude_mm / 3.0));
        }
    }
    return w;
}

Vec3 Warp::displacement(const Vec3 &p) const { return {sum_waves(x, p), sum_waves(y, p), sum_waves(z, p)}; }

Vec3 Warp::inverse(const Vec3 &p) const {
    Vec3 y = p;
    for (int it = 0; it < 200; ++it) {
        const Vec3 next = p - displacement(y);
        if (distance(next, y) < 1e-10) {
            return next;
        }
        y = next;
    }
    return y;
}

Box phantom_extent(const PhantomGeometry &g) {
    return {g.origin, g.origin + Vec3{(g.dims.x - 1) * g.spacing.x, (g.dims.y - 1) * g.spacing.y,
                                      (g.dims.z - 1) * g.spacing.z}};
}

Volume render_phantom(const PhantomModel &model, const PhantomGeometry &geometry, const RenderOptions &options) {
    WorldFrame frame;
    frame.origin = geometry.origin;
    frame.spacing = geometry.spacing;
    frame.label = FrameLabel::RAS;
    const Dims &d = geometry.dims;
    std::vector<double> raw(static_cast<size_t>(d.count()));
    std::mt19937_64 rng(options.noise_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    size_t n = 0;
    for (int64_t k = 0; k < d.z; ++k) {
        for (int64_t j = 0; j < d.y; ++j) {
            for (int64_t i = 0; i < d.x; ++i, ++n) {
                Vec3 p = frame.voxel_to_world({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
                if (options.warp != nullptr) {
                    p += options.warp->displacement(p);
                }
                p -= options.shift;
                double v = model.value(p);
                if (options.noise_sigma > 0.0 && v > 0.0) {
                    v += options.noise_sigma * noise(rng);
                }
                raw[n] = v;
            }
        }
    }
    return Volume::from_raw(d, frame, raw);
}

Vec3 phantom_truth(const Vec3 &source_point, const RenderOptions &options) {
    const Vec3 shifted = source_point + options.shift;
    return options.warp != nullptr ? options.warp->inverse(shifted) : shifted;
}

std::vector<QueryPair> sample_queries(const PhantomModel &model, const Volume &source, const Volume &target,
                                      const RenderOptions &options, size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Box b = source.bounds();
    std::vector<QueryPair> out;
    size_t attempts = 0;
    while (out.size() < n) {
        if (++attempts > 1000 * (n + 1)) {
            throw std::runtime_error("could not place phantom queries");
        }
        const Vec3 q{b.lo.x + (b.hi.x - b.lo.x) * u(rng), b.lo.y + (b.hi.y - b.lo.y) * u(rng),
                     b.lo.z + (b.hi.z - b.lo.z) * u(rng)};
        if (model.value(q) <= 0.0) {
            continue;
        }
        const Vec3 truth = phantom_truth(q, options);
        if (target.contains(truth)) {
            out.push_back({q, truth});
        }
    }
    return out;
}

} // namespace cpm

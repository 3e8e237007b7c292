#include "cpm/similarity.hpp"

#include <algorithm>
#include <cmath>

namespace cpm {

std::string to_string(Combine c) { return c == Combine::Product ? "product" : "mean"; }

Combine combine_from_string(const std::string &name) {
    if (name == "product") return Combine::Product;
    if (name == "mean") return Combine::Mean;
    throw std::invalid_argument("unknown similarity combination '" + name + "'");
}

void SimilarityParams::validate() const {
    if (histogram_bins < 2 || histogram_bins > 255) {
        throw std::invalid_argument("histogram_bins must be in [2, 255]");
    }
    if (!(intensity_max > intensity_min)) {
        throw std::invalid_argument("similarity intensity range is empty");
    }
}

int SimilarityParams::bin_of(float v) const {
    const double t = (static_cast<double>(v) - intensity_min) * histogram_bins / (intensity_max - intensity_min);
    if (!(t > 0.0)) {
        return 0;
    }
    return std::min(histogram_bins - 1, static_cast<int>(t));
}

PreparedDescriptor::PreparedDescriptor(std::span<const float> v, const SimilarityParams &params) { assign(v, params); }

void PreparedDescriptor::assign(std::span<const float> v, const SimilarityParams &params) {
    values.assign(v.begin(), v.end());
    ivalues.clear();
    bins.resize(v.size());
    double nsq = 0.0;
    int hist[256] = {};
    for (size_t k = 0; k < v.size(); ++k) {
        const double x = v[k];
        nsq += x * x;
        const int b = params.bin_of(v[k]);
        bins[k] = static_cast<uint8_t>(b);
        ++hist[b];
    }
    norm_sq = nsq;
    sum_clogc = 0.0;
    occupied_bins = 0;
    for (int b = 0; b < params.histogram_bins; ++b) {
        if (hist[b] > 0) {
            sum_clogc += hist[b] * std::log(static_cast<double>(hist[b]));
            ++occupied_bins;
        }
    }
}

Scorer::Scorer(size_t length, const SimilarityParams &params) : params_(params), length_(length), clogc_(length + 1) {
    params_.validate();
    clogc_[0] = 0.0;
    for (size_t c = 1; c <= length; ++c) {
        clogc_[c] = static_cast<double>(c) * std::log(static_cast<double>(c));
    }
    bin_lut_.resize(4097);
    for (int v = 0; v <= 4096; ++v) {
        bin_lut_[v] = static_cast<uint8_t>(params_.bin_of(static_cast<float>(v)));
    }
}

void Scorer::prepare(std::span<const uint16_t> raw, PreparedDescriptor &out) const {
    const size_t n = raw.size();
    out.values.resize(n);
    out.ivalues.assign(raw.begin(), raw.end());
    out.bins.resize(n);
    uint64_t nsq = 0;
    for (size_t k = 0; k < n; ++k) {
        const uint32_t v = raw[k];
        out.values[k] = static_cast<float>(v);
        nsq += static_cast<uint64_t>(v * v);
    }
    uint32_t sub[4][256] = {};
    for (size_t k = 0; k < n; ++k) {
        const uint8_t b = bin_lut_[std::min<uint16_t>(raw[k], 4096)];
        out.bins[k] = b;
        ++sub[k & 3][b];
    }
    uint32_t hist[256];
    for (int b = 0; b < 256; ++b) {
        hist[b] = sub[0][b] + sub[1][b] + sub[2][b] + sub[3][b];
    }
    out.norm_sq = static_cast<double>(nsq);
    out.sum_clogc = 0.0;
    out.occupied_bins = 0;
    for (int b = 0; b < params_.histogram_bins; ++b) {
        if (hist[b] > 0) {
            out.sum_clogc += clogc_[hist[b]];
            ++out.occupied_bins;
        }
    }
}

double Scorer::dot(const PreparedDescriptor &a, const PreparedDescriptor &b) const {
    const size_t n = a.size();
    if (!a.ivalues.empty() && !b.ivalues.empty()) {
        // Exact, so equal to the floating-point sum below whenever that one is exact too.
        const uint16_t *ai = a.ivalues.data();
        const uint16_t *bi = b.ivalues.data();
        uint64_t d = 0;
        for (size_t k = 0; k < n; ++k) {
            d += static_cast<uint64_t>(static_cast<uint32_t>(ai[k]) * static_cast<uint32_t>(bi[k]));
        }
        return static_cast<double>(d);
    }
    const float *av = a.values.data();
    const float *bv = b.values.data();
    double d = 0.0;
    for (size_t k = 0; k < n; ++k) {
        d += static_cast<double>(av[k]) * static_cast<double>(bv[k]);
    }
    return d;
}

double Scorer::joint_clogc(const PreparedDescriptor &a, const PreparedDescriptor &b) const {
    const int nb = params_.histogram_bins;
    // Four interleaved count tables: runs of identical bin pairs (background) would otherwise
    // serialise on a single counter.
    const size_t cells = static_cast<size_t>(nb) * nb;
    thread_local std::vector<uint32_t> tables;
    tables.assign(4 * cells, 0u);
    uint32_t *h0 = tables.data();
    uint32_t *h1 = h0 + cells;
    uint32_t *h2 = h1 + cells;
    uint32_t *h3 = h2 + cells;
    const size_t n = a.size();
    const uint8_t *ab = a.bins.data();
    const uint8_t *bb = b.bins.data();
    size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        ++h0[ab[k] * nb + bb[k]];
        ++h1[ab[k + 1] * nb + bb[k + 1]];
        ++h2[ab[k + 2] * nb + bb[k + 2]];
        ++h3[ab[k + 3] * nb + bb[k + 3]];
    }
    for (; k < n; ++k) {
        ++h0[ab[k] * nb + bb[k]];
    }
    for (size_t c = 0; c < cells; ++c) {
        h0[c] += h1[c] + h2[c] + h3[c];
    }
    const uint32_t *hist = h0;
    // Pair (i,j) with (j,i) so that the sum is identical for swapped arguments.
    double s = 0.0;
    for (int i = 0; i < nb; ++i) {
        s += clogc_[hist[i * nb + i]];
        for (int j = i + 1; j < nb; ++j) {
            s += clogc_[hist[i * nb + j]] + clogc_[hist[j * nb + i]];
        }
    }
    return s;
}

double Scorer::cosine(const PreparedDescriptor &a, const PreparedDescriptor &b) const {
    if (a.norm_sq == 0.0 || b.norm_sq == 0.0) {
        return 0.0;
    }
    return std::clamp(dot(a, b) / (std::sqrt(a.norm_sq) * std::sqrt(b.norm_sq)), -1.0, 1.0);
}

namespace {

double nmi_from(double n, double sa, double sb, double sab, int occ_a, int occ_b) {
    // A constant input has zero entropy and shares no information with anything.
    if (occ_a <= 1 || occ_b <= 1) {
        return 0.0;
    }
    const double logn = std::log(n);
    const double ha = logn - sa / n;
    const double hb = logn - sb / n;
    const double hab = logn - sab / n;
    const double hsum = ha + hb;
    if (!(hsum > 0.0)) {
        return 0.0;
    }
    return std::clamp(2.0 * (hsum - hab) / hsum, 0.0, 1.0);
}

} // namespace

double Scorer::nmi(const PreparedDescriptor &a, const PreparedDescriptor &b) const {
    if (a.occupied_bins <= 1 || b.occupied_bins <= 1) {
        return 0.0;
    }
    return nmi_from(static_cast<double>(a.size()), a.sum_clogc, b.sum_clogc, joint_clogc(a, b), a.occupied_bins,
                    b.occupied_bins);
}

double Scorer::combine(double cos, double nmi) const {
    const double c = std::max(cos, 0.0);
    return params_.combine == Combine::Product ? c * nmi : 0.5 * (c + nmi);
}

double Scorer::combined_with_cosine(const PreparedDescriptor &a, const PreparedDescriptor &b, double cos) const {
    if (params_.combine == Combine::Product && !(cos > 0.0)) {
        return 0.0;
    }
    return combine(cos, nmi(a, b));
}

double Scorer::combined(const PreparedDescriptor &a, const PreparedDescriptor &b) const {
    return combined_with_cosine(a, b, cosine(a, b));
}

namespace {

void check_lengths(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("descriptor length mismatch: " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
}

void check_nmi_lengths(std::span<const float> a, std::span<const float> b, const SimilarityParams &params) {
    check_lengths(a, b);
    params.validate();
    if (a.size() < static_cast<size_t>(params.histogram_bins)) {
        throw std::invalid_argument("descriptor shorter than histogram bin count");
    }
}

} // namespace

double cosine(std::span<const float> a, std::span<const float> b) {
    check_lengths(a, b);
    const SimilarityParams p;
    const Scorer s(a.size(), p);
    return s.cosine(PreparedDescriptor(a, p), PreparedDescriptor(b, p));
}

double normalized_mutual_information(std::span<const float> a, std::span<const float> b,
                                     const SimilarityParams &params) {
    check_nmi_lengths(a, b, params);
    const Scorer s(a.size(), params);
    return s.nmi(PreparedDescriptor(a, params), PreparedDescriptor(b, params));
}

double combined_similarity(std::span<const float> a, std::span<const float> b, const SimilarityParams &params) {
    check_nmi_lengths(a, b, params);
    const Scorer s(a.size(), params);
    return s.combined(PreparedDescriptor(a, params), PreparedDescriptor(b, params));
}

} // namespace cpm

// Descriptor similarity: cosine, normalised mutual information, and their combination.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpm {

enum class Combine { Product, Mean };

std::string to_string(Combine c);
Combine combine_from_string(const std::string &name);

struct SimilarityParams {
    int histogram_bins = 16;
    double intensity_min = 0.0;
    double intensity_max = 4096.0;
    Combine combine = Combine::Product;

    // Throws std::invalid_argument when bins < 2 or the range is empty.
    void validate() const;

    int bin_of(float v) const;
};

// 0 when either vector is all-zero. Throws std::invalid_argument on length mismatch.
double cosine(std::span<const float> a, std::span<const float> b);

// 2 I(A;B) / (H(A) + H(B)) over a fixed joint histogram; 0 when either input is constant.
double normalized_mutual_information(std::span<const float> a, std::span<const float> b,
                                     const SimilarityParams &params = {});

// max(cosine, 0) * NMI by default; (max(cosine, 0) + NMI) / 2 with Combine::Mean.
double combined_similarity(std::span<const float> a, std::span<const float> b, const SimilarityParams &params = {});

// A descriptor with its histogram bins and marginal statistics computed once, for scoring
// against many others.
struct PreparedDescriptor {
    std::vector<float> values;
    // Set when every value is an integer in [0, 65535] (all sampled descriptors); enables exact
    // integer dot products.
    std::vector<uint16_t> ivalues;
    std::vector<uint8_t> bins;
    double norm_sq = 0.0;
    double sum_clogc = 0.0; // sum over marginal bins of c*ln(c)
    int occupied_bins = 0;

    PreparedDescriptor() = default;
    PreparedDescriptor(std::span<const float> v, const SimilarityParams &params);

    // Re-fills in place, reusing storage.
    void assign(std::span<const float> v, const SimilarityParams &params);

    size_t size() const { return bins.size(); }
};

// Scores prepared descriptors of one fixed length. Symmetric bit-for-bit in its arguments.
class Scorer {
  public:
    Scorer(size_t length, const SimilarityParams &params);

    const SimilarityParams &params() const { return params_; }
    size_t length() const { return length_; }

    double cosine(const PreparedDescriptor &a, const PreparedDescriptor &b) const;
    double nmi(const PreparedDescriptor &a, const PreparedDescriptor &b) const;
    double combined(const PreparedDescriptor &a, const PreparedDescriptor &b) const;

    // combined() given an already computed cosine(a, b).
    double combined_with_cosine(const PreparedDescriptor &a, const PreparedDescriptor &b, double cos) const;

    // Largest combined score reachable with this cosine (NMI <= 1).
    double upper_bound(double cos) const { return combine(cos, 1.0); }

    double clogc(size_t c) const { return clogc_[c]; }

    // Prepares raw clipped intensities using a precomputed bin table.
    void prepare(std::span<const uint16_t> raw, PreparedDescriptor &out) const;

  private:
    double combine(double cos, double nmi) const;
    double dot(const PreparedDescriptor &a, const PreparedDescriptor &b) const;
    double joint_clogc(const PreparedDescriptor &a, const PreparedDescriptor &b) const;

    SimilarityParams params_;
    size_t length_;
    std::vector<double> clogc_;
    std::vector<uint8_t> bin_lut_; // bin of each integer intensity in [0, 4096]
};

} // namespace cpm

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oscope/io.hpp"

namespace oscope {

enum class LatentDistribution { Gaussian, Rademacher };
enum class EncoderKind { Ideal, Truncated };

/// Monte Carlo setup for the in-batch contrastive objective
///   E[ exp(s(z,z)) / (exp(s(z,z)) + sum_j exp(s(z,z'_j))) ]
/// with cosine similarity, latent dimension d, b negatives and an encoder that
/// either keeps z (ideal) or only its first d-k coordinates (truncated).
struct SimConfig {
    std::size_t d = 1024;
    std::size_t k = 0;
    std::size_t b = 1;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    LatentDistribution distribution = LatentDistribution::Gaussian;
    /// Gaussian latents are sampled through their sufficient statistics by
    /// default: for a fixed z, a negative enters only through its projections
    /// onto z's head and tail (standard normals scaled by the part norms) and the
    /// squared norms of the orthogonal remainders (chi-square with d-k-1 and
    /// k-1 degrees of freedom). That is the same joint law in O(b) draws per
    /// trial. Set this to draw every coordinate instead; Rademacher latents
    /// always do.
    bool direct_sampling = false;

    /// ValueError unless d >= 1, k < d, b >= 1, trials >= 1.
    void validate() const;
};

struct SimEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double analytic_limit = 0.0;
};

/// e / (e + b), the large-d limit for both encoders.
double analytic_limit(std::size_t b);

/// Per-trial objective values. Trial t draws from its own RNG stream, so the
/// values do not depend on how trials are spread over threads; ideal and
/// truncated values come from the same draws.
struct ObjectiveSamples {
    std::vector<double> ideal;
    std::vector<double> truncated;
};
ObjectiveSamples objective_samples(const SimConfig& cfg);

SimEstimate summarize(std::span<const double> values, std::size_t b);

SimEstimate estimate_objective(const SimConfig& cfg, EncoderKind encoder);

struct SweepPoint {
    std::size_t d = 0;
    SimEstimate ideal;
    SimEstimate truncated;
};

/// One pair of estimates per dimension; `dims` must be strictly increasing.
std::vector<SweepPoint> convergence_sweep(std::size_t b, std::size_t k, std::span<const std::size_t> dims,
                                          std::size_t trials, std::uint64_t seed,
                                          LatentDistribution distribution = LatentDistribution::Gaussian);

Json to_json(const SimEstimate& e);
Json to_json(const SweepPoint& p);

// Toy bias-emergence trainer ----------------------------------------------------------

/// Desk-scale demonstration: images weight their large object most, and the
/// large object is mentioned first with a probability controlled by
/// `size_order_correlation` (0.5 = no correlation, 1 = always first). A text
/// encoder that pools fixed object bases with one learned weight per caption
/// position is trained on the contrastive objective above; the first-position
/// retrieval rate is tracked across checkpoints.
struct ToyTrainerConfig {
    std::size_t d = 64;
    std::size_t vocab_size = 50;
    std::size_t positions = 4;
    double size_order_correlation = 0.9;
    std::size_t steps = 300;
    std::size_t batch = 64;
    double learning_rate = 1.0;
    std::uint64_t seed = 0;
    double large_scale = 3.0;
    std::size_t eval_captions = 4000;
    /// Log-normal spread of the per-position weights of each evaluation caption.
    double eval_jitter = 0.7;
    std::size_t checkpoints = 10;

    void validate() const;
};

struct ToyCheckpoint {
    std::size_t step = 0;
    double first_position_rate = 0.0;  ///< percent of hits retrieving the first-mentioned object
    double objective = 0.0;            ///< mean in-batch objective of the last training batch
    std::vector<double> pooling_weights;
};

/// Probability that the large object is mentioned first.
double large_first_probability(double size_order_correlation, std::size_t positions);

/// Checkpoints at round(c * steps / checkpoints) for c = 0..checkpoints.
/// TrainingError if the objective or weights become non-finite.
std::vector<ToyCheckpoint> toy_bias_trainer(const ToyTrainerConfig& cfg);

Json to_json(const ToyCheckpoint& c);

/// Spearman rank correlation (average ranks on ties); 0 if either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace oscope

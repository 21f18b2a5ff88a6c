#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "oscope/embedding_store.hpp"
#include "oscope/io.hpp"

namespace oscope {

enum class InitScheme { XavierUniform, Zero };

/// Mini-batch gradient descent settings. Defaults: lr 0.1 with cosine decay,
/// 50 epochs, batch 128, l2 1e-4, 80/20 stratified split, Xavier-uniform init.
struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 50;
    std::size_t batch_size = 128;
    double l2 = 1e-4;
    double split_fraction = 0.8;
    std::uint64_t seed = 0;
    InitScheme init = InitScheme::XavierUniform;

    void validate() const;
};

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

/// Single-layer softmax classifier over frozen embeddings.
struct LinearProbe {
    std::size_t dim = 0;
    std::vector<std::string> class_names;
    std::vector<double> weights;  ///< classes x dim, row-major
    std::vector<double> bias;
    std::string trained_on;
    std::string target_group;

    std::size_t classes() const noexcept { return class_names.size(); }
    std::vector<double> logits(std::span<const double> x) const;
    std::vector<double> probabilities(std::span<const double> x) const;
    /// argmax of logits, lowest class index on ties.
    std::size_t predict(std::span<const double> x) const;
};

Json to_json(const LinearProbe& probe);
LinearProbe linear_probe_from_json(const Json& j);

struct EpochRecord {
    int epoch = 0;
    double learning_rate = 0.0;  ///< rate at the last step of the epoch
    double train_loss = 0.0;     ///< full train-split objective after the epoch
    double train_accuracy = 0.0;
};

struct TrainResult {
    LinearProbe probe;
    std::vector<EpochRecord> history;
    double heldout_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t heldout_size = 0;
};

std::string history_csv(std::span<const EpochRecord> history);

/// id -> class label.
using Labels = std::map<std::string, std::string>;

/// Minimizes mean cross-entropy + l2 * ||W||^2 on a stratified split of the
/// labeled ids. ValueError for fewer than 2 classes or a class with fewer than
/// 2 examples, KeyError for a labeled id missing from the store.
TrainResult train_probe(const EmbeddingStore& embeddings, const Labels& labels, const TrainConfig& cfg,
                        const std::string& target_group = {});

/// Trains one probe per group (e.g. one per caption position), in parallel.
std::map<std::string, TrainResult> train_group_probes(const EmbeddingStore& embeddings,
                                                      const std::map<std::string, Labels>& labels_by_group,
                                                      const TrainConfig& cfg);

/// Fraction of labeled ids whose prediction matches. DimError on dim mismatch,
/// ValueError on an empty label set, KeyError on a missing id or unknown class.
double eval_probe(const LinearProbe& probe, const EmbeddingStore& embeddings, const Labels& labels);

/// Dense batch for gradient checking.
struct SampleBatch {
    std::size_t dim = 0;
    std::size_t classes = 0;
    std::vector<double> features;  ///< n x dim, row-major
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

/// Objective on a batch and its analytic gradient (weights then bias).
double probe_loss(const LinearProbe& probe, const SampleBatch& batch, double l2, std::vector<double>* grad = nullptr);

/// Max relative error between the analytic gradient and central finite
/// differences (step 1e-4) over at least 100 randomly chosen parameters (all
/// of them when there are fewer), at parameters initialized per `cfg`.
double grad_check(const TrainConfig& cfg, const SampleBatch& batch);

}  // namespace oscope

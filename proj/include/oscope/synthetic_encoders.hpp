#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oscope/caption_forge.hpp"
#include "oscope/embedding_store.hpp"

namespace oscope {

/// Parameters of the deterministic mock encoders.
///
/// The text encoder weights the object at 0-based caption position i by
/// text_decay^i; the image encoder weights the large object by
/// large_scale^image_size_exponent. The jitter terms are optional per-input
/// log-normal perturbations of those weights (seeded by the caption text /
/// image id) and text_noise adds a seeded Gaussian vector of expected norm
/// text_noise to multi-object captions. They give probes a realistic spread
/// instead of a deterministic winner. All default to 0, in which case the
/// encoders are the plain weighted bags of object bases. Single-object inputs
/// always encode to their basis exactly.
struct MockEncoderConfig {
    std::size_t dim = 256;
    std::uint64_t seed = 0;
    double text_decay = 1.0;
    double image_size_exponent = 0.0;
    double text_jitter = 0.0;
    double image_jitter = 0.0;
    double text_noise = 0.0;

    /// ValueError unless dim >= 8, 0 < text_decay <= 1, exponent, jitters and noise >= 0.
    void validate() const;

    /// Settings used by the calibrated desk-scale experiments: jitter 0.7 and
    /// noise 2 on the text side, which put the mock's position profile in the
    /// range of the published text-encoder tables.
    static MockEncoderConfig calibrated(double text_decay, double image_size_exponent = 1.0);
    /// Model id written into generated stores, e.g. "mock-text(d=256,decay=0.6,jitter=0,noise=0,seed=0)".
    std::string model_id(Modality m) const;
};

/// Seeded-hash Gaussian direction for an object name, unit L2 norm.
std::vector<double> object_basis(const MockEncoderConfig& cfg, std::string_view object_name);

/// normalize(sum_i w_i * basis(obj_i) + noise), w_i = decay^i (times jitter when enabled).
/// ValueError if `vocab` is given and an object is not in it.
std::vector<double> encode_text_mock(const MockEncoderConfig& cfg, const CaptionSpec& caption,
                                     const Vocabulary* vocab = nullptr);

/// normalize(sum_j w_j * basis(obj_j)), w_j = large_scale^exponent for the
/// large placement and 1 otherwise (times jitter when enabled).
std::vector<double> encode_image_mock(const MockEncoderConfig& cfg, const SceneSpec& scene, double large_scale);

/// Store of mock text embeddings keyed by caption_id, flagged normalized.
EmbeddingStore mock_text_store(const MockEncoderConfig& cfg, std::span<const CaptionSpec> captions,
                               const Vocabulary* vocab = nullptr);
/// Store of mock image embeddings keyed by image_id, flagged normalized.
EmbeddingStore mock_image_store(const MockEncoderConfig& cfg, std::span<const SceneSpec> scenes, double large_scale);

}  // namespace oscope

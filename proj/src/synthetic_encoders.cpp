#include "oscope/synthetic_encoders.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include <boost/random/normal_distribution.hpp>

#include "oscope/errors.hpp"
#include "oscope/rng.hpp"

namespace oscope {

namespace {

constexpr std::uint64_t kBasisStream = 0xba515ULL;
constexpr std::uint64_t kTextJitterStream = 0x7e47ULL;
constexpr std::uint64_t kImageJitterStream = 0x13a6eULL;
constexpr std::uint64_t kTextNoiseStream = 0x9015eULL;

std::vector<double> jitter_factors(double sigma, std::uint64_t stream, std::uint64_t seed, std::string_view key,
                                   std::size_t n) {
    std::vector<double> f(n, 1.0);
    if (sigma == 0.0) return f;
    Xoshiro256 rng(hash_string(seed ^ stream, key));
    boost::random::normal_distribution<double> normal;
    for (auto& x : f) x = std::exp(sigma * normal(rng));
    return f;
}

class BasisCache {
public:
    explicit BasisCache(const MockEncoderConfig& cfg) : cfg_(cfg) {}
    const std::vector<double>& get(const std::string& name) {
        auto it = cache_.find(name);
        if (it == cache_.end()) it = cache_.emplace(name, object_basis(cfg_, name)).first;
        return it->second;
    }

private:
    const MockEncoderConfig& cfg_;
    std::map<std::string, std::vector<double>> cache_;
};

std::vector<double> encode_text(const MockEncoderConfig& cfg, const CaptionSpec& caption, const Vocabulary* vocab,
                                BasisCache& bases) {
    if (caption.objects.empty()) throw ValueError("caption '" + caption.caption_id + "' has no objects");
    if (caption.objects.size() == 1) {
        if (vocab && !vocab->contains(caption.objects[0]))
            throw ValueError("object '" + caption.objects[0] + "' is not in vocabulary '" + vocab->name() + "'");
        return bases.get(caption.objects[0]);
    }
    const auto jitter = jitter_factors(cfg.text_jitter, kTextJitterStream, cfg.seed, caption.text, caption.objects.size());
    std::vector<double> acc(cfg.dim, 0.0);
    double w = 1.0;
    for (std::size_t i = 0; i < caption.objects.size(); ++i) {
        const auto& obj = caption.objects[i];
        if (vocab && !vocab->contains(obj))
            throw ValueError("object '" + obj + "' is not in vocabulary '" + vocab->name() + "'");
        const auto& b = bases.get(obj);
        for (std::size_t k = 0; k < cfg.dim; ++k) acc[k] += w * jitter[i] * b[k];
        w *= cfg.text_decay;
    }
    if (cfg.text_noise > 0.0) {
        Xoshiro256 rng(hash_string(cfg.seed ^ kTextNoiseStream, caption.text));
        boost::random::normal_distribution<double> normal(0.0, cfg.text_noise / std::sqrt(static_cast<double>(cfg.dim)));
        for (auto& x : acc) x += normal(rng);
    }
    return normalized_copy(acc);
}

std::vector<double> encode_image(const MockEncoderConfig& cfg, const SceneSpec& scene, double large_scale,
                                 BasisCache& bases) {
    validate_scene(scene);
    if (scene.placements.size() == 1) return bases.get(scene.placements[0].object);
    const auto jitter = jitter_factors(cfg.image_jitter, kImageJitterStream, cfg.seed, scene.image_id,
                                       scene.placements.size());
    const double large_weight = std::pow(large_scale, cfg.image_size_exponent);
    std::vector<double> acc(cfg.dim, 0.0);
    for (std::size_t j = 0; j < scene.placements.size(); ++j) {
        const auto& p = scene.placements[j];
        const double w = (p.role == SizeRole::Large ? large_weight : 1.0) * jitter[j];
        const auto& b = bases.get(p.object);
        for (std::size_t k = 0; k < cfg.dim; ++k) acc[k] += w * b[k];
    }
    return normalized_copy(acc);
}

}  // namespace

void MockEncoderConfig::validate() const {
    if (dim < 8) throw ValueError("mock encoder dim must be >= 8");
    if (!(text_decay > 0.0 && text_decay <= 1.0)) throw ValueError("text_decay must be in (0, 1]");
    if (!(image_size_exponent >= 0.0)) throw ValueError("image_size_exponent must be >= 0");
    if (!(text_jitter >= 0.0) || !(image_jitter >= 0.0)) throw ValueError("jitter must be >= 0");
    if (!(text_noise >= 0.0)) throw ValueError("text_noise must be >= 0");
}

MockEncoderConfig MockEncoderConfig::calibrated(double text_decay, double image_size_exponent) {
    MockEncoderConfig cfg;
    cfg.text_decay = text_decay;
    cfg.image_size_exponent = image_size_exponent;
    cfg.text_jitter = 0.7;
    cfg.text_noise = 2.0;
    return cfg;
}

std::string MockEncoderConfig::model_id(Modality m) const {
    char buf[160];
    if (m == Modality::Text)
        std::snprintf(buf, sizeof buf, "mock-text(d=%zu,decay=%g,jitter=%g,noise=%g,seed=%llu)", dim, text_decay,
                      text_jitter, text_noise,
                      static_cast<unsigned long long>(seed));
    else
        std::snprintf(buf, sizeof buf, "mock-image(d=%zu,beta=%g,jitter=%g,seed=%llu)", dim, image_size_exponent,
                      image_jitter, static_cast<unsigned long long>(seed));
    return buf;
}

std::vector<double> object_basis(const MockEncoderConfig& cfg, std::string_view object_name) {
    Xoshiro256 rng(hash_string(cfg.seed ^ kBasisStream, object_name));
    boost::random::normal_distribution<double> normal;
    std::vector<double> v(cfg.dim);
    for (auto& x : v) x = normal(rng);
    return normalized_copy(v);
}

std::vector<double> encode_text_mock(const MockEncoderConfig& cfg, const CaptionSpec& caption, const Vocabulary* vocab) {
    cfg.validate();
    BasisCache bases(cfg);
    return encode_text(cfg, caption, vocab, bases);
}

std::vector<double> encode_image_mock(const MockEncoderConfig& cfg, const SceneSpec& scene, double large_scale) {
    cfg.validate();
    if (!(large_scale > 1.0)) throw ValueError("large_scale must be > 1");
    BasisCache bases(cfg);
    return encode_image(cfg, scene, large_scale, bases);
}

EmbeddingStore mock_text_store(const MockEncoderConfig& cfg, std::span<const CaptionSpec> captions,
                               const Vocabulary* vocab) {
    cfg.validate();
    BasisCache bases(cfg);
    EmbeddingStore store(cfg.model_id(Modality::Text), Modality::Text, cfg.dim, true);
    store.reserve(captions.size());
    for (const auto& c : captions) store.add(c.caption_id, std::span<const double>(encode_text(cfg, c, vocab, bases)));
    return store;
}

EmbeddingStore mock_image_store(const MockEncoderConfig& cfg, std::span<const SceneSpec> scenes, double large_scale) {
    cfg.validate();
    if (!(large_scale > 1.0)) throw ValueError("large_scale must be > 1");
    BasisCache bases(cfg);
    EmbeddingStore store(cfg.model_id(Modality::Image), Modality::Image, cfg.dim, true);
    store.reserve(scenes.size());
    for (const auto& s : scenes) store.add(s.image_id, std::span<const double>(encode_image(cfg, s, large_scale, bases)));
    return store;
}

}  // namespace oscope

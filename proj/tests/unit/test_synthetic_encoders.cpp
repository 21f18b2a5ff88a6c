#include <doctest.h>

#include <cmath>

#include "oscope/caption_forge.hpp"
#include "oscope/errors.hpp"
#include "oscope/synthetic_encoders.hpp"

using namespace oscope;

namespace {

double norm(const std::vector<double>& x) {
    double s = 0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

double cos(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / (norm(a) * norm(b));
}

CaptionSpec caption(std::vector<std::string> objs) { return make_caption(objs, Template::Short); }

// Mock encoders are linear in the bases, so with orthogonal bases the output
// coordinates in the (e_A, e_B, ...) frame are the normalized weights.
std::vector<double> coords(const MockEncoderConfig& cfg, const std::vector<double>& x,
                           const std::vector<std::string>& names) {
    std::vector<double> out;
    for (const auto& n : names) out.push_back(cos(x, object_basis(cfg, n)) * norm(x));
    return out;
}

}  // namespace

TEST_CASE("object_basis") {
    MockEncoderConfig cfg;
    auto a = object_basis(cfg, "cat");
    CHECK(a == object_basis(cfg, "cat"));
    CHECK(a.size() == 256);
    CHECK(std::abs(norm(a) - 1.0) < 1e-6);
    CHECK(a != object_basis(cfg, "dog"));
    MockEncoderConfig other = cfg;
    other.seed = 1;
    CHECK(a != object_basis(other, "cat"));
}

TEST_CASE("ComCO bases are near-orthogonal at dim 256") {
    MockEncoderConfig cfg;
    auto names = builtin_vocabulary("comco").names();
    double worst = 0.0;
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j)
            worst = std::max(worst, std::abs(cos(object_basis(cfg, names[i]), object_basis(cfg, names[j]))));
    CHECK(worst < 0.35);
}

TEST_CASE("encode_text_mock") {
    MockEncoderConfig cfg;
    cfg.dim = 4096;  // bases nearly orthogonal, so coordinates approach the closed form
    cfg.text_decay = 0.5;
    SUBCASE("decay weights follow the closed form") {
        // Exact check: coordinates in the basis frame equal normalize(1, 0.5)
        // up to the residual overlap of the two bases.
        auto x = encode_text_mock(cfg, caption({"A", "B"}));
        auto ea = object_basis(cfg, "A"), eb = object_basis(cfg, "B");
        const double overlap = cos(ea, eb);
        std::vector<double> expect(cfg.dim);
        for (std::size_t i = 0; i < cfg.dim; ++i) expect[i] = ea[i] + 0.5 * eb[i];
        const double n = norm(expect);
        for (std::size_t i = 0; i < cfg.dim; ++i) CHECK(std::abs(x[i] - expect[i] / n) < 1e-12);
        auto c = coords(cfg, x, {"A", "B"});
        CHECK(std::abs(c[0] - 0.8944) < 0.05 + std::abs(overlap));
        CHECK(std::abs(c[1] - 0.4472) < 0.05 + std::abs(overlap));
        CHECK(cos(x, ea) > cos(x, eb));
    }
    SUBCASE("gamma 1 is order invariant") {
        cfg.text_decay = 1.0;
        auto ab = encode_text_mock(cfg, caption({"A", "B", "C"}));
        auto ba = encode_text_mock(cfg, caption({"C", "B", "A"}));
        for (std::size_t i = 0; i < ab.size(); ++i) CHECK(std::abs(ab[i] - ba[i]) < 1e-12);
    }
    SUBCASE("single object is its basis") {
        CHECK(encode_text_mock(cfg, caption({"A"})) == object_basis(cfg, "A"));
        cfg.text_jitter = 0.5;
        CHECK(encode_text_mock(cfg, caption({"A"})) == object_basis(cfg, "A"));
    }
    SUBCASE("unknown objects are rejected when a vocabulary is given") {
        auto vocab = builtin_vocabulary("simco");
        CHECK_THROWS_AS(encode_text_mock(cfg, caption({"Cube", "unicorn"}), &vocab), ValueError);
        CHECK_NOTHROW(encode_text_mock(cfg, caption({"Cube", "Sphere"}), &vocab));
    }
    SUBCASE("jitter is deterministic per caption") {
        cfg.text_jitter = 0.5;
        auto x = encode_text_mock(cfg, caption({"A", "B"}));
        CHECK(x == encode_text_mock(cfg, caption({"A", "B"})));
        CHECK(std::abs(norm(x) - 1.0) < 1e-12);
        cfg.text_jitter = 0.0;
        CHECK(x != encode_text_mock(cfg, caption({"A", "B"})));
    }
}

TEST_CASE("encode_image_mock") {
    MockEncoderConfig cfg;
    cfg.dim = 4096;
    SceneSpec scene{"i", {{"A", SizeRole::Large, 0}, {"B", SizeRole::Small, 1}}};
    SUBCASE("beta 0 is a permutation-invariant bag") {
        auto x = encode_image_mock(cfg, scene, 3.0);
        SceneSpec swapped{"i", {{"B", SizeRole::Small, 1}, {"A", SizeRole::Large, 0}}};
        auto y = encode_image_mock(cfg, swapped, 3.0);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - y[i]) < 1e-12);
    }
    SUBCASE("beta 1 weights the large object by large_scale") {
        cfg.image_size_exponent = 1.0;
        auto x = encode_image_mock(cfg, scene, 3.0);
        auto ea = object_basis(cfg, "A"), eb = object_basis(cfg, "B");
        std::vector<double> expect(cfg.dim);
        for (std::size_t i = 0; i < cfg.dim; ++i) expect[i] = 3.0 * ea[i] + eb[i];
        const double n = norm(expect);
        for (std::size_t i = 0; i < cfg.dim; ++i) CHECK(std::abs(x[i] - expect[i] / n) < 1e-12);
        auto c = coords(cfg, x, {"A", "B"});
        CHECK(std::abs(c[0] - 0.9487) < 0.05);
        CHECK(std::abs(c[1] - 0.3162) < 0.05);
        CHECK(cos(x, ea) > cos(x, eb));
    }
    SUBCASE("single object is its basis") {
        cfg.image_size_exponent = 2.0;
        CHECK(encode_image_mock(cfg, SceneSpec{"s", {{"A", SizeRole::Large, 0}}}, 3.0) == object_basis(cfg, "A"));
    }
    SUBCASE("invalid scenes and scales") {
        CHECK_THROWS_AS(encode_image_mock(cfg, scene, 1.0), ValueError);
        SceneSpec dup{"d", {{"A", SizeRole::Large, 0}, {"A", SizeRole::Small, 1}}};
        CHECK_THROWS_AS(encode_image_mock(cfg, dup, 3.0), ValueError);
    }
}

TEST_CASE("config validation") {
    MockEncoderConfig cfg;
    cfg.dim = 4;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = {};
    cfg.text_decay = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.text_decay = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = {};
    cfg.text_jitter = -1;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("mock stores") {
    MockEncoderConfig cfg;
    cfg.text_decay = 0.6;
    auto vocab = builtin_vocabulary("comco");
    auto m = gen_manifests(vocab, 3, 20, 1);
    auto text = mock_text_store(cfg, m.captions, &vocab);
    auto image = mock_image_store(cfg, m.scenes, 3.0);
    CHECK(text.size() == 20);
    CHECK(text.normalized());
    CHECK(text.modality() == Modality::Text);
    CHECK(image.modality() == Modality::Image);
    CHECK(text.id(0) == m.captions[0].caption_id);
    CHECK(image.id(0) == m.scenes[0].image_id);
    CHECK(text.model_id() != image.model_id());
    auto direct = encode_text_mock(cfg, m.captions[3]);
    for (std::size_t i = 0; i < cfg.dim; ++i) CHECK(text.vector(3)[i] == static_cast<float>(direct[i]));
}

TEST_CASE("text noise") {
    auto cfg = MockEncoderConfig::calibrated(0.6);
    CHECK(cfg.text_noise == 2.0);
    auto x = encode_text_mock(cfg, caption({"A", "B", "C"}));
    CHECK(x == encode_text_mock(cfg, caption({"A", "B", "C"})));
    CHECK(std::abs(norm(x) - 1.0) < 1e-12);
    CHECK(encode_text_mock(cfg, caption({"A"})) == object_basis(cfg, "A"));
    cfg.text_noise = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

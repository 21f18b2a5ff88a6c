#include <doctest.h>

#include <cmath>

#include "oscope/caption_forge.hpp"
#include "oscope/errors.hpp"
#include "oscope/matching_eval.hpp"
#include "oscope/parallel.hpp"
#include "oscope/synthetic_encoders.hpp"
#include "test_util.hpp"

using namespace oscope;
using oscope::testing::store_of;

namespace {

struct Setup {
    std::vector<MatchTrial> trials;
    std::unordered_map<std::string, CaptionSpec> captions;
    EmbeddingStore images;
    EmbeddingStore texts;
    EmbeddingStore per_object;
};

Setup mock_setup(const MockEncoderConfig& cfg, std::size_t scenes, std::uint64_t seed) {
    auto vocab = builtin_vocabulary("comco");
    auto m = gen_manifests(vocab, 4, scenes, seed);
    auto pairs = gen_scenario_pairs(m.scenes, vocab, seed + 1);
    std::vector<MatchTrial> trials;
    std::vector<CaptionSpec> caps;
    std::unordered_map<std::string, CaptionSpec> by_id;
    for (const auto& p : pairs) {
        trials.push_back(trial_from_pair(p));
        for (const auto* c : {&p.correct, &p.incorrect}) {
            caps.push_back(*c);
            by_id[c->caption_id] = *c;
        }
    }
    auto singles = single_object_captions(vocab);
    return {trials, by_id, mock_image_store(cfg, m.scenes, 3.0), mock_text_store(cfg, caps, &vocab),
            mock_text_store(cfg, singles, &vocab)};
}

}  // namespace

TEST_CASE("trial scores") {
    auto images = store_of({{"img", {1, 0}}});
    auto texts = store_of({{"good", {0.8f, 0.6f}}, {"bad", {0.5f, 0.8660254f}}, {"twin", {0.8f, 0.6f}}});
    std::vector<MatchTrial> trials{{"img", "good", "bad", Scenario::One},
                                   {"img", "bad", "good", Scenario::Two},
                                   {"img", "good", "twin", Scenario::One}};
    auto r = evaluate_matching(trials, images, texts);
    REQUIRE(r.outcomes.size() == 3);
    CHECK(r.outcomes[0].score == 1.0);
    CHECK(r.outcomes[0].sim_correct == doctest::Approx(0.8));
    CHECK(r.outcomes[0].sim_incorrect == doctest::Approx(0.5));
    CHECK(r.outcomes[1].score == 0.0);
    CHECK(r.outcomes[2].score == 0.5);
    CHECK(r.accuracy == doctest::Approx(0.5));
    CHECK(scenario_accuracy(trials, r, Scenario::One) == doctest::Approx(0.75));
    CHECK(scenario_accuracy(trials, r, Scenario::Two) == 0.0);

    CHECK_THROWS_AS(evaluate_matching(std::vector<MatchTrial>{}, images, texts), ValueError);
    std::vector<MatchTrial> ghost{{"img", "good", "nowhere", Scenario::One}};
    CHECK_THROWS_AS(evaluate_matching(ghost, images, texts), KeyError);
    std::vector<MatchTrial> no_image{{"pic", "good", "bad", Scenario::One}};
    CHECK_THROWS_AS(evaluate_matching(no_image, images, texts), KeyError);
}

TEST_CASE("swapping correct and incorrect maps accuracy a to 1 - a") {
    auto s = mock_setup(MockEncoderConfig::calibrated(0.6), 200, 4);
    auto r = evaluate_matching(s.trials, s.images, s.texts);
    auto swapped = s.trials;
    for (auto& t : swapped) std::swap(t.correct_caption_id, t.incorrect_caption_id);
    auto rs = evaluate_matching(swapped, s.images, s.texts);
    CHECK(r.accuracy + rs.accuracy == 1.0);
}

TEST_CASE("split-caption aggregation") {
    MockEncoderConfig cfg;
    cfg.dim = 64;
    EmbeddingStore per("per", Modality::Text, 4);
    const double cat[] = {1, 0, 0, 0}, dog[] = {0, 1, 0, 0};
    per.add("cat", std::span<const double>(cat));
    per.add("dog", std::span<const double>(dog));
    auto cd = make_caption(std::vector<std::string>{"cat", "dog"}, Template::Short);
    auto dc = make_caption(std::vector<std::string>{"dog", "cat"}, Template::Short);
    auto a = aggregate_split_embedding(cd, per);
    CHECK(a[0] == doctest::Approx(0.70710678118654752).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(0.70710678118654752).epsilon(1e-12));
    CHECK(a[2] == 0.0);
    auto b = aggregate_split_embedding(dc, per);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);

    auto single = aggregate_split_embedding(make_caption(std::vector<std::string>{"cat"}, Template::Short), per);
    CHECK(single == std::vector<double>{1, 0, 0, 0});

    auto fn_agg = aggregate_split_embedding(cd, [&](const CaptionSpec& c) { return encode_text_mock(cfg, c); });
    auto ec = object_basis(cfg, "cat"), ed = object_basis(cfg, "dog");
    double n = 0;
    for (std::size_t i = 0; i < ec.size(); ++i) n += (ec[i] + ed[i]) * (ec[i] + ed[i]);
    for (std::size_t i = 0; i < ec.size(); ++i) CHECK(std::abs(fn_agg[i] - (ec[i] + ed[i]) / std::sqrt(n)) < 1e-12);

    try {
        aggregate_split_embedding(make_caption(std::vector<std::string>{"cat", "eel"}, Template::Short), per);
        FAIL("expected KeyError");
    } catch (const KeyError& e) {
        CHECK(std::string(e.what()).find("eel") != std::string::npos);
    }
    CHECK_THROWS_AS(aggregate_split_embedding(make_caption(std::vector<std::string>{"cat", "dog"}, Template::Long), per),
                    UnsupportedError);
}

TEST_CASE("scenario asymmetry and mitigation with calibrated mocks") {
    auto s = mock_setup(MockEncoderConfig::calibrated(0.6), 1000, 2);
    auto mit = evaluate_with_mitigation(s.trials, s.captions, s.images, s.texts, s.per_object);
    const double s1 = scenario_accuracy(s.trials, mit.original, Scenario::One);
    const double s2 = scenario_accuracy(s.trials, mit.original, Scenario::Two);
    const double m2 = scenario_accuracy(s.trials, mit.mitigated, Scenario::Two);
    MESSAGE("scenario 1 " << s1 << ", scenario 2 " << s2 << ", mitigated scenario 2 " << m2);
    CHECK(s1 - s2 >= 0.15);
    CHECK(m2 >= s2 + 0.10);
    CHECK(m2 >= s2);
}

TEST_CASE("unbiased mocks make mitigation a no-op") {
    MockEncoderConfig cfg;
    cfg.text_decay = 1.0;
    cfg.image_size_exponent = 1.0;
    auto s = mock_setup(cfg, 300, 6);
    auto mit = evaluate_with_mitigation(s.trials, s.captions, s.images, s.texts, s.per_object);
    CHECK(std::abs(mit.accuracy_original() - mit.accuracy_mitigated()) <= 0.02);
}

TEST_CASE("mitigated matching ignores object order") {
    auto s = mock_setup(MockEncoderConfig::calibrated(0.6), 150, 8);
    auto reversed = s.captions;
    for (auto& [id, c] : reversed) {
        std::reverse(c.objects.begin(), c.objects.end());
        c = make_caption(c.objects, Template::Short, {}, c.caption_id);
    }
    auto a = evaluate_matching(s.trials, s.images, aggregate_store(s.trials, s.captions, s.per_object));
    auto b = evaluate_matching(s.trials, s.images, aggregate_store(s.trials, reversed, s.per_object));
    CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("matching is thread-count independent") {
    auto s = mock_setup(MockEncoderConfig::calibrated(0.6), 300, 3);
    set_thread_count(1);
    auto one = evaluate_matching(s.trials, s.images, s.texts);
    set_thread_count(4);
    auto four = evaluate_matching(s.trials, s.images, s.texts);
    set_thread_count(0);
    CHECK(one.accuracy == four.accuracy);
    for (std::size_t i = 0; i < one.outcomes.size(); ++i) CHECK(one.outcomes[i].sim_correct == four.outcomes[i].sim_correct);
}

TEST_CASE("trials JSONL and CSV") {
    oscope::testing::TempDir dir;
    std::vector<MatchTrial> trials{{"i1", "c1", "x1", Scenario::One}, {"i2", "c2", "x2", Scenario::Two}};
    save_trials(trials, dir / "t.jsonl");
    CHECK(load_trials(dir / "t.jsonl") == trials);
    CHECK(to_json(trials[1]).at("scenario") == "two");
    write_file_atomic(dir / "bad.jsonl", "{\"image_id\":\"i\",\"correct\":\"c\",\"incorrect\":\"x\",\"scenario\":\"three\"}\n");
    CHECK_THROWS(load_trials(dir / "bad.jsonl"));

    std::vector<MatchingRow> rows{{"mock", "one", 10, 0.9, std::nullopt}, {"mock", "two", 10, 0.5, 0.8}};
    auto csv = matching_csv(rows);
    CHECK(csv.find("mock,one,10,90.00,") != std::string::npos);
    CHECK(csv.find("mock,two,10,50.00,80.00") != std::string::npos);
}

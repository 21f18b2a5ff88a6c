#include "oscope/caption_forge.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "embedded_data.hpp"
#include "oscope/errors.hpp"
#include "oscope/io.hpp"
#include "oscope/rng.hpp"

namespace oscope {

namespace {

constexpr std::string_view kConjunction = " and ";

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Partial Fisher-Yates: k distinct indices from [0, n).
std::vector<std::size_t> sample_distinct(Xoshiro256& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

std::string numbered(std::string_view prefix, int n, std::size_t i) {
    std::string num = std::to_string(i);
    if (num.size() < 6) num.insert(0, 6 - num.size(), '0');
    return std::string(prefix) + "_n" + std::to_string(n) + "_" + num;
}

}  // namespace

std::string_view to_string(SizeClass c) {
    switch (c) {
        case SizeClass::Small: return "small";
        case SizeClass::Medium: return "medium";
        case SizeClass::Large: return "large";
        case SizeClass::Unspecified: return "unspecified";
    }
    return "unspecified";
}

SizeClass size_class_from_string(std::string_view s) {
    if (s == "small") return SizeClass::Small;
    if (s == "medium") return SizeClass::Medium;
    if (s == "large") return SizeClass::Large;
    if (s == "unspecified" || s.empty()) return SizeClass::Unspecified;
    throw ValueError("unknown size class '" + std::string(s) + "'");
}

Vocabulary::Vocabulary(std::string name, std::vector<VocabEntry> entries)
    : name_(std::move(name)), entries_(std::move(entries)) {
    std::unordered_set<std::string> seen;
    for (const auto& e : entries_) {
        if (e.name.empty()) throw ValueError("vocabulary '" + name_ + "' has an empty object name");
        if (e.name.find(kConjunction) != std::string::npos)
            throw ValueError("object name '" + e.name + "' contains the conjunction \" and \"");
        if (!seen.insert(e.name).second)
            throw ValueError("vocabulary '" + name_ + "' lists '" + e.name + "' twice");
    }
}

bool Vocabulary::contains(std::string_view object) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == object; });
}

std::vector<std::string> Vocabulary::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::vector<std::string> Vocabulary::names_of(SizeClass c) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.size_class == c) out.push_back(e.name);
    return out;
}

Vocabulary parse_vocabulary(std::string name, std::string_view tsv) {
    std::vector<VocabEntry> entries;
    std::istringstream in{std::string(tsv)};
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto tab = line.find('\t');
        VocabEntry e;
        if (tab == std::string::npos) {
            e.name = t;
        } else {
            e.name = trim(std::string_view(line).substr(0, tab));
            e.size_class = size_class_from_string(trim(std::string_view(line).substr(tab + 1)));
        }
        entries.push_back(std::move(e));
    }
    return Vocabulary(std::move(name), std::move(entries));
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
    return parse_vocabulary(path.stem().string(), read_file(path));
}

std::vector<std::string> builtin_vocabulary_names() { return {"simco", "comco", "domainnet"}; }

Vocabulary builtin_vocabulary(std::string_view name) {
    auto body = detail::embedded_file("vocab/" + std::string(name) + ".tsv");
    if (!body) throw ValueError("no builtin vocabulary named '" + std::string(name) + "'");
    return parse_vocabulary(std::string(name), *body);
}

Vocabulary resolve_vocabulary(std::string_view name_or_path) {
    auto builtins = builtin_vocabulary_names();
    if (std::find(builtins.begin(), builtins.end(), name_or_path) != builtins.end())
        return builtin_vocabulary(name_or_path);
    return load_vocabulary(std::filesystem::path(name_or_path));
}

std::string_view to_string(Template t) { return t == Template::Short ? "short" : "long"; }

Template template_from_string(std::string_view s) {
    if (s == "short") return Template::Short;
    if (s == "long") return Template::Long;
    throw ValueError("unknown caption template '" + std::string(s) + "'");
}

std::string_view to_string(SizeRole r) { return r == SizeRole::Large ? "large" : "small"; }

SizeRole size_role_from_string(std::string_view s) {
    if (s == "large") return SizeRole::Large;
    if (s == "small") return SizeRole::Small;
    throw ValueError("unknown size role '" + std::string(s) + "'");
}

std::string_view to_string(Scenario s) { return s == Scenario::One ? "one" : "two"; }

Scenario scenario_from_string(std::string_view s) {
    if (s == "one" || s == "1") return Scenario::One;
    if (s == "two" || s == "2") return Scenario::Two;
    throw ValueError("unknown scenario '" + std::string(s) + "'");
}

std::vector<std::string> SceneSpec::objects() const {
    std::vector<std::string> out;
    out.reserve(placements.size());
    for (const auto& p : placements) out.push_back(p.object);
    return out;
}

std::optional<std::size_t> SceneSpec::large_index() const {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < placements.size(); ++i) {
        if (placements[i].role != SizeRole::Large) continue;
        if (found) return std::nullopt;
        found = i;
    }
    return found;
}

void validate_scene(const SceneSpec& scene) {
    if (scene.placements.empty()) throw ValueError("scene '" + scene.image_id + "' has no placements");
    std::set<std::string> objects;
    std::set<int> slots;
    for (const auto& p : scene.placements) {
        if (!objects.insert(p.object).second)
            throw ValueError("scene '" + scene.image_id + "' places '" + p.object + "' twice");
        if (!slots.insert(p.slot).second)
            throw ValueError("scene '" + scene.image_id + "' reuses slot " + std::to_string(p.slot));
    }
}

const std::vector<std::string>& default_long_fillers() {
    static const std::vector<std::string> fillers = [] {
        std::vector<std::string> out;
        auto body = detail::embedded_file("long_fillers.txt");
        std::istringstream in{std::string(body.value_or(""))};
        std::string line;
        while (std::getline(in, line)) {
            auto t = trim(line);
            if (!t.empty() && t.front() != '#') out.push_back(std::move(t));
        }
        return out;
    }();
    return fillers;
}

CaptionSpec make_caption(std::span<const std::string> objects, Template templ,
                         std::span<const std::string> long_fillers, std::string caption_id) {
    if (objects.empty()) throw ValueError("caption needs at least one object");
    if (objects.size() > kMaxCaptionObjects)
        throw ValueError("caption has " + std::to_string(objects.size()) + " objects, at most 8 supported");
    CaptionSpec c{std::move(caption_id), {objects.begin(), objects.end()}, templ, {}};
    if (templ == Template::Short) {
        for (std::size_t i = 0; i < objects.size(); ++i) {
            if (i) c.text += kConjunction;
            c.text += objects[i];
        }
        return c;
    }
    if (long_fillers.empty()) long_fillers = default_long_fillers();
    if (long_fillers.empty()) throw ValueError("long template needs at least one filler phrase");
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (i) c.text += ' ';
        c.text += objects[i];
        c.text += ' ';
        c.text += long_fillers[i % long_fillers.size()];
    }
    return c;
}

std::vector<std::string> permute_first(std::span<const std::string> objects, std::size_t first_index) {
    if (first_index >= objects.size())
        throw IndexError("first_index " + std::to_string(first_index) + " out of range for " +
                         std::to_string(objects.size()) + " objects");
    std::vector<std::string> out;
    out.reserve(objects.size());
    out.push_back(objects[first_index]);
    for (std::size_t i = 0; i < objects.size(); ++i)
        if (i != first_index) out.push_back(objects[i]);
    return out;
}

ScenarioPair make_scenario_pair(const SceneSpec& scene, const std::string& absent, Scenario scenario) {
    validate_scene(scene);
    auto large = scene.large_index();
    if (!large) throw ValueError("scene '" + scene.image_id + "' does not have exactly one large object");
    const auto objects = scene.objects();
    if (std::find(objects.begin(), objects.end(), absent) != objects.end())
        throw ValueError("absent object '" + absent + "' is present in scene '" + scene.image_id + "'");

    std::vector<std::string> rest;
    for (std::size_t i = 0; i < objects.size(); ++i)
        if (i != *large) rest.push_back(objects[i]);

    std::vector<std::string> correct, incorrect;
    if (scenario == Scenario::One) {
        correct.push_back(objects[*large]);
        incorrect.push_back(absent);
    }
    correct.insert(correct.end(), rest.begin(), rest.end());
    incorrect.insert(incorrect.end(), rest.begin(), rest.end());
    if (scenario == Scenario::Two) {
        correct.push_back(objects[*large]);
        incorrect.push_back(absent);
    }

    const std::string tag = scenario == Scenario::One ? ".s1" : ".s2";
    return ScenarioPair{scene.image_id,
                        make_caption(correct, Template::Short, {}, scene.image_id + tag + ".correct"),
                        make_caption(incorrect, Template::Short, {}, scene.image_id + tag + ".incorrect"),
                        scenario, absent};
}

std::vector<CaptionSpec> split_caption(const CaptionSpec& caption) {
    if (caption.templ != Template::Short)
        throw UnsupportedError("only short (conjunction) captions can be split: '" + caption.caption_id + "'");
    std::vector<std::string> parts;
    std::string_view text = caption.text;
    for (;;) {
        auto pos = text.find(kConjunction);
        parts.emplace_back(text.substr(0, pos));
        if (pos == std::string_view::npos) break;
        text.remove_prefix(pos + kConjunction.size());
    }
    if (parts.size() != caption.objects.size())
        throw ValueError("caption '" + caption.caption_id + "' text splits into " + std::to_string(parts.size()) +
                         " parts but lists " + std::to_string(caption.objects.size()) + " objects");
    std::vector<CaptionSpec> out;
    out.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string obj[] = {parts[i]};
        out.push_back(make_caption(obj, Template::Short, {}, caption.caption_id + "#" + std::to_string(i)));
    }
    return out;
}

Manifests gen_manifests(const Vocabulary& vocab, int n_objects, std::size_t count, std::uint64_t seed) {
    if (n_objects < 1 || static_cast<std::size_t>(n_objects) > kMaxCaptionObjects)
        throw ValueError("n_objects must be in 1..8, got " + std::to_string(n_objects));
    if (static_cast<std::size_t>(n_objects) > vocab.size())
        throw ValueError("vocabulary '" + vocab.name() + "' has " + std::to_string(vocab.size()) +
                         " objects, cannot draw " + std::to_string(n_objects) + " distinct ones");
    if (count < 1) throw ValueError("count must be >= 1");
    const auto n = static_cast<std::size_t>(n_objects);
    Manifests m;
    m.scenes.reserve(count);
    m.captions.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Xoshiro256 rng(stream_seed(seed, i));
        auto picks = sample_distinct(rng, vocab.size(), n);
        const std::size_t large_slot = rng.below(n);
        SceneSpec scene{numbered("img", n_objects, i), {}};
        std::vector<std::string> objects;
        for (std::size_t s = 0; s < n; ++s) {
            const auto& name = vocab.entries()[picks[s]].name;
            scene.placements.push_back({name, s == large_slot ? SizeRole::Large : SizeRole::Small, static_cast<int>(s)});
            objects.push_back(name);
        }
        m.captions.push_back(make_caption(objects, Template::Short, {}, numbered("cap", n_objects, i)));
        m.scenes.push_back(std::move(scene));
    }
    return m;
}

std::vector<ScenarioPair> gen_scenario_pairs(std::span<const SceneSpec> scenes, const Vocabulary& vocab,
                                             std::uint64_t seed) {
    std::vector<ScenarioPair> out;
    out.reserve(2 * scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto present = scenes[i].objects();
        std::vector<std::string> candidates;
        for (const auto& e : vocab.entries())
            if (std::find(present.begin(), present.end(), e.name) == present.end()) candidates.push_back(e.name);
        if (candidates.empty())
            throw ValueError("vocabulary '" + vocab.name() + "' has no object absent from '" + scenes[i].image_id + "'");
        Xoshiro256 rng(stream_seed(seed ^ 0x5ce9a210ULL, i));
        const auto& absent = candidates[rng.below(candidates.size())];
        out.push_back(make_scenario_pair(scenes[i], absent, Scenario::One));
        out.push_back(make_scenario_pair(scenes[i], absent, Scenario::Two));
    }
    return out;
}

std::pair<std::vector<CaptionSpec>, std::vector<CaptionSpec>> claim1_sentence_sets(const Vocabulary& vocab,
                                                                                  std::size_t count,
                                                                                  std::uint64_t seed) {
    const auto large = vocab.names_of(SizeClass::Large);
    const auto small = vocab.names_of(SizeClass::Small);
    const auto medium = vocab.names_of(SizeClass::Medium);
    if (large.empty() || small.empty() || medium.size() < 3)
        throw ValueError("vocabulary '" + vocab.name() + "' needs >=1 large, >=1 small and >=3 medium objects");

    auto build = [&](const std::vector<std::string>& firsts, std::uint64_t stream, std::string_view prefix) {
        std::vector<CaptionSpec> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            Xoshiro256 rng(stream_seed(seed ^ stream, i));
            std::vector<std::string> objects{firsts[rng.below(firsts.size())]};
            for (auto k : sample_distinct(rng, medium.size(), 3)) objects.push_back(medium[k]);
            out.push_back(make_caption(objects, Template::Short, {}, numbered(prefix, 4, i)));
        }
        return out;
    };
    return {build(large, 0xa11ce, "claim1_large"), build(small, 0x5a11, "claim1_small")};
}

std::vector<CaptionSpec> single_object_captions(const Vocabulary& vocab) {
    std::vector<CaptionSpec> out;
    out.reserve(vocab.size());
    for (const auto& e : vocab.entries()) {
        const std::string obj[] = {e.name};
        out.push_back(make_caption(obj, Template::Short, {}, e.name));
    }
    return out;
}

}  // namespace oscope

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oscope {

// ---------------------------------------------------------------------------
// Vocabularies

enum class SizeClass { Small, Medium, Large, Unspecified };

std::string_view to_string(SizeClass c);
SizeClass size_class_from_string(std::string_view s);

struct VocabEntry {
    std::string name;
    SizeClass size_class = SizeClass::Unspecified;
};

/// Named object list. Names are unique, non-empty, and never contain the
/// conjunction " and ", so short captions split back into their objects.
class Vocabulary {
public:
    Vocabulary(std::string name, std::vector<VocabEntry> entries);

    const std::string& name() const noexcept { return name_; }
    const std::vector<VocabEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool contains(std::string_view object) const;
    std::vector<std::string> names() const;
    std::vector<std::string> names_of(SizeClass c) const;

private:
    std::string name_;
    std::vector<VocabEntry> entries_;
};

/// Parses `name<TAB>size_class` lines; '#' starts a comment line.
Vocabulary parse_vocabulary(std::string name, std::string_view tsv);
Vocabulary load_vocabulary(const std::filesystem::path& path);

/// Shipped vocabularies: "simco", "comco", "domainnet".
Vocabulary builtin_vocabulary(std::string_view name);
std::vector<std::string> builtin_vocabulary_names();

/// Either a builtin name or a path to a TSV file.
Vocabulary resolve_vocabulary(std::string_view name_or_path);

// ---------------------------------------------------------------------------
// Captions and scenes

enum class Template { Short, Long };
std::string_view to_string(Template t);
Template template_from_string(std::string_view s);

struct CaptionSpec {
    std::string caption_id;
    std::vector<std::string> objects;
    Template templ = Template::Short;
    std::string text;

    friend bool operator==(const CaptionSpec&, const CaptionSpec&) = default;
};

enum class SizeRole { Large, Small };
std::string_view to_string(SizeRole r);
SizeRole size_role_from_string(std::string_view s);

struct Placement {
    std::string object;
    SizeRole role = SizeRole::Small;
    int slot = 0;

    friend bool operator==(const Placement&, const Placement&) = default;
};

struct SceneSpec {
    std::string image_id;
    std::vector<Placement> placements;

    std::vector<std::string> objects() const;
    /// Index into `placements` of the unique large object, if exactly one exists.
    std::optional<std::size_t> large_index() const;

    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Throws ValueError on duplicate objects or slots, or an empty scene.
void validate_scene(const SceneSpec& scene);

enum class Scenario { One, Two };
std::string_view to_string(Scenario s);
Scenario scenario_from_string(std::string_view s);

struct ScenarioPair {
    std::string image_id;
    CaptionSpec correct;
    CaptionSpec incorrect;
    Scenario scenario = Scenario::One;
    std::string absent_object;
};

/// Filler phrases used when a long caption is requested without explicit ones.
const std::vector<std::string>& default_long_fillers();

inline constexpr std::size_t kMaxCaptionObjects = 8;

/// Short: "A and B and C". Long: each object mention is followed by a filler
/// phrase, cycling through `long_fillers` (defaults when empty).
CaptionSpec make_caption(std::span<const std::string> objects, Template templ,
                         std::span<const std::string> long_fillers = {}, std::string caption_id = {});

/// Moves objects[first_index] to the front, keeping the others in order.
std::vector<std::string> permute_first(std::span<const std::string> objects, std::size_t first_index);

/// Scenario one: large object first in the correct caption, `absent` first in the
/// incorrect one. Scenario two: both at the end.
ScenarioPair make_scenario_pair(const SceneSpec& scene, const std::string& absent, Scenario scenario);

/// One single-object caption per object of a short caption.
std::vector<CaptionSpec> split_caption(const CaptionSpec& caption);

struct Manifests {
    std::vector<SceneSpec> scenes;
    std::vector<CaptionSpec> captions;
};

/// `count` scenes of `n_objects` distinct objects with one uniformly placed
/// large object, plus a short caption per scene in placement order.
Manifests gen_manifests(const Vocabulary& vocab, int n_objects, std::size_t count, std::uint64_t seed);

/// Both scenarios for every scene, with the absent object drawn from the
/// vocabulary entries not in that scene.
std::vector<ScenarioPair> gen_scenario_pairs(std::span<const SceneSpec> scenes, const Vocabulary& vocab,
                                             std::uint64_t seed);

/// Claim-1 sets: (large-first, small-first), each followed by three distinct
/// medium objects.
std::pair<std::vector<CaptionSpec>, std::vector<CaptionSpec>> claim1_sentence_sets(const Vocabulary& vocab,
                                                                                  std::size_t count,
                                                                                  std::uint64_t seed);

/// One single-object short caption per vocabulary entry; caption_id is the name.
std::vector<CaptionSpec> single_object_captions(const Vocabulary& vocab);

}  // namespace oscope

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oscope/caption_forge.hpp"
#include "oscope/embedding_store.hpp"
#include "oscope/io.hpp"

namespace oscope {

struct MatchTrial {
    std::string image_id;
    std::string correct_caption_id;
    std::string incorrect_caption_id;
    Scenario scenario = Scenario::One;

    friend bool operator==(const MatchTrial&, const MatchTrial&) = default;
};

MatchTrial trial_from_pair(const ScenarioPair& pair);

/// Trials JSONL: {"image_id":..., "correct":..., "incorrect":..., "scenario":"one|two"}
Json to_json(const MatchTrial& t);
MatchTrial trial_from_json(const Json& j);
void save_trials(std::span<const MatchTrial> trials, const std::filesystem::path& path);
std::vector<MatchTrial> load_trials(const std::filesystem::path& path);

struct MatchOutcome {
    double score = 0.0;  ///< 1, 0, or 0.5 on an exact tie
    double sim_correct = 0.0;
    double sim_incorrect = 0.0;
};

struct MatchResult {
    double accuracy = 0.0;
    std::vector<MatchOutcome> outcomes;  ///< one per trial, input order
};

/// Scores each trial by comparing cosine(image, correct) with
/// cosine(image, incorrect). KeyError on a missing id, ValueError on no trials.
MatchResult evaluate_matching(std::span<const MatchTrial> trials, const EmbeddingStore& image_store,
                              const EmbeddingStore& text_store);

/// Mean accuracy over the trials of one scenario; ValueError if there are none.
double scenario_accuracy(std::span<const MatchTrial> trials, const MatchResult& result, Scenario scenario);

using TextEncoderFn = std::function<std::vector<double>(const CaptionSpec&)>;

/// Splits the caption into single-object sub-captions, embeds each, and returns
/// the L2-normalized mean.
std::vector<double> aggregate_split_embedding(const CaptionSpec& caption, const TextEncoderFn& encode);
/// Same, looking sub-caption embeddings up by object name; KeyError names a missing object.
std::vector<double> aggregate_split_embedding(const CaptionSpec& caption, const EmbeddingStore& per_object_store);

struct MitigationResult {
    MatchResult original;
    MatchResult mitigated;
    double accuracy_original() const { return original.accuracy; }
    double accuracy_mitigated() const { return mitigated.accuracy; }
};

/// Runs evaluate_matching with the original caption embeddings and again with
/// split-caption aggregates built from `per_object_store` (ids = object names).
MitigationResult evaluate_with_mitigation(std::span<const MatchTrial> trials,
                                          const std::unordered_map<std::string, CaptionSpec>& captions,
                                          const EmbeddingStore& image_store, const EmbeddingStore& text_store,
                                          const EmbeddingStore& per_object_store);

/// Aggregated text store keyed by caption id, for every caption the trials reference.
EmbeddingStore aggregate_store(std::span<const MatchTrial> trials,
                               const std::unordered_map<std::string, CaptionSpec>& captions,
                               const EmbeddingStore& per_object_store);

struct MatchingRow {
    std::string model;
    std::string scenario;
    std::size_t trials = 0;
    double accuracy = 0.0;
    std::optional<double> accuracy_mitigated;
};

/// CSV keyed by (model, scenario), accuracies in percent.
std::string matching_csv(std::span<const MatchingRow> rows);

}  // namespace oscope

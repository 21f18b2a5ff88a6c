#include "oscope/matching_eval.hpp"

#include <set>

#include "oscope/errors.hpp"
#include "oscope/parallel.hpp"

namespace oscope {

MatchTrial trial_from_pair(const ScenarioPair& pair) {
    return {pair.image_id, pair.correct.caption_id, pair.incorrect.caption_id, pair.scenario};
}

Json to_json(const MatchTrial& t) {
    return {{"image_id", t.image_id},
            {"correct", t.correct_caption_id},
            {"incorrect", t.incorrect_caption_id},
            {"scenario", to_string(t.scenario)}};
}

MatchTrial trial_from_json(const Json& j) {
    return {j.at("image_id").get<std::string>(), j.at("correct").get<std::string>(),
            j.at("incorrect").get<std::string>(), scenario_from_string(j.at("scenario").get<std::string>())};
}

void save_trials(std::span<const MatchTrial> trials, const std::filesystem::path& path) {
    std::string out;
    for (const auto& t : trials) out += jsonl_line(to_json(t));
    write_file_atomic(path, out);
}

std::vector<MatchTrial> load_trials(const std::filesystem::path& path) {
    std::vector<MatchTrial> out;
    for_each_jsonl(path, [&](std::size_t line, const Json& j) {
        try {
            out.push_back(trial_from_json(j));
        } catch (const Json::exception& e) {
            throw FormatError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
        }
    });
    return out;
}

MatchResult evaluate_matching(std::span<const MatchTrial> trials, const EmbeddingStore& image_store,
                              const EmbeddingStore& text_store) {
    if (trials.empty()) throw ValueError("matching needs at least one trial");
    if (image_store.dim() != text_store.dim())
        throw DimError("image dim " + std::to_string(image_store.dim()) + " != text dim " +
                       std::to_string(text_store.dim()));
    for (const auto& t : trials) {
        image_store.at(t.image_id);
        text_store.at(t.correct_caption_id);
        text_store.at(t.incorrect_caption_id);
    }
    MatchResult r;
    r.outcomes.resize(trials.size());
    parallel_for(trials.size(), 256, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& t = trials[i];
            auto img = image_store.at(t.image_id);
            auto& o = r.outcomes[i];
            o.sim_correct = cosine(img, text_store.at(t.correct_caption_id));
            o.sim_incorrect = cosine(img, text_store.at(t.incorrect_caption_id));
            o.score = o.sim_correct > o.sim_incorrect ? 1.0 : o.sim_correct < o.sim_incorrect ? 0.0 : 0.5;
        }
    });
    double total = 0.0;
    for (const auto& o : r.outcomes) total += o.score;
    r.accuracy = total / static_cast<double>(trials.size());
    return r;
}

double scenario_accuracy(std::span<const MatchTrial> trials, const MatchResult& result, Scenario scenario) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (trials[i].scenario != scenario) continue;
        total += result.outcomes.at(i).score;
        ++n;
    }
    if (n == 0) throw ValueError("no trials for scenario " + std::string(to_string(scenario)));
    return total / static_cast<double>(n);
}

std::vector<double> aggregate_split_embedding(const CaptionSpec& caption, const TextEncoderFn& encode) {
    const auto parts = split_caption(caption);
    std::vector<double> mean;
    for (const auto& part : parts) {
        auto v = encode(part);
        if (mean.empty()) mean.assign(v.size(), 0.0);
        if (v.size() != mean.size()) throw DimError("sub-caption embeddings differ in length");
        for (std::size_t k = 0; k < v.size(); ++k) mean[k] += v[k];
    }
    for (auto& x : mean) x /= static_cast<double>(parts.size());
    return normalized_copy(mean);
}

std::vector<double> aggregate_split_embedding(const CaptionSpec& caption, const EmbeddingStore& per_object_store) {
    return aggregate_split_embedding(caption, [&](const CaptionSpec& part) {
        const auto& object = part.objects.front();
        if (!per_object_store.contains(object))
            throw KeyError("no single-object embedding for '" + object + "'");
        auto v = per_object_store.at(object);
        return std::vector<double>(v.begin(), v.end());
    });
}

EmbeddingStore aggregate_store(std::span<const MatchTrial> trials,
                               const std::unordered_map<std::string, CaptionSpec>& captions,
                               const EmbeddingStore& per_object_store) {
    EmbeddingStore out(per_object_store.model_id() + "+split-mean", Modality::Text, per_object_store.dim(), true);
    std::set<std::string> done;
    auto add = [&](const std::string& id) {
        if (!done.insert(id).second) return;
        auto it = captions.find(id);
        if (it == captions.end()) throw KeyError("caption '" + id + "' is not in the caption manifest");
        out.add(id, std::span<const double>(aggregate_split_embedding(it->second, per_object_store)));
    };
    for (const auto& t : trials) {
        add(t.correct_caption_id);
        add(t.incorrect_caption_id);
    }
    return out;
}

MitigationResult evaluate_with_mitigation(std::span<const MatchTrial> trials,
                                          const std::unordered_map<std::string, CaptionSpec>& captions,
                                          const EmbeddingStore& image_store, const EmbeddingStore& text_store,
                                          const EmbeddingStore& per_object_store) {
    if (trials.empty()) throw ValueError("matching needs at least one trial");
    MitigationResult r;
    r.original = evaluate_matching(trials, image_store, text_store);
    r.mitigated = evaluate_matching(trials, image_store, aggregate_store(trials, captions, per_object_store));
    return r;
}

std::string matching_csv(std::span<const MatchingRow> rows) {
    std::string out = "model,scenario,trials,accuracy,accuracy_mitigated\n";
    for (const auto& r : rows) {
        out += csv_field(r.model) + "," + csv_field(r.scenario) + "," + std::to_string(r.trials) + "," +
               fixed(100.0 * r.accuracy, 2) + ",";
        if (r.accuracy_mitigated) out += fixed(100.0 * *r.accuracy_mitigated, 2);
        out += "\n";
    }
    return out;
}

}  // namespace oscope

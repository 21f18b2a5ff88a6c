#include "pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <unordered_map>

#include "oscope/bias_stats.hpp"
#include "oscope/caption_forge.hpp"
#include "oscope/contrastive_sim.hpp"
#include "oscope/embedding_store.hpp"
#include "oscope/linear_probe.hpp"
#include "oscope/manifests.hpp"
#include "oscope/matching_eval.hpp"
#include "oscope/probe_retrieval.hpp"
#include "oscope/svg.hpp"
#include "oscope/synthetic_encoders.hpp"

#ifndef OSCOPE_VERSION
#define OSCOPE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace oscope::cli {

std::string tool_version() { return OSCOPE_VERSION; }

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

namespace {

// Config access ---------------------------------------------------------------------

/// Typed view of one JSON object that remembers which keys were read, so
/// leftovers can be reported as unknown fields.
class Fields {
public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) throw SchemaError(field(key) + ": required field is missing");
        return *it;
    }

    std::string str(const std::string& key, std::optional<std::string> dflt = std::nullopt) {
        if (!has(key) && dflt) return seen(key), *dflt;
        const auto& v = raw(key);
        if (!v.is_string()) throw SchemaError(field(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                       std::optional<std::string> dflt = std::nullopt) {
        auto v = str(key, dflt);
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw SchemaError(field(key) + ": invalid value '" + v + "' (expected one of " + list + ")");
        }
        return v;
    }

    std::int64_t integer(const std::string& key, std::optional<std::int64_t> dflt = std::nullopt,
                         std::int64_t lo = 0, std::int64_t hi = INT64_MAX) {
        if (!has(key) && dflt) return seen(key), *dflt;
        const auto& v = raw(key);
        if (!v.is_number_integer()) throw SchemaError(field(key) + ": expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < lo || x > hi)
            throw SchemaError(field(key) + ": " + std::to_string(x) + " is outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        return x;
    }

    std::size_t count(const std::string& key, std::optional<std::size_t> dflt = std::nullopt, std::size_t lo = 1) {
        return static_cast<std::size_t>(
            integer(key, dflt ? std::optional<std::int64_t>(static_cast<std::int64_t>(*dflt)) : std::nullopt,
                    static_cast<std::int64_t>(lo)));
    }

    double number(const std::string& key, std::optional<double> dflt = std::nullopt) {
        if (!has(key) && dflt) return seen(key), *dflt;
        const auto& v = raw(key);
        if (!v.is_number()) throw SchemaError(field(key) + ": expected a number");
        return v.get<double>();
    }

    bool boolean(const std::string& key, bool dflt) {
        if (!has(key)) return seen(key), dflt;
        const auto& v = raw(key);
        if (!v.is_boolean()) throw SchemaError(field(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::vector<Json> list(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_array()) throw SchemaError(field(key) + ": expected an array");
        return {v.begin(), v.end()};
    }

    std::optional<Json> optional(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return raw(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw SchemaError(field(k) + ": unknown field");
    }

private:
    void seen(const std::string& key) { seen_.insert(key); }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Run context ------------------------------------------------------------------------

struct RunContext {
    fs::path run_dir;
    fs::path config_dir;
    std::optional<std::uint64_t> seed;
    std::set<std::string> outputs;  ///< run-relative paths
    Json results = Json::array();

    fs::path input(Fields& f, const std::string& key) {
        const fs::path rel = f.str(key);
        if (rel.empty()) throw SchemaError(f.field(key) + ": empty path");
        fs::path p;
        if (rel.is_absolute())
            p = rel;
        else if (fs::exists(run_dir / rel))
            p = run_dir / rel;
        else
            p = config_dir / rel;
        if (!fs::exists(p)) throw MissingInputError(f.field(key) + ": input '" + rel.string() + "' does not exist");
        return p;
    }

    std::optional<fs::path> optional_input(Fields& f, const std::string& key) {
        if (!f.has(key)) return std::nullopt;
        return input(f, key);
    }

    /// Output paths stay inside the run directory.
    std::string output(Fields& f, const std::string& key, const std::string& dflt) {
        const auto rel = f.str(key, dflt);
        const fs::path p(rel);
        if (rel.empty() || p.is_absolute() || std::any_of(p.begin(), p.end(), [](const fs::path& c) { return c == ".."; }))
            throw SchemaError(f.field(key) + ": output paths must be relative and stay inside the run directory");
        return p.lexically_normal().generic_string();
    }

    void write(const std::string& rel, std::string_view bytes) {
        write_file_atomic(run_dir / rel, bytes);
        outputs.insert(rel);
    }

    void note(const std::string& rel) { outputs.insert(rel); }

    std::uint64_t seed_for(Fields& f) {
        if (f.has("seed")) return static_cast<std::uint64_t>(f.integer("seed"));
        if (!seed) throw SchemaError(f.field("seed") + ": required (no top-level seed either)");
        return *seed;
    }
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

template <class T>
T parse_enum(Fields& f, const std::string& key, T (*parse)(std::string_view), const std::string& dflt) {
    const auto v = f.str(key, dflt);
    try {
        return parse(v);
    } catch (const Error&) {
        throw SchemaError(f.field(key) + ": invalid value '" + v + "'");
    }
}

std::unordered_map<std::string, CaptionSpec> caption_index(const std::vector<CaptionSpec>& captions) {
    std::unordered_map<std::string, CaptionSpec> out;
    for (const auto& c : captions) out.emplace(c.caption_id, c);
    return out;
}

std::vector<svg::Bar> percent_bars(const std::map<int, double>& values) {
    std::vector<svg::Bar> bars;
    for (const auto& [k, v] : values) bars.push_back({std::to_string(k), 100.0 * v});
    return bars;
}

// Verbs -------------------------------------------------------------------------------

void step_forge(Fields& f, RunContext& ctx) {
    const auto vocab = resolve_vocabulary(f.str("vocab", "comco"));
    const int n = static_cast<int>(f.integer("n_objects", 4, 2, 5));
    const auto count = f.count("count");
    const auto templ = parse_enum(f, "template", &template_from_string, "short");
    const auto seed = ctx.seed_for(f);
    const auto scenes_out = ctx.output(f, "scenes", "scenes.jsonl");
    const auto captions_out = ctx.output(f, "captions", "captions.jsonl");
    const auto gallery_captions_out = ctx.output(f, "gallery_captions", "gallery_captions.jsonl");
    const auto gallery_scenes_out = ctx.output(f, "gallery_scenes", "gallery_scenes.jsonl");
    const bool scenario = f.boolean("scenario", false);
    const auto trials_out = ctx.output(f, "trials", "trials.jsonl");
    const auto scenario_captions_out = ctx.output(f, "scenario_captions", "scenario_captions.jsonl");
    const bool claim1 = f.boolean("claim1", false);
    const auto claim1_large_out = ctx.output(f, "claim1_large_first", "claim1_large_first.jsonl");
    const auto claim1_small_out = ctx.output(f, "claim1_small_first", "claim1_small_first.jsonl");
    f.finish();

    auto m = gen_manifests(vocab, n, count, seed);
    if (templ == Template::Long)
        for (auto& c : m.captions) c = make_caption(c.objects, Template::Long, {}, c.caption_id);
    save_scenes(m.scenes, ctx.run_dir / scenes_out);
    save_captions(m.captions, ctx.run_dir / captions_out);
    ctx.note(scenes_out);
    ctx.note(captions_out);

    save_captions(single_object_captions(vocab), ctx.run_dir / gallery_captions_out);
    std::vector<SceneSpec> singles;
    for (const auto& e : vocab.entries()) singles.push_back({e.name, {{e.name, SizeRole::Large, 0}}});
    save_scenes(singles, ctx.run_dir / gallery_scenes_out);
    ctx.note(gallery_captions_out);
    ctx.note(gallery_scenes_out);

    if (scenario) {
        std::vector<MatchTrial> trials;
        std::vector<CaptionSpec> caps;
        for (const auto& p : gen_scenario_pairs(m.scenes, vocab, seed + 1)) {
            trials.push_back(trial_from_pair(p));
            caps.push_back(p.correct);
            caps.push_back(p.incorrect);
        }
        save_trials(trials, ctx.run_dir / trials_out);
        save_captions(caps, ctx.run_dir / scenario_captions_out);
        ctx.note(trials_out);
        ctx.note(scenario_captions_out);
    }
    if (claim1) {
        auto [large_first, small_first] = claim1_sentence_sets(vocab, count, seed + 2);
        save_captions(large_first, ctx.run_dir / claim1_large_out);
        save_captions(small_first, ctx.run_dir / claim1_small_out);
        ctx.note(claim1_large_out);
        ctx.note(claim1_small_out);
    }
}

void step_mock_encode(Fields& f, RunContext& ctx) {
    const bool text = f.has("captions");
    if (text == f.has("scenes")) throw SchemaError(f.field("captions") + ": give exactly one of captions or scenes");
    const auto input = ctx.input(f, text ? "captions" : "scenes");
    const auto preset = f.choice("preset", {"plain", "calibrated"}, "plain");
    MockEncoderConfig cfg;
    if (preset == "calibrated") cfg = MockEncoderConfig::calibrated(f.number("decay", 0.6), f.number("size_exponent", 1.0));
    cfg.dim = f.count("dim", cfg.dim, 8);
    cfg.seed = ctx.seed_for(f);
    cfg.text_decay = f.number("decay", cfg.text_decay);
    cfg.image_size_exponent = f.number("size_exponent", cfg.image_size_exponent);
    cfg.text_jitter = f.number("text_jitter", cfg.text_jitter);
    cfg.image_jitter = f.number("image_jitter", cfg.image_jitter);
    cfg.text_noise = f.number("text_noise", cfg.text_noise);
    const double large_scale = f.number("large_scale", 3.0);
    std::optional<Vocabulary> vocab;
    if (f.has("vocab")) vocab = resolve_vocabulary(f.str("vocab"));
    const auto format = f.choice("format", {"binary", "jsonl"}, "binary");
    const auto out = ctx.output(f, "output", text ? "text.embs" : "image.embs");
    f.finish();
    try {
        cfg.validate();
    } catch (const ValueError& e) {
        throw SchemaError(f.field("preset") + ": " + e.what());
    }

    auto store = text ? mock_text_store(cfg, load_captions(input), vocab ? &*vocab : nullptr)
                      : mock_image_store(cfg, load_scenes(input), large_scale);
    save_store(store, ctx.run_dir / out, format == "binary" ? StoreFormat::Binary : StoreFormat::Jsonl);
    ctx.note(out);
}

void step_probe(Fields& f, RunContext& ctx) {
    ProbeTask task;
    const auto kind = f.choice("task", {"tor", "ior", "i2tor"}, "tor");
    task.query_store = std::make_shared<EmbeddingStore>(load_store(ctx.input(f, "queries")));
    task.gallery_store = std::make_shared<EmbeddingStore>(load_store(ctx.input(f, "gallery")));
    if (f.has("captions") == f.has("scenes")) throw SchemaError(f.field("captions") + ": give exactly one of captions or scenes");
    if (f.has("captions"))
        task.query_groups = groups_by_position(load_captions(ctx.input(f, "captions")));
    else
        task.query_groups = groups_by_size_role(load_scenes(ctx.input(f, "scenes")));
    if (f.has("gallery_captions") && f.has("gallery_scenes"))
        throw SchemaError(f.field("gallery_captions") + ": give at most one of gallery_captions or gallery_scenes");
    if (auto p = ctx.optional_input(f, "gallery_captions"))
        task.gallery_object_of = gallery_map_from_captions(load_captions(*p));
    else if (auto q = ctx.optional_input(f, "gallery_scenes"))
        task.gallery_object_of = gallery_map_from_scenes(load_scenes(*q));
    else
        task.gallery_object_of = identity_gallery_map(*task.gallery_store);
    const auto label = f.str("label", task.query_store->model_id());
    const auto report_out = ctx.output(f, "report", kind + ".json");
    const auto table_out = ctx.output(f, "table", kind + ".csv");
    const auto chart_out = ctx.output(f, "chart", kind + ".svg");
    f.finish();

    auto report = run_probe(task);
    Json j = to_json(report);
    j["task"] = kind;
    j["label"] = label;
    ctx.write(report_out, dump(j));
    const std::pair<std::string, ProbeReport> row{label, report};
    ctx.write(table_out, probe_reports_csv({&row, 1}));
    std::vector<svg::Bar> bars;
    for (const auto& [k, v] : report.per_group) bars.push_back({k, 100.0 * v.conditional_rate});
    ctx.write(chart_out, svg::bar_chart(label + " " + kind, "conditional rate (%)", bars));
    ctx.results.push_back({{"kind", "probe"}, {"task", kind}, {"label", label}, {"file", report_out}});
}

void step_train_probe(Fields& f, RunContext& ctx) {
    const auto store = load_store(ctx.input(f, "embeddings"));
    if (f.has("captions") == f.has("scenes")) throw SchemaError(f.field("captions") + ": give exactly one of captions or scenes");
    std::map<std::string, Labels> groups;
    std::string kind;
    if (f.has("captions")) {
        kind = "toc";
        for (const auto& c : load_captions(ctx.input(f, "captions")))
            for (std::size_t p = 0; p < c.objects.size(); ++p) groups[std::to_string(p + 1)][c.caption_id] = c.objects[p];
    } else {
        kind = "ioc";
        for (const auto& [id, objs] : groups_by_size_role(load_scenes(ctx.input(f, "scenes"))))
            for (const auto& [obj, key] : objs) groups[key][id] = obj;
    }
    kind = f.str("task", kind);
    TrainConfig cfg;
    if (auto t = f.optional("train")) {
        try {
            cfg = train_config_from_json(*t);
        } catch (const std::exception& e) {
            throw SchemaError(f.field("train") + ": " + e.what());
        }
    }
    cfg.seed = ctx.seed_for(f);
    try {
        cfg.validate();
    } catch (const ValueError& e) {
        throw SchemaError(f.field("train") + ": " + e.what());
    }
    const auto label = f.str("label", store.model_id());
    const auto report_out = ctx.output(f, "report", kind + ".json");
    const auto table_out = ctx.output(f, "table", kind + ".csv");
    const auto chart_out = ctx.output(f, "chart", kind + ".svg");
    std::optional<std::string> weights_out;
    if (f.has("weights")) weights_out = ctx.output(f, "weights", "");
    f.finish();

    auto results = train_group_probes(store, groups, cfg);
    std::vector<std::pair<std::string, const TrainResult*>> ordered;
    for (const auto& [k, r] : results) ordered.emplace_back(k, &r);
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return group_key_less(a.first, b.first); });

    Json per_group = Json::array(), probes = Json::array();
    std::string csv = "group,heldout_accuracy,train_size,heldout_size,final_train_loss\n";
    std::vector<svg::Bar> bars;
    for (const auto& [k, r] : ordered) {
        per_group.push_back({{"group", k},
                             {"heldout_accuracy", r->heldout_accuracy},
                             {"train_size", r->train_size},
                             {"heldout_size", r->heldout_size},
                             {"final_train_loss", r->history.back().train_loss}});
        csv += csv_field(k) + "," + fixed(100.0 * r->heldout_accuracy, 2) + "," + std::to_string(r->train_size) + "," +
               std::to_string(r->heldout_size) + "," + fixed(r->history.back().train_loss, 6) + "\n";
        bars.push_back({k, 100.0 * r->heldout_accuracy});
        probes.push_back(to_json(r->probe));
    }
    ctx.write(report_out, dump({{"task", kind}, {"label", label}, {"train", to_json(cfg)}, {"per_group", per_group}}));
    ctx.write(table_out, csv);
    ctx.write(chart_out, svg::bar_chart(label + " " + kind, "held-out accuracy (%)", bars));
    if (weights_out) ctx.write(*weights_out, jsonl_line(probes));
    ctx.results.push_back({{"kind", "classification"}, {"task", kind}, {"label", label}, {"file", report_out}});
}

void step_match(Fields& f, RunContext& ctx) {
    const auto images = load_store(ctx.input(f, "images"));
    const auto texts = load_store(ctx.input(f, "texts"));
    const auto trials = load_trials(ctx.input(f, "trials"));
    std::optional<EmbeddingStore> per_object;
    std::unordered_map<std::string, CaptionSpec> captions;
    if (auto p = ctx.optional_input(f, "per_object")) {
        per_object = load_store(*p);
        captions = caption_index(load_captions(ctx.input(f, "captions")));
    } else if (f.has("captions")) {
        throw SchemaError(f.field("captions") + ": only used together with per_object");
    }
    const auto label = f.str("label", texts.model_id());
    const auto report_out = ctx.output(f, "report", "match.json");
    const auto table_out = ctx.output(f, "table", "match.csv");
    f.finish();

    MatchResult original, mitigated;
    if (per_object) {
        auto m = evaluate_with_mitigation(trials, captions, images, texts, *per_object);
        original = std::move(m.original);
        mitigated = std::move(m.mitigated);
    } else {
        original = evaluate_matching(trials, images, texts);
    }
    Json scenarios = Json::object();
    std::vector<MatchingRow> rows;
    for (auto s : {Scenario::One, Scenario::Two}) {
        const auto n = static_cast<std::size_t>(
            std::count_if(trials.begin(), trials.end(), [&](const MatchTrial& t) { return t.scenario == s; }));
        if (!n) continue;
        MatchingRow row{label, std::string(to_string(s)), n, scenario_accuracy(trials, original, s), std::nullopt};
        Json js{{"trials", n}, {"accuracy", row.accuracy}};
        if (per_object) {
            row.accuracy_mitigated = scenario_accuracy(trials, mitigated, s);
            js["accuracy_mitigated"] = *row.accuracy_mitigated;
        }
        scenarios[row.scenario] = js;
        rows.push_back(row);
    }
    Json j{{"label", label}, {"trials", trials.size()}, {"accuracy", original.accuracy}, {"scenarios", scenarios}};
    if (per_object) j["accuracy_mitigated"] = mitigated.accuracy;
    ctx.write(report_out, dump(j));
    ctx.write(table_out, matching_csv(rows));
    ctx.results.push_back({{"kind", "match"}, {"task", "matching"}, {"label", label}, {"file", report_out}});
}

void step_stats(Fields& f, RunContext& ctx) {
    const auto kind = f.choice("kind", {"largest_position", "presence", "attention"});
    const auto records = ctx.input(f, "records");
    const auto label = f.str("label", records.stem().string());
    std::optional<int> n_filter;
    if (kind == "largest_position" && f.has("n_objects")) n_filter = static_cast<int>(f.integer("n_objects", {}, 1, 64));
    std::optional<fs::path> scenes;
    if (kind == "attention") scenes = ctx.input(f, "scenes");
    const auto report_out = ctx.output(f, "report", kind + ".json");
    const auto table_out = ctx.output(f, "table", kind + ".csv");
    const auto chart_out = ctx.output(f, "chart", kind + ".svg");
    f.finish();

    if (kind == "largest_position") {
        auto h = largest_position_histogram(load_analysis_records(records), n_filter);
        Json fr = Json::object();
        for (const auto& [p, v] : h.fractions) fr[std::to_string(p)] = v;
        ctx.write(report_out, dump({{"label", label},
                                    {"fractions", fr},
                                    {"records_used", h.records_used},
                                    {"records_dropped", h.records_dropped},
                                    {"zero_area_objects", h.zero_area_objects}}));
        ctx.write(table_out, position_csv("fraction", h.fractions));
        ctx.write(chart_out, svg::bar_chart(label + ": position of the largest object", "records (%)", percent_bars(h.fractions)));
        ctx.results.push_back({{"kind", "position"}, {"task", "largest_position"}, {"label", label}, {"file", report_out}});
    } else if (kind == "presence") {
        auto grouped = presence_by_position_grouped(load_detection_records(records));
        Json by_len = Json::object();
        std::string csv = grouped.size() == 1 ? position_csv("presence", grouped.begin()->second)
                                              : "n_objects,position,presence\n";
        for (const auto& [n, rates] : grouped) {
            Json r = Json::object();
            for (const auto& [p, v] : rates) {
                r[std::to_string(p)] = v;
                if (grouped.size() > 1) csv += std::to_string(n) + "," + std::to_string(p) + "," + fixed(100.0 * v, 4) + "\n";
            }
            by_len[std::to_string(n)] = r;
        }
        ctx.write(report_out, dump({{"label", label}, {"by_length", by_len}}));
        ctx.write(table_out, csv);
        ctx.write(chart_out, svg::bar_chart(label + ": presence by position", "detected (%)",
                                            percent_bars(grouped.rbegin()->second)));
        ctx.results.push_back({{"kind", "presence"}, {"task", "presence"}, {"label", label}, {"file", report_out}});
    } else {
        auto s = attention_role_summary(load_attention_records(records), load_scenes(*scenes));
        ctx.write(report_out, dump({{"label", label},
                                    {"images", s.images},
                                    {"mean_large", s.mean_large},
                                    {"mean_small", s.mean_small},
                                    {"mean_background", s.mean_background}}));
        ctx.write(table_out, "label,images,mean_large,mean_small,mean_background\n" + csv_field(label) + "," +
                                 std::to_string(s.images) + "," + fixed(s.mean_large, 6) + "," + fixed(s.mean_small, 6) +
                                 "," + fixed(s.mean_background, 6) + "\n");
        ctx.write(chart_out, svg::bar_chart(label + ": CLS attention share", "share (%)",
                                            {{"large", 100 * s.mean_large},
                                             {"small", 100 * s.mean_small},
                                             {"background", 100 * s.mean_background}}));
        ctx.results.push_back({{"kind", "attention"}, {"task", "attention"}, {"label", label}, {"file", report_out}});
    }
}

void step_simulate(Fields& f, RunContext& ctx) {
    const auto kind = f.choice("kind", {"objective", "convergence", "toy"});
    const auto seed = ctx.seed_for(f);
    const auto report_out = ctx.output(f, "report", kind + ".json");
    const auto table_out = ctx.output(f, "table", kind + ".csv");
    const auto chart_out = ctx.output(f, "chart", kind + ".svg");

    if (kind == "objective" || kind == "convergence") {
        const auto dist = f.choice("distribution", {"gaussian", "rademacher"}, "gaussian") == "gaussian"
                              ? LatentDistribution::Gaussian
                              : LatentDistribution::Rademacher;
        const bool direct = f.choice("sampling", {"projected", "direct"}, "projected") == "direct";
        const auto b = f.count("b", 15);
        const auto k = f.count("k", 4, 0);
        const auto trials = f.count("trials", 2000);
        if (kind == "objective") {
            SimConfig cfg{f.count("d", 1024), k, b, trials, seed, dist, direct};
            f.finish();
            try {
                cfg.validate();
            } catch (const ValueError& e) {
                throw SchemaError(f.field("d") + ": " + e.what());
            }
            auto s = objective_samples(cfg);
            auto ideal = summarize(s.ideal, b), trunc = summarize(s.truncated, b);
            ctx.write(report_out, dump({{"d", cfg.d}, {"k", k}, {"b", b}, {"trials", trials},
                                        {"ideal", to_json(ideal)}, {"truncated", to_json(trunc)}}));
            ctx.write(table_out, "encoder,mean,std_error,analytic_limit\nideal," + fixed(ideal.mean, 6) + "," +
                                     fixed(ideal.std_error, 6) + "," + fixed(ideal.analytic_limit, 6) + "\ntruncated," +
                                     fixed(trunc.mean, 6) + "," + fixed(trunc.std_error, 6) + "," +
                                     fixed(trunc.analytic_limit, 6) + "\n");
            ctx.write(chart_out, svg::bar_chart("objective, b=" + std::to_string(b), "value",
                                                {{"ideal", ideal.mean}, {"truncated", trunc.mean},
                                                 {"e/(e+b)", ideal.analytic_limit}}));
        } else {
            std::vector<std::size_t> dims;
            for (const auto& d : f.list("dims")) {
                if (!d.is_number_unsigned() || d.get<std::size_t>() == 0)
                    throw SchemaError(f.field("dims") + ": expected positive integers");
                dims.push_back(d.get<std::size_t>());
            }
            f.finish();
            if (dims.empty() || !std::is_sorted(dims.begin(), dims.end(), std::less_equal<>{}) ||
                std::adjacent_find(dims.begin(), dims.end()) != dims.end())
                throw SchemaError(f.field("dims") + ": must be non-empty and strictly increasing");
            if (direct) throw SchemaError(f.field("sampling") + ": the convergence sweep always uses projected sampling");
            auto sweep = convergence_sweep(b, k, dims, trials, seed, dist);
            Json pts = Json::array();
            std::string csv = "d,ideal_mean,ideal_se,truncated_mean,truncated_se,analytic_limit\n";
            svg::Series ideal{"ideal", {}}, trunc{"truncated", {}}, limit{"e/(e+b)", {}};
            for (const auto& p : sweep) {
                pts.push_back(to_json(p));
                csv += std::to_string(p.d) + "," + fixed(p.ideal.mean, 6) + "," + fixed(p.ideal.std_error, 6) + "," +
                       fixed(p.truncated.mean, 6) + "," + fixed(p.truncated.std_error, 6) + "," +
                       fixed(p.ideal.analytic_limit, 6) + "\n";
                const double x = std::log2(static_cast<double>(p.d));
                ideal.points.emplace_back(x, p.ideal.mean);
                trunc.points.emplace_back(x, p.truncated.mean);
                limit.points.emplace_back(x, p.ideal.analytic_limit);
            }
            ctx.write(report_out, dump({{"b", b}, {"k", k}, {"trials", trials}, {"points", pts}}));
            ctx.write(table_out, csv);
            ctx.write(chart_out, svg::line_chart("objective vs dimension", "log2 d", "objective", {ideal, trunc, limit}));
        }
        return;
    }

    ToyTrainerConfig base;
    base.seed = seed;
    base.d = f.count("d", base.d, 2);
    base.vocab_size = f.count("vocab_size", base.vocab_size, 2);
    base.positions = f.count("positions", base.positions, 2);
    base.steps = f.count("steps", base.steps);
    base.batch = f.count("batch", base.batch, 2);
    base.learning_rate = f.number("learning_rate", base.learning_rate);
    base.large_scale = f.number("large_scale", base.large_scale);
    base.eval_captions = f.count("eval_captions", base.eval_captions);
    base.eval_jitter = f.number("eval_jitter", base.eval_jitter);
    base.checkpoints = f.count("checkpoints", base.checkpoints);
    std::vector<double> correlations;
    if (f.has("correlations")) {
        for (const auto& c : f.list("correlations")) {
            if (!c.is_number()) throw SchemaError(f.field("correlations") + ": expected numbers");
            correlations.push_back(c.get<double>());
        }
    } else {
        correlations.push_back(f.number("size_order_correlation", base.size_order_correlation));
    }
    f.finish();

    Json runs = Json::array();
    std::string csv = "size_order_correlation,step,first_position_rate,objective\n";
    std::vector<svg::Series> series;
    for (double c : correlations) {
        auto cfg = base;
        cfg.size_order_correlation = c;
        try {
            cfg.validate();
        } catch (const ValueError& e) {
            throw SchemaError(f.field("correlations") + ": " + e.what());
        }
        auto cps = toy_bias_trainer(cfg);
        Json jc = Json::array();
        svg::Series s{"corr " + fixed(c, 2), {}};
        for (const auto& cp : cps) {
            jc.push_back(to_json(cp));
            csv += fixed(c, 4) + "," + std::to_string(cp.step) + "," + fixed(cp.first_position_rate, 4) + "," +
                   fixed(cp.objective, 6) + "\n";
            s.points.emplace_back(static_cast<double>(cp.step), cp.first_position_rate);
        }
        runs.push_back({{"size_order_correlation", c}, {"checkpoints", jc}});
        series.push_back(std::move(s));
    }
    ctx.write(report_out, dump({{"seed", seed}, {"runs", runs}}));
    ctx.write(table_out, csv);
    ctx.write(chart_out, svg::line_chart("first-position retrieval during training", "step", "rate (%)", series));
}

void step_report(Fields& f, RunContext& ctx) {
    std::vector<fs::path> dirs;
    const auto runs = f.list("runs");
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!runs[i].is_string()) throw SchemaError(f.field("runs") + "[" + std::to_string(i) + "]: expected a path");
        fs::path p = runs[i].get<std::string>();
        if (p.is_relative()) p = fs::exists(ctx.run_dir / p) ? ctx.run_dir / p : ctx.config_dir / p;
        dirs.push_back(p);
    }
    if (dirs.empty()) throw SchemaError(f.field("runs") + ": at least one run directory is required");
    const auto title = f.str("title", "");
    const auto md_out = ctx.output(f, "output", "report.md");
    const auto csv_out = ctx.output(f, "table", "report.csv");
    f.finish();
    auto r = compare_runs(dirs, title);
    ctx.write(md_out, r.markdown);
    ctx.write(csv_out, r.csv);
}

using StepFn = void (*)(Fields&, RunContext&);

const std::map<std::string, StepFn>& step_table() {
    static const std::map<std::string, StepFn> t{
        {"forge", &step_forge},     {"mock-encode", &step_mock_encode}, {"probe", &step_probe},
        {"train-probe", &step_train_probe}, {"match", &step_match}, {"stats", &step_stats},
        {"simulate", &step_simulate}, {"report", &step_report}};
    return t;
}

// Comparison tables ------------------------------------------------------------------

struct Row {
    std::string task;
    std::string label;
    std::map<std::string, double> values;  ///< percent
    std::string unit;
};

std::vector<Row> rows_of(const Json& result, const fs::path& run_dir) {
    const auto kind = result.at("kind").get<std::string>();
    const auto task = result.at("task").get<std::string>();
    const auto label = result.at("label").get<std::string>();
    const auto file = run_dir / result.at("file").get<std::string>();
    if (!fs::exists(file)) throw MissingInputError("run output '" + file.string() + "' is missing");
    const auto j = Json::parse(read_file(file));
    std::vector<Row> out;
    if (kind == "probe") {
        Row r{task, label, {}, "conditional retrieval rate, %"};
        for (const auto& g : j.at("per_group")) r.values[g.at("group")] = 100.0 * g.at("conditional_rate").get<double>();
        out.push_back(r);
    } else if (kind == "classification") {
        Row r{task, label, {}, "held-out probe accuracy, %"};
        for (const auto& g : j.at("per_group")) r.values[g.at("group")] = 100.0 * g.at("heldout_accuracy").get<double>();
        out.push_back(r);
    } else if (kind == "match") {
        Row r{task, label, {}, "matching accuracy, %"};
        for (const auto& [s, v] : j.at("scenarios").items()) {
            r.values["scenario " + s] = 100.0 * v.at("accuracy").get<double>();
            if (v.contains("accuracy_mitigated"))
                r.values["scenario " + s + " (split)"] = 100.0 * v.at("accuracy_mitigated").get<double>();
        }
        out.push_back(r);
    } else if (kind == "position") {
        Row r{task, label, {}, "records with the largest object at each position, %"};
        for (const auto& [p, v] : j.at("fractions").items()) r.values[p] = 100.0 * v.get<double>();
        out.push_back(r);
    } else if (kind == "presence") {
        for (const auto& [n, rates] : j.at("by_length").items()) {
            Row r{task, label + " (n=" + n + ")", {}, "prompted objects detected, by position, %"};
            for (const auto& [p, v] : rates.items()) r.values[p] = 100.0 * v.get<double>();
            out.push_back(r);
        }
    } else if (kind == "attention") {
        out.push_back({task, label,
                       {{"large", 100.0 * j.at("mean_large").get<double>()},
                        {"small", 100.0 * j.at("mean_small").get<double>()},
                        {"background", 100.0 * j.at("mean_background").get<double>()}},
                       "CLS attention share, %"});
    }
    return out;
}

std::string task_title(const std::string& task) {
    static const std::map<std::string, std::string> names{
        {"tor", "TOR"}, {"ior", "IOR"}, {"i2tor", "I2TOR"}, {"toc", "TOC"}, {"ioc", "IOC"},
        {"matching", "image-text matching"}, {"largest_position", "largest-object position"},
        {"presence", "presence by position"}, {"attention", "CLS attention"}};
    auto it = names.find(task);
    return it == names.end() ? task : it->second;
}

}  // namespace

const std::vector<std::string>& step_verbs() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> out;
        for (const auto& [k, fn] : step_table()) out.push_back(k);
        return out;
    }();
    return v;
}

Json load_config(const fs::path& path) {
    if (!fs::exists(path)) throw MissingInputError("config '" + path.string() + "' does not exist");
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw SchemaError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("config: expected a JSON object");
    return j;
}

Json run_experiment(const Json& config, const fs::path& config_dir, const fs::path& out_dir) {
    Fields top(config, "");
    RunContext ctx;
    ctx.config_dir = config_dir;
    ctx.run_dir = out_dir;
    const auto name = top.str("name");
    if (top.has("seed")) ctx.seed = static_cast<std::uint64_t>(top.integer("seed"));
    top.optional("out_dir");  // consumed by the caller
    top.optional("description");
    const auto steps = top.list("steps");
    top.finish();
    if (steps.empty()) throw SchemaError("steps: at least one step is required");

    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const std::string path = "steps[" + std::to_string(i) + "]";
        Fields f(steps[i], path);
        const auto verb = f.str("verb");
        auto it = step_table().find(verb);
        if (it == step_table().end()) throw SchemaError(path + ".verb: unknown verb '" + verb + "'");
        try {
            it->second(f, ctx);
        } catch (const SchemaError&) {
            throw;
        } catch (const MissingInputError&) {
            throw;
        } catch (const Error& e) {
            rethrow_with_context(e, path + " (" + verb + "): ");
        }
    }

    Json outputs = Json::array();
    for (const auto& rel : ctx.outputs) outputs.push_back({{"path", rel}, {"sha256", sha256_hex(read_file(out_dir / rel))}});
    Json manifest{{"tool", "oscope"},
                  {"version", tool_version()},
                  {"name", name},
                  {"config_sha256", sha256_hex(config.dump())},
                  {"config", config},
                  {"outputs", outputs},
                  {"results", ctx.results}};
    write_file_atomic(out_dir / kManifestName, dump(manifest));
    return manifest;
}

ComparisonReport compare_runs(const std::vector<fs::path>& run_dirs, const std::string& title) {
    if (run_dirs.empty()) throw SchemaError("runs: at least one run directory is required");
    std::vector<Row> rows;
    for (const auto& dir : run_dirs) {
        const auto mpath = dir / kManifestName;
        if (!fs::exists(mpath)) throw MissingInputError("run '" + dir.string() + "' has no " + kManifestName);
        Json m;
        try {
            m = Json::parse(read_file(mpath));
            for (const auto& r : m.at("results"))
                for (auto& row : rows_of(r, dir)) rows.push_back(std::move(row));
        } catch (const Json::exception& e) {
            throw FormatError("run '" + dir.string() + "': malformed manifest or output: " + e.what());
        }
    }

    std::vector<std::string> tasks;
    for (const auto& r : rows)
        if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);

    ComparisonReport out;
    out.markdown = "# " + (title.empty() ? std::string("Comparison") : title) + "\n";
    if (rows.empty()) out.markdown += "\nNo tabulated results in the given runs.\n";
    std::set<std::string, decltype(&group_key_less)> all_keys(&group_key_less);
    for (const auto& r : rows)
        for (const auto& [k, v] : r.values) all_keys.insert(k);
    out.csv = "task,model";
    for (const auto& k : all_keys) out.csv += "," + csv_field(k);
    out.csv += "\n";

    bool any_probe = false;
    for (const auto& task : tasks) {
        std::set<std::string, decltype(&group_key_less)> keys(&group_key_less);
        std::string unit;
        for (const auto& r : rows)
            if (r.task == task) {
                unit = r.unit;
                for (const auto& [k, v] : r.values) keys.insert(k);
            }
        any_probe = any_probe || task == "tor" || task == "ior" || task == "i2tor";
        out.markdown += "\n## " + task_title(task) + " (" + unit + ")\n\n| Model |";
        for (const auto& k : keys) out.markdown += " " + k + " |";
        out.markdown += "\n|---|";
        for (std::size_t i = 0; i < keys.size(); ++i) out.markdown += "---:|";
        out.markdown += "\n";
        for (const auto& r : rows) {
            if (r.task != task) continue;
            double best = -1;
            for (const auto& [k, v] : r.values) best = std::max(best, v);
            out.markdown += "| " + r.label + " |";
            out.csv += csv_field(task) + "," + csv_field(r.label);
            for (const auto& k : keys) {
                auto it = r.values.find(k);
                if (it == r.values.end()) {
                    out.markdown += " |";
                } else {
                    const auto cell = fixed(it->second, 2);
                    out.markdown += " " + (it->second == best ? "**" + cell + "**" : cell) + " |";
                }
            }
            for (const auto& k : all_keys) {
                auto it = r.values.find(k);
                out.csv += "," + (it == r.values.end() ? std::string() : fixed(it->second, 2));
            }
            out.markdown += "\n";
            out.csv += "\n";
        }
    }
    if (any_probe)
        out.markdown +=
            "\nRetrieval candidates are the full single-object gallery. Rates are conditional on hits (the "
            "retrieved object appears in the query). Bold marks the row maximum.\n";
    else if (!rows.empty())
        out.markdown += "\nBold marks the row maximum.\n";
    return out;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const SchemaError*>(&e)) return kExitSchema;
    if (dynamic_cast<const MissingInputError*>(&e)) return kExitMissing;
    return kExitCompute;
}

}  // namespace oscope::cli

#include "oscope/probe_retrieval.hpp"

#include <algorithm>
#include <set>

#include "oscope/errors.hpp"
#include "oscope/parallel.hpp"

namespace oscope {

namespace {

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

bool group_key_less(const std::string& a, const std::string& b) {
    const bool da = all_digits(a), db = all_digits(b);
    if (da && db) return a.size() != b.size() ? a.size() < b.size() : a < b;
    if (da != db) return da;
    return a < b;
}

const GroupStat& ProbeReport::group(const std::string& key) const {
    for (const auto& [k, v] : per_group)
        if (k == key) return v;
    throw KeyError("report has no group '" + key + "'");
}

ProbeReport run_probe(const ProbeTask& task) {
    if (!task.query_store || !task.gallery_store) throw ConfigError("probe task is missing a store");
    const auto& queries = *task.query_store;
    const auto& gallery = *task.gallery_store;
    if (gallery.empty()) throw ConfigError("gallery store '" + gallery.model_id() + "' is empty");
    if (queries.dim() != gallery.dim())
        throw DimError("query dim " + std::to_string(queries.dim()) + " != gallery dim " + std::to_string(gallery.dim()));

    std::vector<const std::string*> gallery_objects(gallery.size());
    for (std::size_t j = 0; j < gallery.size(); ++j) {
        auto it = task.gallery_object_of.find(gallery.id(j));
        if (it == task.gallery_object_of.end()) throw ConfigError("gallery id '" + gallery.id(j) + "' is not mapped to an object");
        gallery_objects[j] = &it->second;
    }

    std::set<std::string, decltype(&group_key_less)> keys(&group_key_less);
    for (const auto& [qid, groups] : task.query_groups) {
        if (groups.empty()) throw ConfigError("query '" + qid + "' has an empty group list");
        if (!queries.contains(qid)) throw ConfigError("query '" + qid + "' is not in store '" + queries.model_id() + "'");
        std::set<std::string> objs, ks;
        for (const auto& [obj, key] : groups) {
            if (!objs.insert(obj).second) throw ConfigError("query '" + qid + "' lists object '" + obj + "' twice");
            if (!ks.insert(key).second) throw ConfigError("query '" + qid + "' reuses group key '" + key + "'");
            keys.insert(key);
        }
    }

    // Evaluation order follows the query store so that reports are reproducible.
    std::vector<std::size_t> order;
    std::vector<const std::vector<GroupedObject>*> order_groups;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto it = task.query_groups.find(queries.id(i));
        if (it == task.query_groups.end()) continue;
        order.push_back(i);
        order_groups.push_back(&it->second);
    }

    const std::size_t d = queries.dim();
    const auto g = unit_rows(gallery);
    std::vector<std::size_t> retrieved(order.size());
    parallel_for(order.size(), 64, [&](std::size_t begin, std::size_t end) {
        std::vector<double> q(d);
        for (std::size_t n = begin; n < end; ++n) {
            auto raw = queries.vector(order[n]);
            q.assign(raw.begin(), raw.end());
            q = normalized_copy(q);
            std::size_t best = 0;
            double best_sim = dot(q, {g.data(), d});
            for (std::size_t j = 1; j < gallery.size(); ++j) {
                double s = dot(q, {g.data() + j * d, d});
                if (s > best_sim) {
                    best_sim = s;
                    best = j;
                }
            }
            retrieved[n] = best;
        }
    });

    ProbeReport report;
    report.n_queries = order.size();
    std::map<std::string, std::size_t, decltype(&group_key_less)> counts(&group_key_less);
    for (const auto& k : keys) counts[k] = 0;
    for (std::size_t n = 0; n < order.size(); ++n) {
        const auto& obj = *gallery_objects[retrieved[n]];
        const auto& groups = *order_groups[n];
        auto hit = std::find_if(groups.begin(), groups.end(), [&](const auto& go) { return go.first == obj; });
        if (hit == groups.end())
            ++report.miss_count;
        else
            ++counts[hit->second];
    }
    const std::size_t hits = report.n_queries - report.miss_count;
    report.hit_rate = report.n_queries ? 1.0 - static_cast<double>(report.miss_count) / static_cast<double>(report.n_queries) : 0.0;
    for (const auto& [k, c] : counts)
        report.per_group.push_back({k, {c, hits ? static_cast<double>(c) / static_cast<double>(hits) : 0.0}});
    report.retrieved = std::move(retrieved);
    return report;
}

std::vector<std::pair<std::string, ProbeReport>> sweep_stores(
    std::span<const std::pair<std::string, ProbeTask>> tasks) {
    if (tasks.empty()) throw ConfigError("sweep needs at least one task");
    std::vector<std::pair<std::string, ProbeReport>> out;
    out.reserve(tasks.size());
    for (const auto& [label, task] : tasks) {
        try {
            out.emplace_back(label, run_probe(task));
        } catch (const Error& e) {
            rethrow_with_context(e, "task '" + label + "': ");
        }
    }
    return out;
}

std::unordered_map<std::string, std::vector<GroupedObject>> groups_by_position(std::span<const CaptionSpec> captions) {
    std::unordered_map<std::string, std::vector<GroupedObject>> out;
    for (const auto& c : captions) {
        auto& g = out[c.caption_id];
        for (std::size_t i = 0; i < c.objects.size(); ++i) g.emplace_back(c.objects[i], std::to_string(i + 1));
    }
    return out;
}

std::unordered_map<std::string, std::vector<GroupedObject>> groups_by_size_role(std::span<const SceneSpec> scenes) {
    std::unordered_map<std::string, std::vector<GroupedObject>> out;
    for (const auto& s : scenes) {
        auto& g = out[s.image_id];
        int small = 0;
        for (const auto& p : s.placements)
            g.emplace_back(p.object, p.role == SizeRole::Large ? std::string("large") : "small_" + std::to_string(++small));
    }
    return out;
}

std::unordered_map<std::string, std::string> gallery_map_from_captions(std::span<const CaptionSpec> singles) {
    std::unordered_map<std::string, std::string> out;
    for (const auto& c : singles) {
        if (c.objects.size() != 1) throw ConfigError("gallery caption '" + c.caption_id + "' is not single-object");
        out[c.caption_id] = c.objects.front();
    }
    return out;
}

std::unordered_map<std::string, std::string> gallery_map_from_scenes(std::span<const SceneSpec> singles) {
    std::unordered_map<std::string, std::string> out;
    for (const auto& s : singles) {
        if (s.placements.size() != 1) throw ConfigError("gallery scene '" + s.image_id + "' is not single-object");
        out[s.image_id] = s.placements.front().object;
    }
    return out;
}

std::unordered_map<std::string, std::string> identity_gallery_map(const EmbeddingStore& gallery) {
    std::unordered_map<std::string, std::string> out;
    for (const auto& id : gallery.ids()) out[id] = id;
    return out;
}

Json to_json(const ProbeReport& r) {
    Json groups = Json::array();
    for (const auto& [k, v] : r.per_group)
        groups.push_back({{"group", k}, {"count", v.count}, {"conditional_rate", v.conditional_rate}});
    return {{"n_queries", r.n_queries},
            {"hit_rate", r.hit_rate},
            {"miss_count", r.miss_count},
            {"per_group", std::move(groups)},
            {"candidates", "full gallery"},
            {"notes", "per-group rates are conditional on hits; hit_rate is the fraction of queries whose retrieved "
                      "object appears in the query"}};
}

ProbeReport probe_report_from_json(const Json& j) {
    ProbeReport r;
    r.n_queries = j.at("n_queries").get<std::size_t>();
    r.hit_rate = j.at("hit_rate").get<double>();
    r.miss_count = j.at("miss_count").get<std::size_t>();
    for (const auto& g : j.at("per_group"))
        r.per_group.push_back({g.at("group").get<std::string>(),
                               {g.at("count").get<std::size_t>(), g.at("conditional_rate").get<double>()}});
    return r;
}

std::string probe_reports_csv(std::span<const std::pair<std::string, ProbeReport>> rows) {
    std::set<std::string, decltype(&group_key_less)> keys(&group_key_less);
    for (const auto& [label, r] : rows)
        for (const auto& [k, v] : r.per_group) keys.insert(k);
    std::string out = "model";
    for (const auto& k : keys) out += "," + csv_field(k);
    out += ",hit_rate,n_queries,miss_count\n";
    for (const auto& [label, r] : rows) {
        out += csv_field(label);
        for (const auto& k : keys) {
            auto it = std::find_if(r.per_group.begin(), r.per_group.end(), [&](const auto& p) { return p.first == k; });
            out += ",";
            if (it != r.per_group.end()) out += fixed(100.0 * it->second.conditional_rate, 2);
        }
        out += "," + fixed(100.0 * r.hit_rate, 2) + "," + std::to_string(r.n_queries) + "," + std::to_string(r.miss_count) + "\n";
    }
    return out;
}

}  // namespace oscope

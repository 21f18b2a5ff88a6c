#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oscope/probe_retrieval.hpp"

namespace oscope::testing {

/// Independent reference for run_probe: long-double cosines, a plain double
/// loop, strict '>' so the lowest gallery index wins exact ties.
inline ProbeReport oracle_probe(const std::vector<std::vector<double>>& queries,
                                const std::vector<std::vector<GroupedObject>>& groups,
                                const std::vector<std::vector<double>>& gallery,
                                const std::vector<std::string>& gallery_objects) {
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        long double ab = 0, aa = 0, bb = 0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            ab += static_cast<long double>(a[k]) * b[k];
            aa += static_cast<long double>(a[k]) * a[k];
            bb += static_cast<long double>(b[k]) * b[k];
        }
        return ab / std::sqrt(aa * bb);
    };
    ProbeReport r;
    r.n_queries = queries.size();
    std::map<std::string, std::size_t> counts;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (const auto& [obj, key] : groups[q]) counts.emplace(key, 0);
        std::size_t best = 0;
        long double best_sim = cosine(queries[q], gallery[0]);
        for (std::size_t g = 1; g < gallery.size(); ++g) {
            const long double s = cosine(queries[q], gallery[g]);
            if (s > best_sim) {
                best = g;
                best_sim = s;
            }
        }
        r.retrieved.push_back(best);
        bool hit = false;
        for (const auto& [obj, key] : groups[q])
            if (obj == gallery_objects[best]) {
                ++counts[key];
                hit = true;
            }
        if (!hit) ++r.miss_count;
    }
    const std::size_t hits = r.n_queries - r.miss_count;
    r.hit_rate = 1.0 - static_cast<double>(r.miss_count) / static_cast<double>(r.n_queries);
    for (const auto& [key, c] : counts)
        r.per_group.push_back({key, {c, hits ? static_cast<double>(c) / static_cast<double>(hits) : 0.0}});
    return r;
}

/// Micro-instance `code` in [0, 3^5): query q takes candidate vector
/// (code / 3^q) % 3 from its own list of three. The gallery holds an exact
/// duplicate (C duplicates A) and the candidates include exact copies of
/// gallery vectors, so lowest-index tie breaking and misses both occur.
struct MicroInstance {
    ProbeTask task;
    std::vector<std::vector<double>> queries;
    std::vector<std::vector<GroupedObject>> groups;
    std::vector<std::vector<double>> gallery;
    std::vector<std::string> gallery_objects;
};

inline MicroInstance micro_instance(int code) {
    MicroInstance m;
    m.gallery = {{1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}, {0, 0, 1}};
    m.gallery_objects = {"A", "B", "C", "D", "E"};
    const std::vector<std::vector<std::vector<double>>> candidates = {
        {{1, 0, 0}, {0.9, 0.3, 0}, {0, 0, 2}},
        {{0, 3, 0}, {1, 0, 0}, {0.2, 0.1, 0.9}},
        {{1, 1, 0}, {0, 0, 1}, {2, 0, 0}},
        {{0, 0, 1}, {1, 0, 1}, {0.5, 0.5, 0}},
        {{1, 1, 0}, {0, 1, 0}, {0.4, 0.4, 0.4}},
    };
    const std::vector<std::vector<std::string>> objects = {
        {"A", "B"}, {"B", "C"}, {"C", "D", "E"}, {"E", "A"}, {"D"}};
    auto queries = std::make_shared<EmbeddingStore>("micro-q", Modality::Text, 3);
    auto gallery = std::make_shared<EmbeddingStore>("micro-g", Modality::Text, 3);
    for (std::size_t g = 0; g < m.gallery.size(); ++g) {
        const std::string id = "g" + std::to_string(g);
        gallery->add(id, std::span<const double>(m.gallery[g]));
        m.task.gallery_object_of[id] = m.gallery_objects[g];
    }
    int rest = code;
    for (std::size_t q = 0; q < 5; ++q) {
        const auto& v = candidates[q][rest % 3];
        rest /= 3;
        const std::string id = "q" + std::to_string(q);
        queries->add(id, std::span<const double>(v));
        m.queries.push_back(v);
        std::vector<GroupedObject> g;
        for (std::size_t i = 0; i < objects[q].size(); ++i) g.emplace_back(objects[q][i], std::to_string(i + 1));
        m.task.query_groups[id] = g;
        m.groups.push_back(std::move(g));
    }
    m.task.query_store = queries;
    m.task.gallery_store = gallery;
    return m;
}

}  // namespace oscope::testing

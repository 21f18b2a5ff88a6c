#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oscope/caption_forge.hpp"
#include "oscope/embedding_store.hpp"
#include "oscope/io.hpp"

namespace oscope {

/// (object name, group key) for one object of a query. Group keys are caption
/// positions ("1".."n") or size roles ("large", "small_1", ...).
using GroupedObject = std::pair<std::string, std::string>;

/// One retrieval probe: every query retrieves its argmax-cosine item from the
/// full gallery; the retrieved item's object decides which group is credited.
/// TOR, IOR and I2TOR differ only in which stores and groupings are plugged in.
struct ProbeTask {
    std::shared_ptr<const EmbeddingStore> query_store;
    std::shared_ptr<const EmbeddingStore> gallery_store;
    std::unordered_map<std::string, std::string> gallery_object_of;
    /// Evaluated in query-store record order.
    std::unordered_map<std::string, std::vector<GroupedObject>> query_groups;
};

struct GroupStat {
    std::size_t count = 0;
    double conditional_rate = 0.0;

    friend bool operator==(const GroupStat&, const GroupStat&) = default;
};

struct ProbeReport {
    std::size_t n_queries = 0;
    double hit_rate = 0.0;
    std::size_t miss_count = 0;
    /// Ordered by group key (numeric keys numerically).
    std::vector<std::pair<std::string, GroupStat>> per_group;
    /// Gallery record index retrieved for each evaluated query, in evaluation order.
    std::vector<std::size_t> retrieved;

    const GroupStat& group(const std::string& key) const;
    friend bool operator==(const ProbeReport&, const ProbeReport&) = default;
};

/// Orders group keys: all-digit keys numerically, then the rest lexicographically.
bool group_key_less(const std::string& a, const std::string& b);

/// ConfigError on an unmapped gallery id, a query with no groups, or a query
/// id absent from the query store; DimError on incompatible stores.
ProbeReport run_probe(const ProbeTask& task);

/// Pure map of run_probe over labeled tasks, preserving order. Errors carry the label.
std::vector<std::pair<std::string, ProbeReport>> sweep_stores(
    std::span<const std::pair<std::string, ProbeTask>> tasks);

// Task builders ----------------------------------------------------------------

/// Caption positions as group keys: objects[i] -> "i+1".
std::unordered_map<std::string, std::vector<GroupedObject>> groups_by_position(std::span<const CaptionSpec> captions);
/// Size roles as group keys: the large placement -> "large", the others
/// "small_1", "small_2", ... in placement order.
std::unordered_map<std::string, std::vector<GroupedObject>> groups_by_size_role(std::span<const SceneSpec> scenes);
/// Gallery map from single-object captions (caption_id -> its object).
std::unordered_map<std::string, std::string> gallery_map_from_captions(std::span<const CaptionSpec> singles);
/// Gallery map from single-object scenes (image_id -> its object).
std::unordered_map<std::string, std::string> gallery_map_from_scenes(std::span<const SceneSpec> singles);
/// Gallery map where each record id is itself the object name.
std::unordered_map<std::string, std::string> identity_gallery_map(const EmbeddingStore& gallery);

// Serialization ------------------------------------------------------------------

Json to_json(const ProbeReport& report);
ProbeReport probe_report_from_json(const Json& j);

/// Table with one row per labeled report and one column per group key
/// (conditional rates in percent), plus hit rate and counts.
std::string probe_reports_csv(std::span<const std::pair<std::string, ProbeReport>> rows);

}  // namespace oscope

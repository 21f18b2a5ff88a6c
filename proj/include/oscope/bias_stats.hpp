#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oscope/caption_forge.hpp"
#include "oscope/io.hpp"

namespace oscope {

struct AreaObject {
    std::string name;
    double area = 0.0;
};

/// Objects of one caption in mention order, with their segmented areas.
struct AnalysisRecord {
    std::string sample_id;
    std::vector<AreaObject> objects;
};

struct AttentionRecord {
    std::string image_id;
    std::vector<double> cls_attention;  ///< one weight per patch
    /// Patch indices owned by each object; unlisted patches are background.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> object_patches;
};

struct DetectionRecord {
    std::string prompt_id;
    std::vector<std::string> prompt_objects;
    std::set<std::string> detected;
};

// JSONL codecs ---------------------------------------------------------------------

AnalysisRecord analysis_record_from_json(const Json& j);
AttentionRecord attention_record_from_json(const Json& j);
DetectionRecord detection_record_from_json(const Json& j);
Json to_json(const AnalysisRecord& r);
Json to_json(const AttentionRecord& r);
Json to_json(const DetectionRecord& r);

std::vector<AnalysisRecord> load_analysis_records(const std::filesystem::path& path);
std::vector<AttentionRecord> load_attention_records(const std::filesystem::path& path);
std::vector<DetectionRecord> load_detection_records(const std::filesystem::path& path);

// Largest-object position ----------------------------------------------------------

struct PositionHistogram {
    std::map<int, double> fractions;  ///< 1-based caption position -> fraction of records
    std::size_t records_used = 0;
    std::size_t records_dropped = 0;       ///< fewer than 2 objects left after dropping zero areas
    std::size_t zero_area_objects = 0;     ///< objects ignored because their area is 0
};

/// For each record, the caption position of its largest-area object (earliest
/// position on ties). Zero-area objects are ignored; a multi-object record that
/// keeps fewer than 2 objects is dropped. `n_objects_filter` keeps records whose
/// caption mentions exactly that many objects. ValueError if nothing is left.
PositionHistogram largest_position_histogram(std::span<const AnalysisRecord> records,
                                             std::optional<int> n_objects_filter = std::nullopt);

// CLS attention ---------------------------------------------------------------------

struct AttentionShares {
    std::vector<std::pair<std::string, double>> shares;  ///< record order
    double background = 0.0;
    double share(const std::string& name) const;
};

/// Attention mass on each object's patches over total attention.
/// ValueError on out-of-range or overlapping patches, negative weights, or zero total.
AttentionShares attention_shares(const AttentionRecord& record);

struct RoleShareSummary {
    std::size_t images = 0;
    double mean_large = 0.0;       ///< mean share of the large object
    double mean_small = 0.0;       ///< mean share per small object
    double mean_background = 0.0;
};

/// Joins attention records with scene manifests (by image id) to average the
/// large-object share against the per-small-object share.
RoleShareSummary attention_role_summary(std::span<const AttentionRecord> records, std::span<const SceneSpec> scenes);

// Presence by position --------------------------------------------------------------

/// rate[p] = fraction of records whose prompt object at 1-based position p was
/// detected. ValueError if prompts have different lengths or there are none.
std::map<int, double> presence_by_position(std::span<const DetectionRecord> records);

/// Same, computed separately per prompt length.
std::map<int, std::map<int, double>> presence_by_position_grouped(std::span<const DetectionRecord> records);

/// "position,fraction" style CSV for a position-indexed distribution (percent).
std::string position_csv(const std::string& value_column, const std::map<int, double>& values);

}  // namespace oscope

#include "oscope/bias_stats.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "oscope/errors.hpp"

namespace oscope {

namespace {

template <typename T, typename Parse>
std::vector<T> load_records(const std::filesystem::path& path, Parse parse) {
    std::vector<T> out;
    for_each_jsonl(path, [&](std::size_t line, const Json& j) {
        try {
            out.push_back(parse(j));
        } catch (const Json::exception& e) {
            throw FormatError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
        } catch (const ValueError& e) {
            throw ValueError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
        }
    });
    return out;
}

}  // namespace

AnalysisRecord analysis_record_from_json(const Json& j) {
    AnalysisRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    for (const auto& o : j.at("objects")) {
        AreaObject a{o.at("name").get<std::string>(), o.at("area").get<double>()};
        if (!(a.area >= 0.0) || !std::isfinite(a.area))
            throw ValueError("record '" + r.sample_id + "': area of '" + a.name + "' must be finite and >= 0");
        r.objects.push_back(std::move(a));
    }
    if (r.objects.empty()) throw ValueError("record '" + r.sample_id + "' has no objects");
    return r;
}

AttentionRecord attention_record_from_json(const Json& j) {
    AttentionRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.cls_attention = j.at("cls_attention").get<std::vector<double>>();
    for (const auto& [name, patches] : j.at("object_patches").items())
        r.object_patches.emplace_back(name, patches.get<std::vector<std::size_t>>());
    return r;
}

DetectionRecord detection_record_from_json(const Json& j) {
    DetectionRecord r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.prompt_objects = j.at("prompt_objects").get<std::vector<std::string>>();
    for (const auto& d : j.at("detected")) r.detected.insert(d.get<std::string>());
    return r;
}

Json to_json(const AnalysisRecord& r) {
    Json objects = Json::array();
    for (const auto& o : r.objects) objects.push_back({{"name", o.name}, {"area", o.area}});
    return {{"sample_id", r.sample_id}, {"objects", std::move(objects)}};
}

Json to_json(const AttentionRecord& r) {
    Json patches = Json::object();
    for (const auto& [name, idx] : r.object_patches) patches[name] = idx;
    return {{"image_id", r.image_id}, {"cls_attention", r.cls_attention}, {"object_patches", std::move(patches)}};
}

Json to_json(const DetectionRecord& r) {
    return {{"prompt_id", r.prompt_id},
            {"prompt_objects", r.prompt_objects},
            {"detected", std::vector<std::string>(r.detected.begin(), r.detected.end())}};
}

std::vector<AnalysisRecord> load_analysis_records(const std::filesystem::path& path) {
    return load_records<AnalysisRecord>(path, analysis_record_from_json);
}

std::vector<AttentionRecord> load_attention_records(const std::filesystem::path& path) {
    return load_records<AttentionRecord>(path, attention_record_from_json);
}

std::vector<DetectionRecord> load_detection_records(const std::filesystem::path& path) {
    return load_records<DetectionRecord>(path, detection_record_from_json);
}

PositionHistogram largest_position_histogram(std::span<const AnalysisRecord> records,
                                             std::optional<int> n_objects_filter) {
    PositionHistogram h;
    std::map<int, std::size_t> counts;
    for (const auto& r : records) {
        if (n_objects_filter && static_cast<int>(r.objects.size()) != *n_objects_filter) continue;
        if (r.objects.empty()) throw ValueError("record '" + r.sample_id + "' has no objects");
        int best = -1;
        double best_area = 0.0;
        std::size_t kept = 0;
        for (std::size_t i = 0; i < r.objects.size(); ++i) {
            const double a = r.objects[i].area;
            if (!(a >= 0.0)) throw ValueError("record '" + r.sample_id + "' has a negative area");
            if (a == 0.0) {
                ++h.zero_area_objects;
                continue;
            }
            ++kept;
            if (best < 0 || a > best_area) {
                best = static_cast<int>(i) + 1;
                best_area = a;
            }
        }
        const bool multi = r.objects.size() >= 2;
        if (best < 0 || (multi && kept < 2)) {
            ++h.records_dropped;
            continue;
        }
        ++counts[best];
        ++h.records_used;
    }
    if (h.records_used == 0) throw ValueError("no records left to build a position histogram");
    for (const auto& [pos, c] : counts)
        h.fractions[pos] = static_cast<double>(c) / static_cast<double>(h.records_used);
    return h;
}

double AttentionShares::share(const std::string& name) const {
    for (const auto& [n, s] : shares)
        if (n == name) return s;
    throw KeyError("no attention share for '" + name + "'");
}

AttentionShares attention_shares(const AttentionRecord& record) {
    const auto& att = record.cls_attention;
    double total = 0.0;
    for (double a : att) {
        if (!(a >= 0.0) || !std::isfinite(a)) throw ValueError("image '" + record.image_id + "': attention must be finite and >= 0");
        total += a;
    }
    if (total <= 0.0) throw ValueError("image '" + record.image_id + "': attention sums to zero");

    std::vector<char> owned(att.size(), 0);
    AttentionShares out;
    for (const auto& [name, patches] : record.object_patches) {
        double mass = 0.0;
        for (std::size_t p : patches) {
            if (p >= att.size())
                throw ValueError("image '" + record.image_id + "': patch " + std::to_string(p) + " out of range");
            if (owned[p]) throw ValueError("image '" + record.image_id + "': patch " + std::to_string(p) + " assigned twice");
            owned[p] = 1;
            mass += att[p];
        }
        out.shares.emplace_back(name, mass / total);
    }
    double background = 0.0;
    for (std::size_t p = 0; p < att.size(); ++p)
        if (!owned[p]) background += att[p];
    out.background = background / total;
    return out;
}

RoleShareSummary attention_role_summary(std::span<const AttentionRecord> records, std::span<const SceneSpec> scenes) {
    std::unordered_map<std::string, const SceneSpec*> by_id;
    for (const auto& s : scenes) by_id[s.image_id] = &s;
    RoleShareSummary out;
    double large = 0.0, small = 0.0, background = 0.0;
    std::size_t n_small = 0;
    for (const auto& r : records) {
        auto it = by_id.find(r.image_id);
        if (it == by_id.end()) throw KeyError("no scene for attention record '" + r.image_id + "'");
        const auto shares = attention_shares(r);
        for (const auto& p : it->second->placements) {
            double s = 0.0;
            for (const auto& [name, v] : shares.shares)
                if (name == p.object) s = v;
            if (p.role == SizeRole::Large)
                large += s;
            else {
                small += s;
                ++n_small;
            }
        }
        background += shares.background;
        ++out.images;
    }
    if (out.images == 0) throw ValueError("no attention records");
    out.mean_large = large / static_cast<double>(out.images);
    out.mean_small = n_small ? small / static_cast<double>(n_small) : 0.0;
    out.mean_background = background / static_cast<double>(out.images);
    return out;
}

std::map<int, double> presence_by_position(std::span<const DetectionRecord> records) {
    if (records.empty()) throw ValueError("no detection records");
    const std::size_t n = records.front().prompt_objects.size();
    std::vector<std::size_t> present(n, 0);
    for (const auto& r : records) {
        if (r.prompt_objects.size() != n)
            throw ValueError("prompt '" + r.prompt_id + "' has " + std::to_string(r.prompt_objects.size()) +
                             " objects, expected " + std::to_string(n) + "; group records by prompt length");
        for (std::size_t p = 0; p < n; ++p) present[p] += r.detected.contains(r.prompt_objects[p]);
    }
    std::map<int, double> out;
    for (std::size_t p = 0; p < n; ++p)
        out[static_cast<int>(p) + 1] = static_cast<double>(present[p]) / static_cast<double>(records.size());
    return out;
}

std::map<int, std::map<int, double>> presence_by_position_grouped(std::span<const DetectionRecord> records) {
    std::map<int, std::vector<DetectionRecord>> groups;
    for (const auto& r : records) groups[static_cast<int>(r.prompt_objects.size())].push_back(r);
    std::map<int, std::map<int, double>> out;
    for (const auto& [n, group] : groups) out[n] = presence_by_position(group);
    if (out.empty()) throw ValueError("no detection records");
    return out;
}

std::string position_csv(const std::string& value_column, const std::map<int, double>& values) {
    std::string out = "position," + csv_field(value_column) + "\n";
    for (const auto& [p, v] : values) out += std::to_string(p) + "," + fixed(100.0 * v, 4) + "\n";
    return out;
}

}  // namespace oscope

#include "oscope/manifests.hpp"

#include "oscope/errors.hpp"

namespace oscope {

Json to_json(const SceneSpec& scene) {
    Json placements = Json::array();
    for (const auto& p : scene.placements)
        placements.push_back({{"object", p.object}, {"role", to_string(p.role)}, {"slot", p.slot}});
    return {{"image_id", scene.image_id}, {"placements", std::move(placements)}};
}

Json to_json(const CaptionSpec& c) {
    return {{"caption_id", c.caption_id}, {"objects", c.objects}, {"template", to_string(c.templ)}, {"text", c.text}};
}

SceneSpec scene_from_json(const Json& j) {
    SceneSpec s;
    s.image_id = j.at("image_id").get<std::string>();
    for (const auto& p : j.at("placements"))
        s.placements.push_back({p.at("object").get<std::string>(),
                                size_role_from_string(p.at("role").get<std::string>()), p.at("slot").get<int>()});
    validate_scene(s);
    return s;
}

CaptionSpec caption_from_json(const Json& j) {
    CaptionSpec c;
    c.caption_id = j.at("caption_id").get<std::string>();
    c.objects = j.at("objects").get<std::vector<std::string>>();
    c.templ = template_from_string(j.value("template", "short"));
    c.text = j.at("text").get<std::string>();
    if (c.objects.empty() || c.objects.size() > kMaxCaptionObjects)
        throw ValueError("caption '" + c.caption_id + "' must list 1..8 objects");
    return c;
}

namespace {

template <typename T, typename Parse>
std::vector<T> load_lines(const std::filesystem::path& path, Parse parse) {
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

void save_scenes(std::span<const SceneSpec> scenes, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : scenes) out += jsonl_line(to_json(s));
    write_file_atomic(path, out);
}

void save_captions(std::span<const CaptionSpec> captions, const std::filesystem::path& path) {
    std::string out;
    for (const auto& c : captions) out += jsonl_line(to_json(c));
    write_file_atomic(path, out);
}

std::vector<SceneSpec> load_scenes(const std::filesystem::path& path) {
    return load_lines<SceneSpec>(path, scene_from_json);
}

std::vector<CaptionSpec> load_captions(const std::filesystem::path& path) {
    return load_lines<CaptionSpec>(path, caption_from_json);
}

}  // namespace oscope

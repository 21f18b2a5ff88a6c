#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "oscope/caption_forge.hpp"
#include "oscope/io.hpp"

namespace oscope {

// JSONL manifest codecs. Scene lines:
//   {"image_id":..., "placements":[{"object":..., "role":"large|small", "slot":int}]}
// Caption lines:
//   {"caption_id":..., "objects":[...], "template":"short|long", "text":...}

Json to_json(const SceneSpec& scene);
Json to_json(const CaptionSpec& caption);
SceneSpec scene_from_json(const Json& j);
CaptionSpec caption_from_json(const Json& j);

void save_scenes(std::span<const SceneSpec> scenes, const std::filesystem::path& path);
void save_captions(std::span<const CaptionSpec> captions, const std::filesystem::path& path);
std::vector<SceneSpec> load_scenes(const std::filesystem::path& path);
std::vector<CaptionSpec> load_captions(const std::filesystem::path& path);

}  // namespace oscope

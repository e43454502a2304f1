#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvr/scene.hpp"

namespace mvr {

// On-disk scene layout, rooted at a directory named by the scene id:
//
//   <scene_id>/images/%04d.png     8-bit gray or RGB
//   <scene_id>/depth/%04d.fdepth   6-byte magic "FDEPTH", u32 h, u32 w,
//                                  then h·w float32 little-endian (0 = invalid)
//   <scene_id>/poses.json          list of {fx, fy, cx, cy,
//                                  world_to_camera: 16 reals row-major}
//
// View order is the lexicographic order of the image filenames, which the
// zero-padded naming makes equal to numeric order; the pose list follows the
// same order.

void write_fdepth(const DepthMap& depth, const std::filesystem::path& path);
DepthMap read_fdepth(const std::filesystem::path& path);

/// Writes `scene` under `root_dir/<scene_id>/`, replacing any previous
/// contents of that scene directory.
void save_scene(const Scene& scene, const std::filesystem::path& root_dir);

/// Loads the scene stored at `scene_dir` (the directory named by the scene
/// id).  Throws IoError naming the offending file on any inconsistency.
Scene load_scene(const std::filesystem::path& scene_dir);

/// Convenience: load_scene(root_dir / scene_id).
Scene load_scene(const std::filesystem::path& root_dir, const std::string& scene_id);

/// Scene ids under a root directory (subdirectories containing poses.json),
/// sorted lexicographically.
std::vector<std::string> list_scenes(const std::filesystem::path& root_dir);

}  // namespace mvr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvr/scene.hpp"

namespace mvr {

/// Parameters of the procedural test scene.
struct SyntheticSceneParams {
    int n_views = 4;
    int height = 48;
    int width = 64;
    uint64_t seed = 0;
    /// Optional explicit id; empty derives "synth-<seed>".
    std::string scene_id;
};

/// The analytic geometry behind a synthetic scene: a finite back wall and
/// floor rectangle plus two axis-aligned boxes.  Exposed separately from the
/// renderer so tests can ray-trace the exact same world when checking stored
/// depth against closed-form intersections.
struct SyntheticWorld {
    // Axis-aligned rectangle on the plane z = wall_z.
    double wall_z, wall_x_min, wall_x_max, wall_y_min, wall_y_max;
    // Axis-aligned rectangle on the plane y = floor_y.
    double floor_y, floor_x_min, floor_x_max, floor_z_min, floor_z_max;

    struct Box {
        Eigen::Vector3d lo, hi;
    };
    std::vector<Box> boxes;

    /// Depth (camera-frame z, meters) of the nearest surface along the ray
    /// through pixel (u, v) of `cam`, or 0 if the ray misses everything.
    double trace_depth(const Camera& cam, double u, double v) const;
};

/// The world layout for a parameter set (pure function of the seed).
SyntheticWorld synthetic_world(const SyntheticSceneParams& params);

/// Renders a deterministic RGB-D scene over synthetic_world(params): cameras
/// fan along a shallow arc; depth is the exact analytic intersection
/// (camera-frame z); rays that miss get invalid depth (0) and the background
/// color.  Textures are piecewise-constant (checker + seeded blobs) so blur
/// and super-resolution degradations have real structure to destroy.
/// Images are pre-snapped to the 8-bit grid, making PNG round trips exact.
///
/// Pure function of its parameters: the same spec yields a bit-identical
/// scene.  Consecutive views overlap by roughly 0.6–0.8 (see
/// geometry.overlap_ratio), placed to exercise view-set selection.
Scene generate_synthetic_scene(const SyntheticSceneParams& params);

}  // namespace mvr

#pragma once

#include <string>
#include <vector>

#include "mvr/camera.hpp"
#include "mvr/image.hpp"

namespace mvr {

/// One posed RGB-D observation.
struct View {
    Image image;
    DepthMap depth;
    Camera camera;
};

/// An ordered collection of views of one scene, all at one resolution.
struct Scene {
    std::string scene_id;
    std::vector<View> views;

    int n_views() const { return static_cast<int>(views.size()); }

    /// Enforces the type invariants (≥ 2 views, shared resolution, matching
    /// image/depth shapes, rigid poses).  `context` names the scene source
    /// in error messages.
    void validate(const std::string& context) const;
};

/// The unit of all joint operations: N same-shape images of one scene,
/// with optionally attached depths and cameras (either empty or aligned
/// one-to-one with `images`).
struct ViewSet {
    std::string scene_id;
    std::vector<int> view_indices;
    std::vector<Image> images;
    std::vector<DepthMap> depths;    // empty, or size() == images.size()
    std::vector<Camera> cameras;     // empty, or size() == images.size()

    int n_views() const { return static_cast<int>(images.size()); }
    bool has_depths() const { return !depths.empty(); }
    bool has_cameras() const { return !cameras.empty(); }

    void validate(const std::string& context) const;
};

/// Builds a ViewSet from a subset of a scene's views (with depths+cameras).
ViewSet make_viewset(const Scene& scene, const std::vector<int>& indices);

}  // namespace mvr

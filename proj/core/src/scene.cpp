#include "mvr/scene.hpp"

#include <algorithm>
#include <set>

#include "mvr/errors.hpp"

namespace mvr {

void Scene::validate(const std::string& context) const {
    if (views.size() < 2) throw ContractError(context + ": scene needs at least 2 views");
    const int h = views[0].image.height();
    const int w = views[0].image.width();
    for (size_t i = 0; i < views.size(); ++i) {
        const View& v = views[i];
        const std::string where = context + ": view " + std::to_string(i);
        if (v.image.height() != h || v.image.width() != w)
            throw ContractError(where + ": resolution differs from view 0");
        if (!v.depth.empty() &&
            (v.depth.height() != v.image.height() || v.depth.width() != v.image.width()))
            throw ContractError(where + ": image/depth shape mismatch");
        v.camera.validate(where);
    }
}

void ViewSet::validate(const std::string& context) const {
    const size_t n = images.size();
    if (n < 1 || n > 16)
        throw ContractError(context + ": view set must hold 1..16 views, has " +
                            std::to_string(n));
    if (view_indices.size() != n)
        throw ContractError(context + ": view_indices/images size mismatch");
    if (std::set<int>(view_indices.begin(), view_indices.end()).size() != n)
        throw ContractError(context + ": duplicate view indices");
    for (size_t i = 1; i < n; ++i)
        if (!images[i].same_shape(images[0]))
            throw ContractError(context + ": images differ in shape");
    if (!depths.empty() && depths.size() != n)
        throw ContractError(context + ": depths present but not aligned with images");
    if (!cameras.empty() && cameras.size() != n)
        throw ContractError(context + ": cameras present but not aligned with images");
}

ViewSet make_viewset(const Scene& scene, const std::vector<int>& indices) {
    ViewSet vs;
    vs.scene_id = scene.scene_id;
    vs.view_indices = indices;
    for (int idx : indices) {
        if (idx < 0 || idx >= scene.n_views())
            throw ContractError("make_viewset: view index " + std::to_string(idx) +
                                " out of range for scene " + scene.scene_id);
        const View& v = scene.views[static_cast<size_t>(idx)];
        vs.images.push_back(v.image);
        vs.depths.push_back(v.depth);
        vs.cameras.push_back(v.camera);
    }
    vs.validate("make_viewset");
    return vs;
}

}  // namespace mvr

#include "mvr/synthetic.hpp"

#include <cmath>

#include "mvr/errors.hpp"
#include "mvr/png_io.hpp"
#include "mvr/rng.hpp"

namespace mvr {

namespace {

// World layout constants (meters; camera frame is +z forward, +y down).
constexpr double kWallZ = 6.0;
constexpr double kWallHalfX = 8.0;
constexpr double kWallYMin = -2.6;   // top edge (y is down)
constexpr double kWallYMax = 1.35;   // reaches slightly past the floor line
constexpr double kFloorY = 1.2;
constexpr double kFloorHalfX = 8.0;
constexpr double kFloorZMin = 0.4;
constexpr double kFloorZMax = 6.0;
constexpr double kBackground = 0.08;

// Camera rig: eyes on a shallow arc, headings fanned outward so consecutive
// views share roughly 60-80% of their content.
constexpr double kArcRadius = 0.8;
constexpr double kArcStep = 0.10;     // radians of arc between neighbors
constexpr double kYawStepBase = 0.19; // radians of extra heading fan per view
constexpr double kMaxHalfFan = 0.75;  // cap on |yaw| so side views stay on the wall
constexpr double kPitchDown = 0.07;   // slight downward tilt (+y is down)
constexpr double kFocalScale = 0.95;  // fx = fy = scale * width

struct Blob {
    double u, v, r2;
    Eigen::Vector3f color;
};

// Piecewise-constant surface texture: checkerboard with blob overrides.
struct Texture {
    double checker_scale = 0.5;
    Eigen::Vector3f color_a, color_b;
    std::vector<Blob> blobs;

    Eigen::Vector3f sample(double u, double v) const {
        for (auto it = blobs.rbegin(); it != blobs.rend(); ++it) {
            const double du = u - it->u, dv = v - it->v;
            if (du * du + dv * dv < it->r2) return it->color;
        }
        const long long iu = static_cast<long long>(std::floor(u / checker_scale));
        const long long iv = static_cast<long long>(std::floor(v / checker_scale));
        return ((iu + iv) & 1) ? color_b : color_a;
    }
};

Eigen::Vector3f draw_color(Rng& rng) {
    return {static_cast<float>(rng.uniform(0.10, 0.95)),
            static_cast<float>(rng.uniform(0.10, 0.95)),
            static_cast<float>(rng.uniform(0.10, 0.95))};
}

float luminance(const Eigen::Vector3f& c) { return 0.299f * c[0] + 0.587f * c[1] + 0.114f * c[2]; }

Texture draw_texture(Rng& rng, double scale_lo, double scale_hi, int n_blobs_min, int n_blobs_max,
                     double u_lo, double u_hi, double v_lo, double v_hi, double r_lo,
                     double r_hi) {
    Texture tex;
    tex.checker_scale = rng.uniform(scale_lo, scale_hi);
    tex.color_a = draw_color(rng);
    tex.color_b = draw_color(rng);
    // Keep the checker visible: redraw until the two colors are apart.
    for (int i = 0; i < 10 && std::abs(luminance(tex.color_a) - luminance(tex.color_b)) < 0.25;
         ++i)
        tex.color_b = draw_color(rng);
    const int n = n_blobs_min + static_cast<int>(rng.uniform_int(n_blobs_max - n_blobs_min + 1));
    for (int i = 0; i < n; ++i) {
        Blob b;
        b.u = rng.uniform(u_lo, u_hi);
        b.v = rng.uniform(v_lo, v_hi);
        const double r = rng.uniform(r_lo, r_hi);
        b.r2 = r * r;
        b.color = draw_color(rng);
        tex.blobs.push_back(b);
    }
    return tex;
}

struct Hit {
    double t = -1.0;
    int surface = -1;  // 0 wall, 1 floor, 2+i box i
    double u = 0, v = 0;
};

// Nearest intersection of ray o + t*d with the world; uv are surface-local
// texture coordinates of the hit.
Hit trace(const SyntheticWorld& world, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    constexpr double kEps = 1e-9;
    Hit best;

    if (std::abs(d.z()) > kEps) {
        const double t = (world.wall_z - o.z()) / d.z();
        if (t > kEps) {
            const double x = o.x() + t * d.x(), y = o.y() + t * d.y();
            if (x >= world.wall_x_min && x <= world.wall_x_max && y >= world.wall_y_min &&
                y <= world.wall_y_max && (best.t < 0 || t < best.t))
                best = {t, 0, x, y};
        }
    }
    if (std::abs(d.y()) > kEps) {
        const double t = (world.floor_y - o.y()) / d.y();
        if (t > kEps) {
            const double x = o.x() + t * d.x(), z = o.z() + t * d.z();
            if (x >= world.floor_x_min && x <= world.floor_x_max && z >= world.floor_z_min &&
                z <= world.floor_z_max && (best.t < 0 || t < best.t))
                best = {t, 1, x, z};
        }
    }
    for (size_t b = 0; b < world.boxes.size(); ++b) {
        const auto& box = world.boxes[b];
        double t_near = -1e30, t_far = 1e30;
        int near_axis = -1;
        for (int a = 0; a < 3; ++a) {
            const double inv = 1.0 / d[a];  // IEEE inf handles axis-parallel rays
            double t0 = (box.lo[a] - o[a]) * inv;
            double t1 = (box.hi[a] - o[a]) * inv;
            if (t0 > t1) std::swap(t0, t1);
            if (t0 > t_near) {
                t_near = t0;
                near_axis = a;
            }
            t_far = std::min(t_far, t1);
        }
        if (near_axis >= 0 && t_near <= t_far && t_near > kEps &&
            (best.t < 0 || t_near < best.t)) {
            const Eigen::Vector3d p = o + t_near * d;
            // Texture the face with the two non-normal world coordinates.
            const int ua = near_axis == 0 ? 2 : 0;
            const int va = near_axis == 1 ? 2 : 1;
            best = {t_near, 2 + static_cast<int>(b), p[ua], p[va]};
        }
    }
    return best;
}

Camera make_camera(int i, int n_views, int h, int w, Rng& rng) {
    const double c = i - (n_views - 1) / 2.0;
    const double yaw_step =
        std::min(kYawStepBase, kMaxHalfFan / std::max(1.0, (n_views - 1) / 2.0));
    const double phi = c * kArcStep + rng.uniform(-0.008, 0.008);
    const double yaw = c * yaw_step + rng.uniform(-0.012, 0.012);
    const double pitch = kPitchDown + rng.uniform(-0.006, 0.006);

    const Eigen::Vector3d eye(kArcRadius * std::sin(phi), rng.uniform(-0.015, 0.015),
                              kArcRadius * (1.0 - std::cos(phi)));
    const Eigen::Vector3d fwd(std::sin(yaw) * std::cos(pitch), std::sin(pitch),
                              std::cos(yaw) * std::cos(pitch));

    // Build world-to-camera from the +z=forward, +y=down frame.
    const Eigen::Vector3d down(0, 1, 0);
    const Eigen::Vector3d right = down.cross(fwd).normalized();
    const Eigen::Vector3d cam_down = fwd.cross(right);

    Camera cam;
    cam.fx = cam.fy = kFocalScale * w;
    cam.cx = (w - 1) / 2.0;
    cam.cy = (h - 1) / 2.0;
    cam.height = h;
    cam.width = w;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.block<1, 3>(0, 0) = right.transpose();
    cam.world_to_camera.block<1, 3>(1, 0) = cam_down.transpose();
    cam.world_to_camera.block<1, 3>(2, 0) = fwd.transpose();
    Eigen::Matrix3d r = cam.world_to_camera.topLeftCorner<3, 3>();
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

}  // namespace

double SyntheticWorld::trace_depth(const Camera& cam, double u, double v) const {
    const Eigen::Vector3d d_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
    const Eigen::Vector3d d_world = cam.rotation().transpose() * d_cam;
    const Hit hit = trace(*this, cam.center(), d_world);
    // The ray parameter IS camera-frame depth because d_cam.z = 1.
    return hit.t > 0 ? hit.t : 0.0;
}

SyntheticWorld synthetic_world(const SyntheticSceneParams& params) {
    SyntheticWorld world;
    world.wall_z = kWallZ;
    world.wall_x_min = -kWallHalfX;
    world.wall_x_max = kWallHalfX;
    world.wall_y_min = kWallYMin;
    world.wall_y_max = kWallYMax;
    world.floor_y = kFloorY;
    world.floor_x_min = -kFloorHalfX;
    world.floor_x_max = kFloorHalfX;
    world.floor_z_min = kFloorZMin;
    world.floor_z_max = kFloorZMax;

    // Matches the draw order in generate_synthetic_scene: boxes first.
    Rng rng(hash_combine(params.seed, 0x626f7865 /* layout stream */));
    {
        const double hx = 0.35 + rng.uniform(-0.08, 0.08);
        const double hz = 0.35 + rng.uniform(-0.08, 0.08);
        const double hy = 0.65 + rng.uniform(-0.1, 0.1);
        const double cx = -0.7 + rng.uniform(-0.2, 0.2);
        const double cz = 3.1 + rng.uniform(-0.3, 0.3);
        const double cy = kFloorY - hy;  // resting on the floor
        world.boxes.push_back({{cx - hx, cy - hy, cz - hz}, {cx + hx, cy + hy, cz + hz}});
    }
    {
        const double hx = 0.45 + rng.uniform(-0.1, 0.1);
        const double hz = 0.45 + rng.uniform(-0.1, 0.1);
        const double hy = 0.45 + rng.uniform(-0.1, 0.1);
        const double cx = 0.8 + rng.uniform(-0.2, 0.2);
        const double cz = 4.2 + rng.uniform(-0.3, 0.3);
        const double cy = kFloorY - hy;
        world.boxes.push_back({{cx - hx, cy - hy, cz - hz}, {cx + hx, cy + hy, cz + hz}});
    }
    return world;
}

Scene generate_synthetic_scene(const SyntheticSceneParams& params) {
    if (params.n_views < 2)
        throw ContractError("generate_synthetic_scene: n_views must be at least 2");
    if (params.height < 8 || params.width < 8)
        throw ContractError("generate_synthetic_scene: resolution must be at least 8x8");

    const SyntheticWorld world = synthetic_world(params);

    Rng tex_rng(hash_combine(params.seed, 0x74657875 /* texture stream */));
    std::vector<Texture> textures;
    // wall (uv = x, y), floor (uv = x, z), then one texture per box.
    textures.push_back(draw_texture(tex_rng, 0.45, 0.8, 8, 12, -5.0, 5.0, -2.4, 1.3, 0.25, 0.8));
    textures.push_back(draw_texture(tex_rng, 0.5, 0.9, 6, 9, -4.0, 4.0, 0.8, 5.8, 0.2, 0.6));
    for (size_t b = 0; b < world.boxes.size(); ++b)
        textures.push_back(draw_texture(tex_rng, 0.18, 0.3, 0, 0, 0, 1, 0, 1, 0.05, 0.1));

    Scene scene;
    scene.scene_id =
        params.scene_id.empty() ? "synth-" + std::to_string(params.seed) : params.scene_id;

    Rng cam_rng(hash_combine(params.seed, 0x63616d73 /* camera stream */));
    for (int i = 0; i < params.n_views; ++i) {
        View view;
        view.camera = make_camera(i, params.n_views, params.height, params.width, cam_rng);
        view.image = Image(params.height, params.width, 3);
        view.depth = DepthMap(params.height, params.width);

        const Eigen::Vector3d origin = view.camera.center();
        const Eigen::Matrix3d r_t = view.camera.rotation().transpose();
        for (int y = 0; y < params.height; ++y) {
            for (int x = 0; x < params.width; ++x) {
                const Eigen::Vector3d d_cam((x - view.camera.cx) / view.camera.fx,
                                            (y - view.camera.cy) / view.camera.fy, 1.0);
                const Hit hit = trace(world, origin, r_t * d_cam);
                if (hit.t > 0) {
                    view.depth.at(y, x) = static_cast<float>(hit.t);
                    const Eigen::Vector3f c =
                        textures[static_cast<size_t>(hit.surface)].sample(hit.u, hit.v);
                    view.image.at(y, x, 0) = c[0];
                    view.image.at(y, x, 1) = c[1];
                    view.image.at(y, x, 2) = c[2];
                } else {
                    view.depth.at(y, x) = 0.0f;
                    view.image.at(y, x, 0) = kBackground;
                    view.image.at(y, x, 1) = kBackground;
                    view.image.at(y, x, 2) = kBackground;
                }
            }
        }
        snap_to_8bit(view.image);
        scene.views.push_back(std::move(view));
    }
    scene.validate("generate_synthetic_scene");
    return scene;
}

}  // namespace mvr

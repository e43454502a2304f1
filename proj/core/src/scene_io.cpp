#include "mvr/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mvr/errors.hpp"
#include "mvr/png_io.hpp"

namespace mvr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kDepthMagic[6] = {'F', 'D', 'E', 'P', 'T', 'H'};

std::string view_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", index);
    return buf;
}

void write_u32(std::ostream& os, uint32_t v) {
    // Little-endian on disk regardless of host (this library only targets
    // little-endian hosts, but writing bytes keeps the format explicit).
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void write_fdepth(const DepthMap& depth, const fs::path& path) {
    if (depth.empty()) throw ContractError("write_fdepth: empty depth map");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open depth file for writing: " + path.string());
    os.write(kDepthMagic, sizeof kDepthMagic);
    write_u32(os, static_cast<uint32_t>(depth.height()));
    write_u32(os, static_cast<uint32_t>(depth.width()));
    os.write(reinterpret_cast<const char*>(depth.data()),
             static_cast<std::streamsize>(sizeof(float)) * depth.height() * depth.width());
    if (!os) throw IoError("depth write failed: " + path.string());
}

DepthMap read_fdepth(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open depth file: " + path.string());
    char magic[6];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kDepthMagic, sizeof magic) != 0)
        throw IoError("bad depth file magic: " + path.string());
    const uint32_t h = read_u32(is);
    const uint32_t w = read_u32(is);
    if (!is || h == 0 || w == 0 || h > 1u << 16 || w > 1u << 16)
        throw IoError("bad depth file header: " + path.string());
    DepthMap d(static_cast<int>(h), static_cast<int>(w));
    is.read(reinterpret_cast<char*>(d.data()),
            static_cast<std::streamsize>(sizeof(float)) * h * w);
    if (!is) throw IoError("depth file truncated: " + path.string());
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
        const float v = d.data()[i];
        if (!std::isfinite(v) || v < 0.0f)
            throw IoError("non-finite or negative depth value in " + path.string());
    }
    return d;
}

void save_scene(const Scene& scene, const fs::path& root_dir) {
    scene.validate("save_scene(" + scene.scene_id + ")");
    if (scene.scene_id.empty()) throw ContractError("save_scene: empty scene_id");

    const fs::path dir = root_dir / scene.scene_id;
    std::error_code ec;
    // Replace any previous contents so stale views cannot survive.
    fs::remove_all(dir / "images", ec);
    fs::remove_all(dir / "depth", ec);
    fs::remove(dir / "poses.json", ec);
    fs::create_directories(dir / "images", ec);
    if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
    fs::create_directories(dir / "depth", ec);
    if (ec) throw IoError("cannot create " + (dir / "depth").string() + ": " + ec.message());

    json poses = json::array();
    for (int i = 0; i < scene.n_views(); ++i) {
        const View& v = scene.views[static_cast<size_t>(i)];
        write_png(v.image, dir / "images" / (view_stem(i) + ".png"));
        write_fdepth(v.depth, dir / "depth" / (view_stem(i) + ".fdepth"));

        std::vector<double> w2c(16);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) w2c[static_cast<size_t>(r) * 4 + c] = v.camera.world_to_camera(r, c);
        poses.push_back({{"fx", v.camera.fx},
                         {"fy", v.camera.fy},
                         {"cx", v.camera.cx},
                         {"cy", v.camera.cy},
                         {"world_to_camera", w2c}});
    }
    std::ofstream os(dir / "poses.json");
    if (!os) throw IoError("cannot write poses: " + (dir / "poses.json").string());
    os << poses.dump(2) << '\n';
    if (!os) throw IoError("poses write failed: " + (dir / "poses.json").string());
}

Scene load_scene(const fs::path& scene_dir) {
    const fs::path poses_path = scene_dir / "poses.json";
    if (!fs::exists(poses_path)) throw IoError("poses not found: " + poses_path.string());

    json poses;
    try {
        std::ifstream is(poses_path);
        is >> poses;
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + poses_path.string() + ": " + e.what());
    }
    if (!poses.is_array()) throw IoError("poses manifest is not a list: " + poses_path.string());

    // View order is the lexicographic order of the image filenames.
    std::vector<fs::path> image_files;
    const fs::path img_dir = scene_dir / "images";
    if (!fs::exists(img_dir)) throw IoError("images directory not found: " + img_dir.string());
    for (const auto& entry : fs::directory_iterator(img_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            image_files.push_back(entry.path());
    std::sort(image_files.begin(), image_files.end());

    if (image_files.size() != poses.size())
        throw IoError("poses manifest lists " + std::to_string(poses.size()) + " views but " +
                      std::to_string(image_files.size()) + " images exist: " +
                      poses_path.string());
    if (image_files.empty()) throw IoError("scene has no images: " + img_dir.string());

    Scene scene;
    scene.scene_id = scene_dir.filename().string();
    for (size_t i = 0; i < image_files.size(); ++i) {
        View v;
        v.image = read_png(image_files[i]);

        const fs::path depth_path =
            scene_dir / "depth" / (image_files[i].stem().string() + ".fdepth");
        v.depth = read_fdepth(depth_path);
        if (v.depth.height() != v.image.height() || v.depth.width() != v.image.width())
            throw IoError("image/depth shape mismatch: " + depth_path.string());

        const json& p = poses[i];
        try {
            v.camera.fx = p.at("fx").get<double>();
            v.camera.fy = p.at("fy").get<double>();
            v.camera.cx = p.at("cx").get<double>();
            v.camera.cy = p.at("cy").get<double>();
            const auto w2c = p.at("world_to_camera").get<std::vector<double>>();
            if (w2c.size() != 16) throw IoError("world_to_camera must hold 16 reals");
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    v.camera.world_to_camera(r, c) = w2c[static_cast<size_t>(r) * 4 + c];
        } catch (const json::exception& e) {
            throw IoError("bad pose entry " + std::to_string(i) + " in " + poses_path.string() +
                          ": " + e.what());
        }
        v.camera.height = v.image.height();
        v.camera.width = v.image.width();
        try {
            v.camera.validate("pose entry " + std::to_string(i));
        } catch (const ContractError& e) {
            throw IoError(std::string(e.what()) + " in " + poses_path.string());
        }
        scene.views.push_back(std::move(v));
    }
    try {
        scene.validate("scene " + scene.scene_id);
    } catch (const ContractError& e) {
        throw IoError(std::string(e.what()) + " (loaded from " + scene_dir.string() + ")");
    }
    return scene;
}

Scene load_scene(const fs::path& root_dir, const std::string& scene_id) {
    return load_scene(root_dir / scene_id);
}

std::vector<std::string> list_scenes(const fs::path& root_dir) {
    std::vector<std::string> ids;
    if (!fs::exists(root_dir)) throw IoError("scene root not found: " + root_dir.string());
    for (const auto& entry : fs::directory_iterator(root_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "poses.json"))
            ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace mvr

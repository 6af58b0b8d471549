#include "nrf/scene_data.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace nrf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string view_dir_name(int v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%03d", v);
    return buf;
}

std::string img_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%03d.pfm", i);
    return buf;
}

std::string gt_name(const char* kind, int v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "gt/%s_%03d.pfm", kind, v);
    return buf;
}

}  // namespace

void LightSource::validate(const std::string& where) const {
    const double n2 = dot(direction, direction);
    if (std::abs(n2 - 1.0) > 2e-9)
        throw std::runtime_error(where + ": non-unit light direction");
    if (!(intensity > 0)) throw std::runtime_error(where + ": light intensity must be positive");
}

void ViewRecord::validate(const std::string& where) const {
    try {
        intrinsics.validate();
        pose.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
    }
    if (lights.empty()) throw std::runtime_error(where + ": view needs at least one light");
    if (images.size() != lights.size())
        throw std::runtime_error(where + ": image count does not match light count");
    for (std::size_t i = 0; i < lights.size(); ++i)
        lights[i].validate(where + ".lights[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageF& img = images[i];
        if (img.width != intrinsics.width || img.height != intrinsics.height || img.channels != 3)
            throw std::runtime_error(where + ".images[" + std::to_string(i) +
                                     "]: dimension mismatch with intrinsics");
    }
    if (mask.size() != static_cast<std::size_t>(intrinsics.width) * intrinsics.height)
        throw std::runtime_error(where + ": mask dimension mismatch");
}

void SceneBundle::validate() const {
    if (views.empty()) throw std::runtime_error("bundle: no views");
    if (bounds.degenerate()) throw std::runtime_error("bundle: degenerate bounds");
    for (std::size_t v = 0; v < views.size(); ++v)
        views[v].validate("views[" + std::to_string(v) + "]");
    if (ground_truth) {
        if (ground_truth->normals.size() != views.size() ||
            ground_truth->depths.size() != views.size())
            throw std::runtime_error("bundle: ground truth view count mismatch");
    }
}

const char* shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::torus: return "torus";
        case ShapeKind::blend: return "blend";
    }
    return "sphere";
}

ShapeKind shape_from_name(const std::string& name) {
    if (name == "sphere") return ShapeKind::sphere;
    if (name == "torus") return ShapeKind::torus;
    if (name == "blend") return ShapeKind::blend;
    throw std::invalid_argument("unknown shape: " + name);
}

void SyntheticSceneConfig::validate() const {
    if (!(noise_std >= 0)) throw std::invalid_argument("synthetic config: noise_std must be >= 0");
    if (n_lights < 3)
        throw std::invalid_argument("synthetic config: n_lights must be >= 3 for PS solvability");
    if (n_views < 1 || image_size < 2) throw std::invalid_argument("synthetic config: bad sizes");
    if (!(camera_distance > 0)) throw std::invalid_argument("synthetic config: bad camera distance");
    if (shape == ShapeKind::sphere && !(sphere_radius > 0))
        throw std::invalid_argument("synthetic config: degenerate sphere radius");
    if (shape != ShapeKind::sphere && (!(torus_major > 0) || !(torus_minor > 0)))
        throw std::invalid_argument("synthetic config: degenerate torus parameters");
    if (!(light_ring_deg > 0) || light_ring_deg >= 90)
        throw std::invalid_argument("synthetic config: light ring angle must be in (0, 90)");
    if (!(light_intensity > 0))
        throw std::invalid_argument("synthetic config: light intensity must be positive");
}

void save_bundle(const SceneBundle& bundle, const std::string& dir) {
    bundle.validate();
    fs::create_directories(dir);

    json manifest;
    manifest["format"] = "nrf-mvps-bundle";
    manifest["version"] = 1;
    manifest["name"] = bundle.name;
    manifest["units"] = "normalized";
    manifest["world_scale"] = bundle.world_scale;
    manifest["bounds"] = {{"min", {bundle.bounds.min.x, bundle.bounds.min.y, bundle.bounds.min.z}},
                          {"max", {bundle.bounds.max.x, bundle.bounds.max.y, bundle.bounds.max.z}}};

    json views = json::array();
    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        const ViewRecord& view = bundle.views[v];
        const std::string vdir = view_dir_name(static_cast<int>(v));
        fs::create_directories(fs::path(dir) / vdir);

        json jv;
        jv["intrinsics"] = {{"fx", view.intrinsics.fx}, {"fy", view.intrinsics.fy},
                            {"cx", view.intrinsics.cx}, {"cy", view.intrinsics.cy},
                            {"width", view.intrinsics.width}, {"height", view.intrinsics.height}};
        json pose = json::array();  // 3x4 camera-to-world, row-major
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) pose.push_back(view.pose.rotation(r, c));
            pose.push_back(view.pose.translation[r]);
        }
        jv["pose"] = pose;
        json lights = json::array();
        for (const LightSource& l : view.lights)
            lights.push_back({l.direction.x, l.direction.y, l.direction.z, l.intensity});
        jv["lights"] = lights;
        json imgs = json::array();
        for (std::size_t i = 0; i < view.images.size(); ++i) {
            const std::string rel = vdir + "/" + img_name(static_cast<int>(i));
            write_pfm((fs::path(dir) / rel).string(), view.images[i]);
            imgs.push_back(rel);
        }
        jv["images"] = imgs;
        const std::string mask_rel = vdir + "/mask.png";
        write_mask_png((fs::path(dir) / mask_rel).string(), view.mask, view.intrinsics.width,
                       view.intrinsics.height);
        jv["mask"] = mask_rel;
        views.push_back(jv);
    }
    manifest["views"] = views;

    if (bundle.ground_truth) {
        fs::create_directories(fs::path(dir) / "gt");
        const GroundTruth& gt = *bundle.ground_truth;
        json jgt;
        json normals = json::array(), depths = json::array();
        for (std::size_t v = 0; v < gt.normals.size(); ++v) {
            const std::string rel = gt_name("normal", static_cast<int>(v));
            write_pfm((fs::path(dir) / rel).string(), gt.normals[v]);
            normals.push_back(rel);
        }
        for (std::size_t v = 0; v < gt.depths.size(); ++v) {
            const std::string rel = gt_name("depth", static_cast<int>(v));
            write_pfm((fs::path(dir) / rel).string(), gt.depths[v]);
            depths.push_back(rel);
        }
        jgt["normals"] = normals;
        jgt["depths"] = depths;
        if (!gt.mesh.empty()) {
            write_ply((fs::path(dir) / "gt/mesh.ply").string(), gt.mesh);
            jgt["mesh"] = "gt/mesh.ply";
        }
        manifest["ground_truth"] = jgt;
    }

    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error(dir + "/manifest.json: cannot open for writing");
    f << manifest.dump(2) << "\n";
    if (!f) throw std::runtime_error(dir + "/manifest.json: write error");
}

namespace {

double num_field(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number())
        throw std::runtime_error(where + ": missing numeric field '" + key + "'");
    return j[key].get<double>();
}

}  // namespace

SceneBundle load_bundle(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error(manifest_path.string() + ": missing manifest");
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest_path.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "nrf-mvps-bundle")
        throw std::runtime_error(manifest_path.string() + ": not a bundle manifest");

    SceneBundle bundle;
    bundle.name = manifest.value("name", "scene");
    bundle.world_scale = manifest.value("world_scale", 1.0);
    const json& jb = manifest.at("bounds");
    bundle.bounds.min = {jb.at("min")[0].get<double>(), jb.at("min")[1].get<double>(),
                         jb.at("min")[2].get<double>()};
    bundle.bounds.max = {jb.at("max")[0].get<double>(), jb.at("max")[1].get<double>(),
                         jb.at("max")[2].get<double>()};

    if (!manifest.contains("views") || !manifest["views"].is_array() || manifest["views"].empty())
        throw std::runtime_error(manifest_path.string() + ": manifest has no views");

    int vi = 0;
    for (const json& jv : manifest["views"]) {
        const std::string where = manifest_path.string() + ": views[" + std::to_string(vi) + "]";
        ViewRecord view;
        const json& ji = jv.at("intrinsics");
        view.intrinsics.fx = num_field(ji, "fx", where);
        view.intrinsics.fy = num_field(ji, "fy", where);
        view.intrinsics.cx = num_field(ji, "cx", where);
        view.intrinsics.cy = num_field(ji, "cy", where);
        view.intrinsics.width = static_cast<int>(num_field(ji, "width", where));
        view.intrinsics.height = static_cast<int>(num_field(ji, "height", where));

        const json& jp = jv.at("pose");
        if (!jp.is_array() || jp.size() != 12)
            throw std::runtime_error(where + ": pose must be 12 numbers (3x4 row-major)");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) view.pose.rotation(r, c) = jp[r * 4 + c].get<double>();
            view.pose.translation[r] = jp[r * 4 + 3].get<double>();
        }

        for (const json& jl : jv.at("lights")) {
            if (!jl.is_array() || jl.size() != 4)
                throw std::runtime_error(where + ": light entries must be [lx, ly, lz, e]");
            view.lights.push_back(LightSource{{jl[0].get<double>(), jl[1].get<double>(),
                                               jl[2].get<double>()},
                                              jl[3].get<double>()});
        }

        for (const json& jimg : jv.at("images")) {
            const std::string rel = jimg.get<std::string>();
            view.images.push_back(read_pfm((fs::path(dir) / rel).string()));
        }
        int mw = 0, mh = 0;
        view.mask = read_mask_png((fs::path(dir) / jv.at("mask").get<std::string>()).string(), mw, mh);
        if (mw != view.intrinsics.width || mh != view.intrinsics.height)
            throw std::runtime_error(where + ": mask dimension mismatch");
        bundle.views.push_back(std::move(view));
        ++vi;
    }

    if (manifest.contains("ground_truth")) {
        const json& jgt = manifest["ground_truth"];
        GroundTruth gt;
        for (const json& jn : jgt.value("normals", json::array()))
            gt.normals.push_back(read_pfm((fs::path(dir) / jn.get<std::string>()).string()));
        for (const json& jd : jgt.value("depths", json::array()))
            gt.depths.push_back(read_pfm((fs::path(dir) / jd.get<std::string>()).string()));
        if (jgt.contains("mesh")) gt.mesh = read_ply((fs::path(dir) / jgt["mesh"].get<std::string>()).string());
        bundle.ground_truth = std::move(gt);
    }

    bundle.validate();
    return bundle;
}

}  // namespace nrf

#include "drf/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;

namespace drf {

void SyntheticObject::validate() const {
    if (radii.minCoeff() <= 0) throw Error("data: superellipsoid radii must be positive");
    if (exponent < 2.0) throw Error("data: superellipsoid exponent must be >= 2");
    if (density_scale <= 0 || sharpness <= 0)
        throw Error("data: density_scale and sharpness must be positive");
    if (albedo.minCoeff() < 0 || albedo.maxCoeff() > 1)
        throw Error("data: albedo must lie in [0,1]");
}

std::pair<double, Eigen::Vector3d> oracle_density_color(const SyntheticObject& obj,
                                                        const Eigen::Vector3d& x,
                                                        const Eigen::Vector3d&) {
    // inside-outside function: F < 1 inside, F = 1 on the surface
    const double p = obj.exponent;
    double f = 0.0;
    for (int i = 0; i < 3; ++i) f += std::pow(std::abs(x[i] / obj.radii[i]), p);
    const double F = std::pow(f, 1.0 / p);
    const double sigma = obj.density_scale / (1.0 + std::exp((F - 1.0) / obj.sharpness));
    Eigen::Vector3d c;
    for (int i = 0; i < 3; ++i)
        c[i] = std::clamp(obj.albedo[i] + obj.color_grad[i] * x[i], 0.0, 1.0);
    return {sigma, c};
}

nlohmann::json DatasetMeta::to_json() const {
    return {{"scene_radius", scene_radius},
            {"mean_rho", mean_rho},
            {"background", background},
            {"split", split}};
}

DatasetMeta DatasetMeta::from_json(const nlohmann::json& j) {
    DatasetMeta m;
    m.scene_radius = j.value("scene_radius", m.scene_radius);
    m.mean_rho = j.value("mean_rho", m.mean_rho);
    if (j.contains("background")) m.background = j.at("background").get<std::array<double, 3>>();
    m.split = j.value("split", m.split);
    return m;
}

std::size_t SceneDataset::total_views() const {
    std::size_t n = 0;
    for (const auto& o : objects) n += o.views.size();
    return n;
}

RenderConfig SceneDataset::default_render_config(int n_samples) const {
    RenderConfig cfg;
    cfg.n_samples = n_samples;
    cfg.near = meta.mean_rho - 1.5 * meta.scene_radius;
    cfg.far = meta.mean_rho + 1.5 * meta.scene_radius;
    cfg.white_background = meta.background[0] > 0.5;
    return cfg;
}

Image oracle_render(const SyntheticObject& obj, const Extrinsic& pose, const Intrinsics& K,
                    const RenderConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<int, int>> pixels;
    pixels.reserve(static_cast<std::size_t>(K.width) * K.height);
    for (int r = 0; r < K.height; ++r)
        for (int c = 0; c < K.width; ++c) pixels.emplace_back(r, c);

    RayBatch rays = generate_rays(pose, K, pixels);
    Tensor ts = sample_ts(pixels.size(), cfg, nullptr);
    const std::size_t nr = pixels.size(), s = ts.cols();

    std::vector<double> sig(nr * s), col(nr * s * 3);
    for (std::size_t i = 0; i < nr; ++i) {
        Eigen::Vector3d o(rays.origins(i, 0), rays.origins(i, 1), rays.origins(i, 2));
        Eigen::Vector3d d(rays.directions(i, 0), rays.directions(i, 1), rays.directions(i, 2));
        for (std::size_t j = 0; j < s; ++j) {
            const Eigen::Vector3d x = o + ts(i, j) * d;
            auto [sigma, c] = oracle_density_color(obj, x, d);
            sig[i * s + j] = sigma;
            for (int k = 0; k < 3; ++k) col[(i * s + j) * 3 + k] = c[k];
        }
    }
    RenderResult res = composite(Tensor::constant({nr, s}, std::move(sig)),
                                 Tensor::constant({nr * s, 3}, std::move(col)), ts, cfg);
    Image img(K.width, K.height);
    for (std::size_t i = 0; i < nr; ++i)
        for (int k = 0; k < 3; ++k) img.at(pixels[i].first, pixels[i].second, k) = res.rgb(i, k);
    return img;
}

SceneDataset generate_dataset(int n_objects, int n_views, int image_size,
                              std::uint64_t seed, int oracle_samples) {
    if (n_objects < 1 || n_views < 1 || image_size < 1)
        throw Error("data: generate_dataset counts must be >= 1");
    Rng rng(seed);
    SceneDataset ds;
    ds.meta.scene_radius = 0.9;
    ds.meta.mean_rho = 2.0;

    Intrinsics K;
    K.width = K.height = image_size;
    K.fx = K.fy = 1.1 * image_size;
    K.cx = (image_size - 1) / 2.0;
    K.cy = (image_size - 1) / 2.0;

    RenderConfig cfg = ds.default_render_config(oracle_samples);

    for (int j = 0; j < n_objects; ++j) {
        SyntheticObject obj;
        for (int i = 0; i < 3; ++i) obj.radii[i] = rng.uniform(0.45, 0.8);
        obj.exponent = rng.uniform(2.0, 6.0);
        for (int i = 0; i < 3; ++i) obj.albedo[i] = rng.uniform(0.25, 0.85);
        // gradients along x and y are biased positive so every object (and
        // the latent-space mean) carries a consistent directional color cue;
        // without it azimuth is nearly unidentifiable at low resolution
        obj.color_grad[0] = rng.uniform(0.25, 0.6);
        obj.color_grad[1] = rng.uniform(0.25, 0.6);
        obj.color_grad[2] = rng.uniform(-0.6, 0.6);
        obj.validate();

        ObjectViews ov;
        ov.id = "obj_" + std::to_string(j);
        ov.source = obj;
        for (int v = 0; v < n_views; ++v) {
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double theta = rng.uniform(5.0, 45.0) * std::numbers::pi / 180.0;
            CameraPose pose = CameraPose::make(phi, theta, ds.meta.mean_rho);
            View view;
            view.pose = rotation_from_pose(pose);
            view.intrinsics = K;
            view.image = oracle_render(obj, view.pose, K, cfg);
            ov.views.push_back(std::move(view));
        }
        ds.objects.push_back(std::move(ov));
    }
    return ds;
}

// ---- SRN-style layout ----

namespace {

std::string view_name(std::size_t i) {
    std::ostringstream os;
    os.width(6);
    os.fill('0');
    os << i;
    return os.str();
}

Intrinsics parse_intrinsics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("data: missing intrinsics file " + path);
    Intrinsics K;
    double focal = 0;
    if (!(is >> focal >> K.cx >> K.cy)) throw Error("data: malformed intrinsics " + path);
    if (!(is >> K.height >> K.width)) throw Error("data: malformed intrinsics " + path);
    K.fx = K.fy = focal;
    K.validate();
    return K;
}

}  // namespace

void export_srn_dataset(const SceneDataset& ds, const std::string& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error("data: cannot create " + root + ": " + ec.message());

    {
        std::ofstream os(fs::path(root) / "meta.json");
        os << ds.meta.to_json().dump(2) << "\n";
        if (!os) throw Error("data: cannot write meta.json under " + root);
    }
    for (const auto& obj : ds.objects) {
        const fs::path dir = fs::path(root) / obj.id;
        fs::create_directories(dir / "rgb");
        fs::create_directories(dir / "pose");
        if (obj.views.empty()) throw Error("data: object " + obj.id + " has no views");
        {
            const Intrinsics& K = obj.views.front().intrinsics;
            std::ofstream os(dir / "intrinsics.txt");
            os.precision(17);
            os << K.fx << " " << K.cx << " " << K.cy << "\n"
               << K.height << " " << K.width << "\n";
        }
        for (std::size_t i = 0; i < obj.views.size(); ++i) {
            write_png((dir / "rgb" / (view_name(i) + ".png")).string(), obj.views[i].image);
            std::ofstream os(dir / "pose" / (view_name(i) + ".txt"));
            os << format_pose(obj.views[i].pose) << "\n";
        }
    }
}

SceneDataset load_srn_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw Error("data: dataset root " + root + " is not a directory");
    SceneDataset ds;
    {
        std::ifstream is(fs::path(root) / "meta.json");
        if (is) {
            nlohmann::json j;
            try {
                is >> j;
            } catch (const nlohmann::json::exception& e) {
                throw Error("data: bad meta.json under " + root + ": " + e.what());
            }
            ds.meta = DatasetMeta::from_json(j);
        }
    }

    std::vector<fs::path> object_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) object_dirs.push_back(entry.path());
    std::sort(object_dirs.begin(), object_dirs.end());
    if (object_dirs.empty()) throw Error("data: no object folders under " + root);

    for (const auto& dir : object_dirs) {
        ObjectViews ov;
        ov.id = dir.filename().string();
        const Intrinsics K = parse_intrinsics((dir / "intrinsics.txt").string());

        auto listing = [&](const char* sub) {
            std::vector<fs::path> files;
            const fs::path d = dir / sub;
            if (!fs::is_directory(d))
                throw Error("data: object " + ov.id + " missing " + sub + "/ directory");
            for (const auto& e : fs::directory_iterator(d)) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            return files;
        };
        const auto rgbs = listing("rgb");
        const auto poses = listing("pose");
        if (rgbs.size() != poses.size())
            throw Error("data: object " + ov.id + " has " + std::to_string(rgbs.size()) +
                        " images but " + std::to_string(poses.size()) + " poses");
        if (rgbs.empty()) throw Error("data: object " + ov.id + " has no views");

        for (std::size_t i = 0; i < rgbs.size(); ++i) {
            View v;
            v.intrinsics = K;
            v.image = read_png(rgbs[i].string());
            if (v.image.width != K.width || v.image.height != K.height)
                throw Error("data: object " + ov.id + " image " + rgbs[i].filename().string() +
                            " size differs from intrinsics");
            std::ifstream is(poses[i]);
            std::stringstream buf;
            buf << is.rdbuf();
            v.pose = parse_pose(buf.str(), poses[i].string());
            ov.views.push_back(std::move(v));
        }
        ds.objects.push_back(std::move(ov));
    }
    return ds;
}

}  // namespace drf

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drf/camera.hpp"
#include "drf/image.hpp"
#include "drf/render.hpp"
#include "drf/rng.hpp"

namespace drf {

/// Analytic test object: a superellipsoid with a smooth density shell and an
/// axis-aligned albedo gradient. Shape and appearance are controlled by
/// independent parameters so disentanglement experiments have ground truth.
struct SyntheticObject {
    Eigen::Vector3d radii{0.6, 0.6, 0.6};
    double exponent = 2.0;       // 2 = ellipsoid, larger = boxier
    double density_scale = 20.0;
    double sharpness = 0.04;     // shell transition width
    Eigen::Vector3d albedo{0.7, 0.7, 0.7};
    Eigen::Vector3d color_grad{0, 0, 0};  // channel k varies along axis k

    void validate() const;
};

/// Closed-form density and color at x (view direction is accepted for
/// signature parity but the oracle is Lambertian-flat).
std::pair<double, Eigen::Vector3d> oracle_density_color(const SyntheticObject& obj,
                                                        const Eigen::Vector3d& x,
                                                        const Eigen::Vector3d& d);

struct View {
    Image image;
    Extrinsic pose;
    Intrinsics intrinsics;
};

struct DatasetMeta {
    double scene_radius = 0.9;
    double mean_rho = 2.0;
    std::array<double, 3> background{0, 0, 0};
    std::string split = "train";

    nlohmann::json to_json() const;
    static DatasetMeta from_json(const nlohmann::json& j);
};

struct ObjectViews {
    std::string id;
    std::vector<View> views;
    std::optional<SyntheticObject> source;  // present for generated data
};

struct SceneDataset {
    std::vector<ObjectViews> objects;
    DatasetMeta meta;

    std::size_t total_views() const;
    RenderConfig default_render_config(int n_samples) const;
};

/// Reference rendering of the analytic object: dense uniform sampling pushed
/// through the same alpha-compositing as the learned pipeline.
Image oracle_render(const SyntheticObject& obj, const Extrinsic& pose, const Intrinsics& K,
                    const RenderConfig& cfg);

/// Deterministic synthetic dataset: n_objects random superellipsoids, each
/// seen from n_views poses sampled on the upper viewing hemisphere
/// (phi uniform, theta in [5, 45] degrees, fixed rho).
SceneDataset generate_dataset(int n_objects, int n_views, int image_size,
                              std::uint64_t seed, int oracle_samples = 256);

/// SRN-style directory layout: <root>/<object>/{rgb/*.png, pose/*.txt,
/// intrinsics.txt} plus a meta.json sidecar at the root.
void export_srn_dataset(const SceneDataset& ds, const std::string& root);
SceneDataset load_srn_dataset(const std::string& root);

}  // namespace drf

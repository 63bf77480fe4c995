// drf: synthetic dataset generation, training, rendering, test-time
// inversion, latent editing, mesh extraction and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "drf/camera.hpp"
#include "drf/data.hpp"
#include "drf/error.hpp"
#include "drf/field.hpp"
#include "drf/image.hpp"
#include "drf/mesh.hpp"
#include "drf/metrics.hpp"
#include "drf/optim.hpp"
#include "drf/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FieldFlags {
    drf::FieldConfig cfg;
    std::string variant = "codenerf";

    void attach(CLI::App* app) {
        app->add_option("--latent-dim", cfg.latent_dim, "Latent code dimension");
        app->add_option("--hidden", cfg.hidden_dim, "Hidden layer width");
        app->add_option("--v-dim", cfg.v_dim, "Intermediate feature width");
        app->add_option("--freq-x", cfg.L_x, "Positional encoding frequencies (positions)");
        app->add_option("--freq-d", cfg.L_d, "Positional encoding frequencies (directions)");
        app->add_option("--layers-s", cfg.n_layers_s, "Shape-stage layer count");
        app->add_option("--layers-t", cfg.n_layers_t, "Texture-stage layer count");
        app->add_option("--variant", variant, "Conditioning variant: codenerf, M1 or M2");
    }
    drf::FieldConfig resolve() {
        cfg.variant = drf::parse_variant(variant);
        cfg.validate();
        return cfg;
    }
};

drf::Checkpoint load_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw drf::Error("cli: checkpoint not found: " + path);
    return drf::Checkpoint::load(path);
}

drf::SceneDataset load_dataset(const std::string& root) {
    if (root.empty())
        throw drf::Error("cli: no dataset given (pass --data or set DRF_DATA_ROOT)");
    return drf::load_srn_dataset(root);
}

std::pair<drf::Tensor, drf::Tensor> object_codes(const drf::Checkpoint& ck, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= ck.latents.size())
        throw drf::Error("cli: object index " + std::to_string(index) + " out of range (" +
                         std::to_string(ck.latents.size()) + " trained objects)");
    return {ck.latents.shape_codes[index], ck.latents.texture_codes[index]};
}

drf::RenderConfig checkpoint_render_config(const drf::Checkpoint& ck, int n_samples,
                                           int importance) {
    drf::RenderConfig rc;
    rc.n_samples = n_samples;
    rc.near = ck.meta.value("near", 0.5);
    rc.far = ck.meta.value("far", 3.5);
    rc.importance_samples = importance;
    if (ck.meta.contains("background"))
        rc.white_background = ck.meta["background"][0].get<double>() > 0.5;
    return rc;
}

/// PSNR pooled over every pixel of every train view, rendered at GT pose with
/// the trained codes. `train` prints it and `eval` recomputes it.
double dataset_psnr(const drf::Checkpoint& ck, const drf::SceneDataset& ds, int n_samples,
                    int threads) {
    drf::RenderConfig rc = checkpoint_render_config(ck, n_samples, 0);
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t o = 0; o < ds.objects.size(); ++o) {
        auto [z_s, z_t] = object_codes(ck, static_cast<int>(o));
        for (const drf::View& view : ds.objects[o].views) {
            drf::Image got = drf::render_image(ck.params, ck.config, z_s, z_t, view.pose,
                                               view.intrinsics, rc, 1024, threads);
            for (std::size_t i = 0; i < got.data.size(); ++i) {
                const double d = got.data[i] - view.image.data[i];
                se += d * d;
            }
            n += got.data.size();
        }
    }
    const double mse = se / static_cast<double>(n);
    return mse > 0 ? -10.0 * std::log10(mse) : drf::kPsnrInfinity;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << "\n";
    if (!os) throw drf::Error("cli: cannot write " + path);
}

json pose_json(const drf::CameraPose& pose) {
    return {{"phi", pose.azimuth()}, {"theta", pose.elevation()}, {"rho", pose.distance()}};
}

int run(int argc, char** argv) {
    CLI::App app{"Disentangled conditional radiance fields"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Config file (TOML; command-line flags take precedence)");
    app.allow_config_extras(false);

    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);

    std::string data_root;
    const char* env_root = std::getenv("DRF_DATA_ROOT");
    if (env_root) data_root = env_root;

    // ---- dataset gen ----
    auto* dataset = app.add_subcommand("dataset", "Dataset utilities")->require_subcommand(1);
    auto* gen = dataset->add_subcommand("gen", "Generate a synthetic SRN-style dataset");
    struct {
        std::string out;
        int objects = 4, views = 20, size = 16, oracle_samples = 256;
        std::uint64_t seed = 0;
    } g;
    gen->add_option("--out", g.out, "Output directory")->required();
    gen->add_option("--objects", g.objects)->check(CLI::PositiveNumber);
    gen->add_option("--views", g.views)->check(CLI::PositiveNumber);
    gen->add_option("--size", g.size)->check(CLI::PositiveNumber);
    gen->add_option("--seed", g.seed);
    gen->add_option("--oracle-samples", g.oracle_samples)->check(CLI::PositiveNumber);
    gen->callback([&] {
        drf::SceneDataset ds =
            drf::generate_dataset(g.objects, g.views, g.size, g.seed, g.oracle_samples);
        drf::export_srn_dataset(ds, g.out);
        std::cout << "wrote " << ds.total_views() << " views of " << g.objects << " objects to "
                  << g.out << "\n";
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "Train network weights and latent codes");
    drf::TrainConfig tc;
    FieldFlags tf;
    struct {
        std::string out = "checkpoint.drf", log, resume;
    } t;
    train->add_option("--data", data_root, "SRN dataset root")->envname("DRF_DATA_ROOT");
    train->add_option("--out", t.out, "Checkpoint output path");
    train->add_option("--log", t.log, "JSONL metrics log path");
    train->add_option("--resume", t.resume, "Continue from an existing checkpoint");
    train->add_option("--iterations", tc.iterations)->check(CLI::NonNegativeNumber);
    train->add_option("--rays", tc.rays_per_batch)->check(CLI::PositiveNumber);
    train->add_option("--samples", tc.n_samples)->check(CLI::PositiveNumber);
    train->add_option("--lr-net", tc.lr_net);
    train->add_option("--lr-latent", tc.lr_latent);
    train->add_option("--weight-decay", tc.weight_decay_net);
    train->add_option("--nu", tc.nu);
    train->add_option("--seed", tc.seed);
    train->add_flag("--cosine-decay", tc.cosine_decay);
    train->add_flag("!--no-stratified", tc.stratified, "Disable stratified depth jitter");
    tf.attach(train);
    train->callback([&] {
        drf::SceneDataset ds = load_dataset(data_root);
        drf::FieldConfig fcfg = tf.resolve();

        std::ofstream log_os;
        if (!t.log.empty()) {
            log_os.open(t.log);
            if (!log_os) throw drf::Error("cli: cannot open log file " + t.log);
        }
        drf::TrainLogFn log_fn = [&](const drf::TrainStats& st) {
            if (!log_os.is_open()) return;
            log_os << json{{"iteration", st.iteration},
                           {"loss", st.loss},
                           {"psnr", st.psnr},
                           {"wall_seconds", st.wall_seconds}}
                          .dump()
                   << "\n";
        };

        drf::Checkpoint resumed;
        const drf::Checkpoint* resume_ptr = nullptr;
        if (!t.resume.empty()) {
            resumed = load_checkpoint(t.resume);
            resume_ptr = &resumed;
        }
        drf::Checkpoint ck = drf::train(ds, tc, fcfg, log_fn, resume_ptr);
        ck.save(t.out);
        std::cout << "final train PSNR: " << dataset_psnr(ck, ds, tc.n_samples, threads)
                  << " dB\n";
        std::cout << "checkpoint written to " << t.out << "\n";
    });

    // ---- render ----
    auto* render = app.add_subcommand("render", "Render one view from a checkpoint");
    struct {
        std::string ckpt = "checkpoint.drf", out = "render.png", pose_file;
        int object = 0, size = 64, samples = 32, importance = 0;
        double phi = 0.5, theta = 0.4, rho = 0.0, focal = 0.0;
        std::size_t chunk = 1024;
    } r;
    render->add_option("--ckpt", r.ckpt);
    render->add_option("--out", r.out);
    render->add_option("--object", r.object, "Trained object index");
    render->add_option("--size", r.size)->check(CLI::PositiveNumber);
    render->add_option("--focal", r.focal, "Focal length in pixels (default 1.1 * size)");
    render->add_option("--samples", r.samples)->check(CLI::PositiveNumber);
    render->add_option("--importance", r.importance)->check(CLI::NonNegativeNumber);
    render->add_option("--chunk", r.chunk)->check(CLI::PositiveNumber);
    render->add_option("--phi", r.phi, "Azimuth, radians");
    render->add_option("--theta", r.theta, "Elevation, radians");
    render->add_option("--rho", r.rho, "Camera distance (default: training mean)");
    render->add_option("--pose-file", r.pose_file, "SRN 4x4 pose text file instead of angles");
    render->callback([&] {
        drf::Checkpoint ck = load_checkpoint(r.ckpt);
        auto [z_s, z_t] = object_codes(ck, r.object);
        drf::Extrinsic pose;
        if (!r.pose_file.empty()) {
            std::ifstream is(r.pose_file);
            if (!is) throw drf::Error("cli: cannot read pose file " + r.pose_file);
            std::stringstream buf;
            buf << is.rdbuf();
            pose = drf::parse_pose(buf.str(), r.pose_file);
        } else {
            const double rho = r.rho > 0 ? r.rho : ck.meta.value("mean_rho", 2.0);
            pose = drf::rotation_from_pose(drf::CameraPose::make(r.phi, r.theta, rho));
        }
        drf::Intrinsics K;
        K.width = K.height = r.size;
        K.fx = K.fy = r.focal > 0 ? r.focal : 1.1 * r.size;
        K.cx = K.cy = (r.size - 1) / 2.0;
        drf::RenderConfig rc = checkpoint_render_config(ck, r.samples, r.importance);
        drf::Image img = drf::render_image(ck.params, ck.config, z_s, z_t, pose, K, rc,
                                           r.chunk, threads);
        drf::write_png(r.out, img);
        std::cout << "wrote " << r.out << "\n";
    });

    // ---- invert ----
    auto* invert = app.add_subcommand("invert", "Fit codes (and pose) to one observed view");
    drf::InferConfig ic;
    struct {
        std::string ckpt = "checkpoint.drf", out = "invert_out";
        int object = 0, view = 0;
        double init_phi = 0.5, init_theta = 0.3, init_rho = 0.0;
        bool gt_pose = false;
        std::vector<int> snapshots = {0, 5, 10, 50};
    } v;
    invert->add_option("--ckpt", v.ckpt);
    invert->add_option("--data", data_root, "SRN dataset root")->envname("DRF_DATA_ROOT");
    invert->add_option("--out", v.out, "Output directory");
    invert->add_option("--object", v.object, "Dataset object index");
    invert->add_option("--view", v.view, "Dataset view index");
    invert->add_option("--iterations", ic.iterations)->check(CLI::PositiveNumber);
    invert->add_option("--samples", ic.n_samples)->check(CLI::PositiveNumber);
    invert->add_option("--lr-code", ic.lr_code);
    invert->add_option("--lr-phi", ic.lr_phi);
    invert->add_option("--lr-theta", ic.lr_theta);
    invert->add_option("--lr-rho", ic.lr_rho);
    invert->add_option("--nu", ic.nu);
    invert->add_option("--init-phi", v.init_phi, "Initial azimuth, radians");
    invert->add_option("--init-theta", v.init_theta, "Initial elevation, radians");
    invert->add_option("--init-rho", v.init_rho, "Initial distance (default: training mean)");
    invert->add_flag("--gt-pose", v.gt_pose, "Freeze the pose at its initial value");
    invert->add_flag("!--no-cosine-decay", ic.cosine_decay, "Disable step-size annealing");
    invert->add_option("--snapshots", v.snapshots,
                       "Iterations to render along the way (final always included)");
    invert->callback([&] {
        drf::Checkpoint ck = load_checkpoint(v.ckpt);
        drf::SceneDataset ds = load_dataset(data_root);
        if (v.object < 0 || static_cast<std::size_t>(v.object) >= ds.objects.size())
            throw drf::Error("cli: dataset object index out of range");
        const auto& views = ds.objects[v.object].views;
        if (v.view < 0 || static_cast<std::size_t>(v.view) >= views.size())
            throw drf::Error("cli: dataset view index out of range");
        const drf::View& target = views[v.view];

        ic.optimize_pose = !v.gt_pose;
        const double rho0 = v.init_rho > 0 ? v.init_rho : ck.meta.value("mean_rho", 2.0);
        drf::CameraPose init = drf::CameraPose::make(v.init_phi, v.init_theta, rho0);
        drf::RenderConfig rc = checkpoint_render_config(ck, ic.n_samples, 0);

        fs::create_directories(v.out);
        std::ofstream trace_os(fs::path(v.out) / "trace.jsonl");

        std::set<int> snaps(v.snapshots.begin(), v.snapshots.end());
        snaps.insert(ic.iterations);
        auto snapshot = [&](int iter, const drf::InvertResult& res) {
            drf::Extrinsic pose = drf::rotation_from_pose(res.poses[0]);
            drf::Image img = drf::render_image(ck.params, ck.config, res.z_s, res.z_t, pose,
                                               target.intrinsics, rc, 1024, threads);
            char name[32];
            std::snprintf(name, sizeof name, "iter_%06d.png", iter);
            drf::write_png((fs::path(v.out) / name).string(), img);
        };
        drf::InvertCallback cb = [&](const drf::InvertStats& st, const drf::InvertResult& res) {
            trace_os << json{{"iteration", st.iteration},
                             {"loss", st.loss},
                             {"best_loss", st.best_loss},
                             {"phi", st.phi},
                             {"theta", st.theta},
                             {"rho", st.rho}}
                            .dump()
                     << "\n";
            if (snaps.count(st.iteration) && st.iteration <= ic.iterations)
                snapshot(st.iteration, res);
        };

        drf::InvertResult res = drf::invert({target.image}, {target.intrinsics}, {init}, ck, rc,
                                            ic, cb);
        json out = {{"codes", {{"z_s", res.z_s.value()}, {"z_t", res.z_t.value()}}},
                    {"pose", pose_json(res.poses[0])},
                    {"final_loss", res.trace.back().best_loss},
                    {"diverged", res.diverged}};
        drf::PoseError err = drf::pose_error(drf::rotation_from_pose(res.poses[0]), target.pose);
        out["pose_error"] = {{"rot_deg", err.rot_deg}, {"trans_rel", err.trans_rel}};
        write_json((fs::path(v.out) / "result.json").string(), out);
        std::cout << "inversion " << (res.diverged ? "diverged" : "finished")
                  << ", rotation error " << err.rot_deg << " deg\n";
    });

    // ---- edit ----
    auto* edit = app.add_subcommand("edit", "Render a latent interpolation sweep");
    struct {
        std::string ckpt = "checkpoint.drf", out = "edit_out", which = "shape";
        int object_a = 0, object_b = 1, size = 64, samples = 32;
        std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
        double phi = 0.5, theta = 0.4, rho = 0.0;
    } e;
    edit->add_option("--ckpt", e.ckpt);
    edit->add_option("--out", e.out, "Output directory");
    edit->add_option("--object-a", e.object_a);
    edit->add_option("--object-b", e.object_b);
    edit->add_option("--which", e.which)->check(CLI::IsMember({"shape", "texture"}));
    edit->add_option("--alphas", e.alphas);
    edit->add_option("--size", e.size)->check(CLI::PositiveNumber);
    edit->add_option("--samples", e.samples)->check(CLI::PositiveNumber);
    edit->add_option("--phi", e.phi);
    edit->add_option("--theta", e.theta);
    edit->add_option("--rho", e.rho);
    edit->callback([&] {
        drf::Checkpoint ck = load_checkpoint(e.ckpt);
        auto [zs_a, zt_a] = object_codes(ck, e.object_a);
        auto [zs_b, zt_b] = object_codes(ck, e.object_b);
        const double rho = e.rho > 0 ? e.rho : ck.meta.value("mean_rho", 2.0);
        drf::Extrinsic pose = drf::rotation_from_pose(drf::CameraPose::make(e.phi, e.theta, rho));
        drf::Intrinsics K;
        K.width = K.height = e.size;
        K.fx = K.fy = 1.1 * e.size;
        K.cx = K.cy = (e.size - 1) / 2.0;
        drf::RenderConfig rc = checkpoint_render_config(ck, e.samples, 0);

        fs::create_directories(e.out);
        for (std::size_t i = 0; i < e.alphas.size(); ++i) {
            const double a = e.alphas[i];
            drf::Tensor z_s = e.which == "shape" ? drf::interpolate_codes(zs_a, zs_b, a) : zs_a;
            drf::Tensor z_t = e.which == "texture" ? drf::interpolate_codes(zt_a, zt_b, a) : zt_a;
            drf::Image img =
                drf::render_image(ck.params, ck.config, z_s, z_t, pose, K, rc, 1024, threads);
            char name[32];
            std::snprintf(name, sizeof name, "alpha_%03zu.png", i);
            drf::write_png((fs::path(e.out) / name).string(), img);
        }
        std::cout << "wrote " << e.alphas.size() << " renders to " << e.out << "\n";
    });

    // ---- mesh ----
    auto* mesh = app.add_subcommand("mesh", "Extract a colored isosurface mesh");
    struct {
        std::string ckpt = "checkpoint.drf", out = "mesh.ply", obj_out;
        int object = 0, resolution = 64;
        double iso = -1.0, bound = 1.0;
    } m;
    mesh->add_option("--ckpt", m.ckpt);
    mesh->add_option("--out", m.out, "PLY output path");
    mesh->add_option("--obj-out", m.obj_out, "Optional OBJ output path");
    mesh->add_option("--object", m.object);
    mesh->add_option("--resolution", m.resolution)->check(CLI::Range(2, 512));
    mesh->add_option("--iso", m.iso, "Density threshold (default: Otsu split)");
    mesh->add_option("--bound", m.bound, "Half-extent of the sampling cube");
    mesh->callback([&] {
        drf::Checkpoint ck = load_checkpoint(m.ckpt);
        auto [z_s, z_t] = object_codes(ck, m.object);
        const Eigen::Vector3d lo(-m.bound, -m.bound, -m.bound), hi(m.bound, m.bound, m.bound);
        drf::VoxelGrid grid =
            drf::sample_grid(ck.params, ck.config, z_s, z_t,
                             {m.resolution, m.resolution, m.resolution}, lo, hi);
        const double iso = m.iso >= 0 ? m.iso : drf::otsu_iso(grid);
        drf::Mesh out = drf::marching_cubes(grid, iso);
        if (out.empty()) throw drf::Error("cli: empty mesh, the field never crosses iso");
        Eigen::Vector3d bg = Eigen::Vector3d::Zero();
        if (ck.meta.contains("background"))
            for (int i = 0; i < 3; ++i) bg[i] = ck.meta["background"][i].get<double>();
        out = drf::color_vertices(std::move(out), ck.params, ck.config, z_s, z_t,
                                  grid.voxel_diagonal(), bg);
        drf::write_ply(m.out, out);
        if (!m.obj_out.empty()) drf::write_obj(m.obj_out, out);
        std::cout << "wrote " << out.vertices.size() << " vertices, " << out.faces.size()
                  << " faces (iso " << iso << ") to " << m.out << "\n";
    });

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
    struct {
        std::string ckpt = "checkpoint.drf", out = "eval.json";
        int samples = 32;
    } ev;
    eval->add_option("--ckpt", ev.ckpt);
    eval->add_option("--data", data_root, "SRN dataset root")->envname("DRF_DATA_ROOT");
    eval->add_option("--out", ev.out, "Metrics report path");
    eval->add_option("--samples", ev.samples)->check(CLI::PositiveNumber);
    eval->callback([&] {
        drf::Checkpoint ck = load_checkpoint(ev.ckpt);
        drf::SceneDataset ds = load_dataset(data_root);
        drf::RenderConfig rc = checkpoint_render_config(ck, ev.samples, 0);
        json per_object = json::array();
        for (std::size_t o = 0; o < ds.objects.size(); ++o) {
            auto [z_s, z_t] = object_codes(ck, static_cast<int>(o));
            json views = json::array();
            for (const drf::View& view : ds.objects[o].views) {
                drf::Image got = drf::render_image(ck.params, ck.config, z_s, z_t, view.pose,
                                                   view.intrinsics, rc, 1024, threads);
                json entry = {{"psnr", drf::psnr(got, view.image)}};
                if (view.image.width >= 11 && view.image.height >= 11)
                    entry["ssim"] = drf::ssim(got, view.image);
                views.push_back(entry);
            }
            per_object.push_back({{"id", ds.objects[o].id}, {"views", views}});
        }
        const double pooled = dataset_psnr(ck, ds, ev.samples, threads);
        write_json(ev.out, {{"psnr", pooled}, {"objects", per_object}});
        std::cout << "PSNR: " << pooled << " dB\n";
        std::cout << "report written to " << ev.out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "error: cli: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const drf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: cli: " << e.what() << "\n";
        return 1;
    }
}

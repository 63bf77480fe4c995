// Acceptance gate: one line per criterion, nonzero exit if any fail.
//
// The heavy criteria share artifacts: criterion 5 trains the 4-object toy
// checkpoint, criterion 7 probes its optimum, criterion 6 trains a wider
// 12-object checkpoint so the held-out inversions have a latent space worth
// searching.

#include <chrono>
#include <filesystem>
#include <map>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "common.hpp"
#include "gradcheck.hpp"
#include "drf/camera.hpp"
#include "drf/data.hpp"
#include "drf/field.hpp"
#include "drf/mesh.hpp"
#include "drf/metrics.hpp"
#include "drf/optim.hpp"
#include "drf/render.hpp"

using namespace drf;
using namespace drf::testutil;

namespace {

int g_failures = 0;

void criterion(int id, const std::string& name, const std::function<std::string()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    if (!detail.empty() && detail[0] == '!') {
        ok = false;
        detail = detail.substr(1);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d: %s - %s (%s%.1fs)\n", id, ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : (detail + ", ").c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fail(const std::string& why) { return "!" + why; }

// ---------------------------------------------------------------- shared

struct ToyRun {
    SceneDataset train_ds, held_ds;
    Checkpoint ck;
    double train_secs = 0;
    bool reproducible = false;
};

FieldConfig toy_field_config() {
    FieldConfig fc;
    fc.latent_dim = 8;
    fc.hidden_dim = 64;
    return fc;
}

TrainConfig toy_train_config(int iterations) {
    TrainConfig tc;
    tc.iterations = iterations;
    tc.lr_net = 5e-3;
    tc.lr_latent = 1e-2;
    tc.cosine_decay = true;
    tc.seed = 1;
    return tc;
}

/// Pooled PSNR over every pixel of every view, rendered at GT pose with the
/// trained per-object codes.
double dataset_psnr(const Checkpoint& ck, const SceneDataset& ds, const RenderConfig& rc) {
    double se = 0;
    std::size_t n = 0;
    for (std::size_t o = 0; o < ds.objects.size(); ++o) {
        for (const View& v : ds.objects[o].views) {
            Image got = render_image(ck.params, ck.config, ck.latents.shape_codes[o],
                                     ck.latents.texture_codes[o], v.pose, v.intrinsics, rc);
            for (std::size_t i = 0; i < got.data.size(); ++i) {
                const double d = got.data[i] - v.image.data[i];
                se += d * d;
            }
            n += got.data.size();
        }
    }
    return -10.0 * std::log10(se / static_cast<double>(n));
}

std::vector<double> flatten(const Checkpoint& ck) {
    std::vector<double> out;
    for (const Tensor& t : const_cast<Checkpoint&>(ck).params.all_parameters())
        out.insert(out.end(), t.value().begin(), t.value().end());
    for (const Tensor& t : ck.latents.shape_codes)
        out.insert(out.end(), t.value().begin(), t.value().end());
    for (const Tensor& t : ck.latents.texture_codes)
        out.insert(out.end(), t.value().begin(), t.value().end());
    return out;
}

/// Spherical coordinates of a generated view's camera center.
CameraPose spherical_of(const Extrinsic& pose, bool trainable) {
    const Eigen::Vector3d p = pose.p;
    const double rho = p.norm();
    return CameraPose::make(std::atan2(p.y(), p.x()), std::asin(p.z() / rho), rho, trainable);
}

}  // namespace

int main() {
    // ---- 1. gradients vs central finite differences, 100 seeds ----
    criterion(1, "analytic gradients match finite differences over 100 seeds", [] {
        GradReport prim, field, comp, photo;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            prim.merge(primitive_grad_suite(seed));
            field.merge(field_grad_suite(seed));
            comp.merge(composite_grad_suite(seed));
            photo.merge(photometric_grad_suite(seed));
        }
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "max rel err: primitives %.1e, field %.1e, composite %.1e, pose %.1e",
                      prim.max_rel, field.max_rel, comp.max_rel, photo.max_rel);
        if (prim.max_rel >= 1e-4 || field.max_rel >= 1e-4 || comp.max_rel >= 1e-4 ||
            photo.max_rel >= 1e-3)
            return fail(buf);
        if (prim.checked < 100 || field.checked < 100 || comp.checked < 100 || photo.checked < 100)
            return fail("suite ran fewer checks than expected");
        return std::string(buf);
    });

    // ---- 2. exact shape/texture disentanglement + ablation ----
    criterion(2, "density and feature ignore the texture code; M1/M2 do not", [] {
        Rng rng(42);
        const FieldConfig base = tiny_field_config();
        int m1_broken = 0, m2_broken = 0;
        for (int draw = 0; draw < 1000; ++draw) {
            FieldConfig cfg = base;
            FieldParams params = FieldParams::init(cfg, rng.next_u64());
            Tensor z_s = rand_const(rng, {1, 3}, -1.0, 1.0);
            Tensor z_t = rand_const(rng, {1, 3}, -1.0, 1.0);
            Tensor z_t2 = rand_const(rng, {1, 3}, -1.0, 1.0);
            Tensor x = rand_const(rng, {4, 3}, -1.0, 1.0);
            Tensor d = rand_const(rng, {4, 3}, -1.0, 1.0);

            FieldOutput a = eval_field(params, cfg, z_s, z_t, x, d);
            FieldOutput b = eval_field(params, cfg, z_s, z_t2, x, d);
            if (a.sigma.value() != b.sigma.value() || a.v.value() != b.v.value())
                return fail("texture substitution changed density at draw " +
                            std::to_string(draw));

            cfg.variant = FieldVariant::m1;
            FieldParams pm1 = FieldParams::init(cfg, rng.next_u64());
            Tensor d2 = rand_const(rng, {4, 3}, -1.0, 1.0);
            if (eval_field(pm1, cfg, z_s, z_t, x, d).sigma.value() !=
                eval_field(pm1, cfg, z_s, z_t, x, d2).sigma.value())
                ++m1_broken;

            cfg.variant = FieldVariant::m2;
            FieldParams pm2 = FieldParams::init(cfg, rng.next_u64());
            if (eval_field(pm2, cfg, z_s, z_t, x, d).sigma.value() !=
                eval_field(pm2, cfg, z_s, z_t2, x, d).sigma.value())
                ++m2_broken;
        }
        const std::string counts = "ablations broken: M1 " + std::to_string(m1_broken) +
                                   "/1000, M2 " + std::to_string(m2_broken) + "/1000";
        if (m1_broken < 990 || m2_broken < 990) return fail(counts);
        return counts;
    });

    // ---- 3. camera equivalence and rotation invariants ----
    criterion(3, "spherical pose matrix = look-at; Rodrigues invariants", [] {
        // hand matrix at phi = theta = 0, rho = 2
        const Extrinsic h = rotation_from_pose(CameraPose::make(0.0, 0.0, 2.0));
        const double c2w[9] = {0, 0, 1, 1, 0, 0, 0, 1, 0};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                if (h.rot_cw(r, c) != c2w[3 * r + c])
                    return fail("hand-computed matrix mismatch");
        if (h.p != Eigen::Vector3d(2, 0, 0)) return fail("hand-computed center mismatch");

        Rng rng(3);
        double worst = 0;
        for (int i = 0; i < 1000; ++i) {
            CameraPose pose = CameraPose::make(rng.uniform(0.0, 2 * std::numbers::pi),
                                               rng.uniform(-1.4, 1.4), rng.uniform(0.5, 4.0));
            const Extrinsic a = rotation_from_pose(pose);
            const Extrinsic b = look_at(a.p, Eigen::Vector3d::Zero());
            worst = std::max(worst, (a.rot_cw - b.rot_cw).cwiseAbs().maxCoeff());
            worst = std::max(worst, (a.p - b.p).cwiseAbs().maxCoeff());
        }
        if (worst >= 1e-9) return fail("pose vs look-at disagree by " + std::to_string(worst));

        for (int i = 0; i < 200; ++i) {
            Eigen::Vector3d k(rng.normal(), rng.normal(), rng.normal());
            k.normalize();
            const double a = rng.uniform(-3.0, 3.0), b = rng.uniform(-3.0, 3.0);
            const Eigen::Matrix3d R = rodrigues({k, a});
            if ((rodrigues({k, a + b}) - R * rodrigues({k, b})).cwiseAbs().maxCoeff() > 1e-12)
                return fail("Rodrigues composition violated");
            if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12 ||
                std::abs(R.determinant() - 1.0) > 1e-12)
                return fail("Rodrigues orthonormality violated");
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "max pose deviation %.1e", worst);
        return std::string(buf);
    });

    // ---- 4. compositing closed form + sub-probability ----
    criterion(4, "alpha compositing closed form and weight normalization", [] {
        // two samples, sigma*delta = ln 2 each: weights 1/2 and 1/4, T = 1/4
        RenderConfig cfg;
        cfg.n_samples = 2;
        cfg.near = 1.0;
        cfg.far = 2.0;
        const double s = 2.0 * std::log(2.0);  // delta = 0.5
        Tensor sigmas = Tensor::constant({1, 2}, {s, s});
        Tensor colors = Tensor::constant({2, 3}, {1, 0, 0, 1, 1, 0});
        Tensor ts = Tensor::constant({1, 2}, {1.0, 1.5});
        RenderResult res = composite(sigmas, colors, ts, cfg);
        const double w0 = res.weights(0, 0), w1 = res.weights(0, 1);
        if (std::abs(w0 - 0.5) > 1e-12 || std::abs(w1 - 0.25) > 1e-12)
            return fail("closed-form weights off");
        if (std::abs(res.rgb(0, 0) - 0.75) > 1e-12 || std::abs(res.rgb(0, 1) - 0.25) > 1e-12 ||
            std::abs(res.rgb(0, 2)) > 1e-12)
            return fail("closed-form color off");
        if (std::abs(res.transmittance(0, 0) - 0.25) > 1e-12)
            return fail("closed-form transmittance off");

        Rng rng(4);
        const std::size_t chunk = 1000, s_n = 8;
        double worst_closure = 0;
        for (int rep = 0; rep < 100; ++rep) {  // 10^5 rays total
            std::vector<double> sv(chunk * s_n), tv(chunk * s_n);
            for (std::size_t r = 0; r < chunk; ++r) {
                double t = cfg.near + rng.uniform(0.0, 0.05);
                for (std::size_t j = 0; j < s_n; ++j) {
                    sv[r * s_n + j] = rng.uniform(0.0, 5.0);
                    tv[r * s_n + j] = t;
                    t += rng.uniform(0.01, 0.12);
                }
            }
            RenderConfig c2 = cfg;
            c2.n_samples = s_n;
            RenderResult rr = composite(Tensor::constant({chunk, s_n}, std::move(sv)),
                                        Tensor::constant({chunk * s_n, 3},
                                                         std::vector<double>(chunk * s_n * 3, 0.5)),
                                        Tensor::constant({chunk, s_n}, std::move(tv)), c2);
            for (std::size_t r = 0; r < chunk; ++r) {
                double sum = 0;
                for (std::size_t j = 0; j < s_n; ++j) {
                    if (rr.weights(r, j) < 0) return fail("negative weight");
                    sum += rr.weights(r, j);
                }
                if (sum > 1.0 + 1e-12) return fail("weights exceed 1");
                worst_closure = std::max(worst_closure,
                                         std::abs(sum + rr.transmittance(r, 0) - 1.0));
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "max |sum w + T - 1| = %.1e over 1e5 rays", worst_closure);
        if (worst_closure > 1e-12) return fail(buf);
        return std::string(buf);
    });

    // ---- 5. toy auto-decoder training ----
    ToyRun toy;
    criterion(5, "toy training: 4 objects, 20 views, 16x16, 2000 iterations", [&toy] {
        SceneDataset full = generate_dataset(4, 24, 16, 7, 256);
        toy.train_ds = full;
        toy.held_ds = full;
        for (std::size_t o = 0; o < full.objects.size(); ++o) {
            auto& tv = toy.train_ds.objects[o].views;
            auto& hv = toy.held_ds.objects[o].views;
            tv.assign(full.objects[o].views.begin(), full.objects[o].views.begin() + 20);
            hv.assign(full.objects[o].views.begin() + 20, full.objects[o].views.end());
        }

        const auto t0 = std::chrono::steady_clock::now();
        toy.ck = train(toy.train_ds, toy_train_config(2000), toy_field_config());
        toy.train_secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        RenderConfig rc = toy.train_ds.default_render_config(32);
        const double train_psnr = dataset_psnr(toy.ck, toy.train_ds, rc);
        const double held_psnr = dataset_psnr(toy.ck, toy.held_ds, rc);

        Checkpoint a = train(toy.train_ds, toy_train_config(200), toy_field_config());
        Checkpoint b = train(toy.train_ds, toy_train_config(200), toy_field_config());
        toy.reproducible = flatten(a) == flatten(b);

        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "train %.2f dB, held-out %.2f dB, %.0fs, seed-reproducible %s", train_psnr,
                      held_psnr, toy.train_secs, toy.reproducible ? "yes" : "no");
        if (train_psnr < 25.0 || held_psnr < 20.0 || toy.train_secs > 1800 || !toy.reproducible)
            return fail(buf);
        return std::string(buf);
    });

    // ---- 6. test-time inversion on held-out objects ----
    criterion(6, "inversion from 40 deg azimuth error on held-out objects", [] {
        SceneDataset wide = generate_dataset(12, 20, 16, 21, 256);
        Checkpoint ck = train(wide, toy_train_config(2000), toy_field_config());
        RenderConfig rc = wide.default_render_config(32);

        InferConfig ic;  // 299 iterations, paper's learning-rate split
        int inliers = 0;
        std::vector<PoseError> errors;
        for (int trial = 0; trial < 10; ++trial) {
            SceneDataset held = generate_dataset(1, 1, 16, 100 + trial, 256);
            const View& v = held.objects[0].views[0];
            CameraPose gt = spherical_of(v.pose, false);
            CameraPose init =
                CameraPose::make(gt.azimuth() + 40.0 * std::numbers::pi / 180.0, gt.elevation(),
                                 gt.distance(), true);
            InvertResult res = invert({v.image}, {v.intrinsics}, {init}, ck, rc, ic);
            errors.push_back(pose_error(rotation_from_pose(res.poses[0]), v.pose));
            if (errors.back().rot_deg < 5.0 && errors.back().trans_rel < 0.03) ++inliers;
        }
        PosePartition part = outlier_filter(errors);
        char buf[96];
        std::snprintf(buf, sizeof buf, "inliers %d/10 (filter fraction %.2f)", inliers,
                      static_cast<double>(part.inliers.size()) / errors.size());
        if (inliers < 8) return fail(buf);
        return std::string(buf);
    });

    // ---- 7. inversion is a fixed point at the optimum ----
    criterion(7, "ground-truth codes and pose are a fixed point of inversion", [&toy] {
        if (toy.ck.latents.size() == 0) return fail("no trained checkpoint available");
        const Tensor& z_s = toy.ck.latents.shape_codes[0];
        const Tensor& z_t = toy.ck.latents.texture_codes[0];
        CameraPose gt = CameraPose::make(0.8, 0.3, 2.0);
        RenderConfig rc = toy.train_ds.default_render_config(32);
        const Intrinsics K = toy.train_ds.objects[0].views[0].intrinsics;
        Image target = render_image(toy.ck.params, toy.ck.config, z_s, z_t,
                                    rotation_from_pose(gt), K, rc);

        InferConfig ic;
        ic.iterations = 1;
        CameraPose init = CameraPose::make(0.8, 0.3, 2.0, true);
        InvertResult res = invert({target}, {K}, {init}, toy.ck, rc, ic, nullptr, &z_s, &z_t);

        const double dphi = std::abs(res.poses[0].azimuth() - gt.azimuth());
        const double dtheta = std::abs(res.poses[0].elevation() - gt.elevation());
        const double dloss = std::abs(res.trace.at(1).best_loss - res.trace.at(0).best_loss);
        char buf[96];
        std::snprintf(buf, sizeof buf, "pose moved %.1e rad, loss drift %.1e",
                      std::max(dphi, dtheta), dloss);
        if (dphi >= 1e-3 || dtheta >= 1e-3 || dloss > 1e-9) return fail(buf);
        return std::string(buf);
    });

    // ---- 8. marching cubes on an analytic sphere field ----
    criterion(8, "watertight sphere mesh, z_t-invariant geometry, oracle colors", [] {
        const int n = 64;
        const double radius = 0.7;
        VoxelGrid grid;
        grid.resolution = {n, n, n};
        grid.bounds_min = Eigen::Vector3d(-1, -1, -1);
        grid.bounds_max = Eigen::Vector3d(1, 1, 1);
        grid.fill([&](const Eigen::Vector3d& p) { return radius - p.norm(); });
        Mesh mesh = marching_cubes(grid, 0.0);
        if (mesh.empty()) return fail("empty mesh");

        std::map<std::pair<int, int>, int> edge_use;
        for (const auto& f : mesh.faces)
            for (int e = 0; e < 3; ++e) {
                int a = f[e], b = f[(e + 1) % 3];
                edge_use[{std::min(a, b), std::max(a, b)}]++;
            }
        for (const auto& [edge, uses] : edge_use)
            if (uses != 2) return fail("mesh is not watertight");
        const long euler = static_cast<long>(mesh.vertices.size()) -
                           static_cast<long>(edge_use.size()) +
                           static_cast<long>(mesh.faces.size());
        if (euler != 2) return fail("Euler characteristic " + std::to_string(euler));

        double mean_r = 0;
        for (const auto& v : mesh.vertices) mean_r += v.norm();
        mean_r /= static_cast<double>(mesh.vertices.size());
        if (std::abs(mean_r - radius) > 0.02 * radius)
            return fail("mean vertex radius " + std::to_string(mean_r));

        // geometry ignores the texture code bit-for-bit
        Rng rng(8);
        const FieldConfig fc = tiny_field_config();
        FieldParams params = FieldParams::init(fc, 99);
        Tensor z_s = rand_const(rng, {1, 3}, -1.0, 1.0);
        Tensor z_t1 = rand_const(rng, {1, 3}, -1.0, 1.0);
        Tensor z_t2 = rand_const(rng, {1, 3}, -1.0, 1.0);
        VoxelGrid g1 = sample_grid(params, fc, z_s, z_t1, {20, 20, 20}, grid.bounds_min,
                                   grid.bounds_max);
        VoxelGrid g2 = sample_grid(params, fc, z_s, z_t2, {20, 20, 20}, grid.bounds_min,
                                   grid.bounds_max);
        if (g1.values != g2.values) return fail("grid depends on the texture code");

        // vertex colors against the analytic oracle
        SyntheticObject obj;
        obj.radii = Eigen::Vector3d(radius, radius, radius);
        obj.exponent = 2.0;
        obj.albedo = Eigen::Vector3d(0.8, 0.3, 0.6);
        obj.color_grad = Eigen::Vector3d::Zero();
        obj.validate();
        FieldSampleFn oracle = [&](const Tensor& x, const Tensor& d) {
            std::vector<double> sv(x.rows()), cv(x.rows() * 3);
            for (std::size_t i = 0; i < x.rows(); ++i) {
                auto [sig, col] = oracle_density_color(
                    obj, Eigen::Vector3d(x(i, 0), x(i, 1), x(i, 2)), Eigen::Vector3d::Zero());
                sv[i] = sig;
                for (int k = 0; k < 3; ++k) cv[i * 3 + k] = col[k];
            }
            (void)d;
            return std::make_pair(Tensor::constant({x.rows(), 1}, std::move(sv)),
                                  Tensor::constant({x.rows(), 3}, std::move(cv)));
        };
        Mesh colored = color_vertices(mesh, oracle, grid.voxel_diagonal());
        double worst = 0;
        for (const auto& c : colored.colors)
            worst = std::max(worst, (c - obj.albedo).cwiseAbs().maxCoeff());
        char buf[96];
        std::snprintf(buf, sizeof buf, "mean radius %.4f, max color error %.3f", mean_r, worst);
        if (worst > 0.05) return fail(buf);
        return std::string(buf);
    });

    // ---- 9. metric self-tests ----
    criterion(9, "psnr/ssim/pose-error spot values and ssim identity", [] {
        Image a(8, 8);
        for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = (i % 7) / 7.0;
        if (psnr(a, a) != kPsnrInfinity) return fail("psnr of identical images not infinite");
        Image b = a;
        for (double& v : b.data) v += 0.1;  // mse 0.01 -> 20 dB
        if (std::abs(psnr(a, b) - 20.0) > 1e-12) return fail("20 dB spot value off");

        Rng rng(9);
        for (int i = 0; i < 50; ++i) {
            Image img(12, 12);
            for (double& v : img.data) v = rng.uniform(0.0, 1.0);
            if (std::abs(ssim(img, img) - 1.0) > 1e-12) return fail("ssim(a,a) != 1");
        }

        const Extrinsic e = rotation_from_pose(CameraPose::make(0.4, 0.2, 2.0));
        PoseError none = pose_error(e, e);
        if (none.rot_deg > 1e-9 || none.trans_rel > 1e-12) return fail("identity pose error");
        Extrinsic rot = e;
        rot.rot_cw =
            e.rot_cw * rodrigues({Eigen::Vector3d(0, 0, 1), 10 * std::numbers::pi / 180});
        if (std::abs(pose_error(rot, e).rot_deg - 10.0) > 1e-9)
            return fail("10 degree rotation error off");
        Extrinsic far = e;
        far.p *= 1.03;
        if (std::abs(pose_error(far, e).trans_rel - 0.03) > 1e-12)
            return fail("3% translation error off");
        return std::string();
    });

    // ---- 10. SRN-format round trip ----
    criterion(10, "SRN export/load round trip is lossless", [] {
        SceneDataset ds = generate_dataset(2, 3, 12, 55, 64);
        const std::filesystem::path root = std::filesystem::temp_directory_path() / "drf_acceptance_srn";
        std::filesystem::remove_all(root);
        export_srn_dataset(ds, root.string());
        SceneDataset back = load_srn_dataset(root.string());
        std::filesystem::remove_all(root);

        if (back.objects.size() != 2) return fail("object count changed");
        double worst_pose = 0;
        for (std::size_t o = 0; o < 2; ++o) {
            if (back.objects[o].views.size() != 3) return fail("view count changed");
            for (std::size_t v = 0; v < 3; ++v) {
                const View& x = ds.objects[o].views[v];
                const View& y = back.objects[o].views[v];
                worst_pose = std::max(
                    worst_pose, (x.pose.rot_cw - y.pose.rot_cw).cwiseAbs().maxCoeff());
                worst_pose =
                    std::max(worst_pose, (x.pose.p - y.pose.p).cwiseAbs().maxCoeff());
                for (std::size_t i = 0; i < x.image.data.size(); ++i)
                    if (y.image.data[i] != quantize8(x.image.data[i]) / 255.0)
                        return fail("image not bit-exact after 8-bit quantization");
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "max pose deviation %.1e", worst_pose);
        if (worst_pose >= 1e-12) return fail(buf);
        return std::string(buf);
    });

    if (g_failures > 0) {
        std::printf("%d criteria failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}

#include "drf/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "drf/metrics.hpp"

namespace drf {

void AdamW::add_group(const std::vector<Tensor>& params, const AdamWOptions& opts,
                      const std::string& name) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Slot s;
        s.param = params[i];
        s.opts = opts;
        s.name = name.empty() ? "param" + std::to_string(slots_.size())
                              : name + "." + std::to_string(i);
        slots_.push_back(std::move(s));
    }
}

void AdamW::step() {
    ++step_count_;
    for (auto& s : slots_) {
        auto node = s.param.node();
        if (node->grad.size() != node->value.size()) continue;  // untouched this batch
        if (s.m.empty()) {
            s.m.assign(node->value.size(), 0.0);
            s.v.assign(node->value.size(), 0.0);
        }
        for (const double g : node->grad)
            if (!std::isfinite(g))
                throw Error("optim: non-finite gradient in " + s.name);

        s.opts_step = s.opts_step + 1;
        const double bc1 = 1.0 - std::pow(s.opts.beta1, static_cast<double>(s.opts_step));
        const double bc2 = 1.0 - std::pow(s.opts.beta2, static_cast<double>(s.opts_step));
        for (std::size_t i = 0; i < node->value.size(); ++i) {
            const double g = node->grad[i];
            s.m[i] = s.opts.beta1 * s.m[i] + (1.0 - s.opts.beta1) * g;
            s.v[i] = s.opts.beta2 * s.v[i] + (1.0 - s.opts.beta2) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            // decoupled decay: the wd term never touches the moments
            node->value[i] -= lr_scale_ * s.opts.lr *
                              (mhat / (std::sqrt(vhat) + s.opts.eps) +
                               s.opts.weight_decay * node->value[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.param.node()->grad.clear();
}

Tensor train_loss(const Tensor& rendered, const Tensor& target, const Tensor& z_s,
                  const Tensor& z_t, double nu) {
    if (rendered.shape() != target.shape())
        throw Error("optim: rendered/target shape mismatch");
    if (nu <= 0) throw Error("optim: nu must be positive");
    Tensor photometric = sum(square(rendered - target));
    Tensor reg = scale(sum(square(z_s)) + sum(square(z_t)), 1.0 / (nu * nu));
    return photometric + reg;
}

void TrainConfig::validate() const {
    if (rays_per_batch < 1 || iterations < 0 || n_samples < 2)
        throw Error("optim: invalid train config counts");
    if (lr_net <= 0 || lr_latent <= 0 || nu <= 0)
        throw Error("optim: learning rates and nu must be positive");
}

void InferConfig::validate() const {
    if (iterations < 1) throw Error("optim: inference needs iterations >= 1");
    if (lr_code <= 0 || lr_phi <= 0 || lr_theta <= 0 || lr_rho <= 0 || nu <= 0)
        throw Error("optim: learning rates and nu must be positive");
}

namespace {

double batch_psnr(double photometric_loss, std::size_t n_values) {
    const double mse = photometric_loss / static_cast<double>(n_values);
    return mse > 0 ? -10.0 * std::log10(mse) : kPsnrInfinity;
}

}  // namespace

Checkpoint train(const SceneDataset& dataset, const TrainConfig& cfg,
                 const FieldConfig& fcfg, const TrainLogFn& log, const Checkpoint* resume) {
    cfg.validate();
    fcfg.validate();
    if (dataset.objects.empty()) throw Error("optim: empty dataset");

    Checkpoint ck;
    int start_iter = 0;
    if (resume) {
        ck = *resume;
        start_iter = ck.meta.value("iterations", 0);
    } else {
        ck.config = fcfg;
        ck.params = FieldParams::init(fcfg, cfg.seed);
        ck.latents = LatentTable::init(dataset.objects.size(), fcfg.latent_dim, cfg.seed + 1);
    }

    RenderConfig rcfg = dataset.default_render_config(cfg.n_samples);
    rcfg.stratified = cfg.stratified;

    AdamW opt;
    AdamWOptions net_opts{cfg.lr_net, 0.9, 0.999, 1e-8, cfg.weight_decay_net};
    AdamWOptions code_opts{cfg.lr_latent, 0.9, 0.999, 1e-8, 0.0};
    opt.add_group(ck.params.all_parameters(), net_opts, "net");
    opt.add_group(ck.latents.shape_codes, code_opts, "z_s");
    opt.add_group(ck.latents.texture_codes, code_opts, "z_t");

    Rng rng(cfg.seed + 2 + static_cast<std::uint64_t>(start_iter));
    const auto t0 = std::chrono::steady_clock::now();

    for (int it = 0; it < cfg.iterations; ++it) {
        const std::size_t obj_idx = rng.next_u64() % dataset.objects.size();
        const auto& obj = dataset.objects[obj_idx];
        const auto& view = obj.views[rng.next_u64() % obj.views.size()];
        const auto& K = view.intrinsics;

        std::vector<std::pair<int, int>> pixels(cfg.rays_per_batch);
        std::vector<double> target(static_cast<std::size_t>(cfg.rays_per_batch) * 3);
        for (int i = 0; i < cfg.rays_per_batch; ++i) {
            const int r = static_cast<int>(rng.next_u64() % K.height);
            const int c = static_cast<int>(rng.next_u64() % K.width);
            pixels[i] = {r, c};
            for (int ch = 0; ch < 3; ++ch)
                target[static_cast<std::size_t>(i) * 3 + ch] = view.image.at(r, c, ch);
        }

        RayBatch rays = generate_rays(view.pose, K, pixels);
        Tensor ts = sample_ts(pixels.size(), rcfg, &rng);
        Tensor pos = ray_positions(rays, ts);
        Tensor dirs = ray_sample_dirs(rays, ts.cols());
        FieldOutput fo = eval_field(ck.params, fcfg, ck.latents.shape_codes[obj_idx],
                                    ck.latents.texture_codes[obj_idx], pos, dirs);
        RenderResult res = composite(reshape(fo.sigma, ts.shape()), fo.rgb, ts, rcfg);
        Tensor target_t = Tensor::constant({pixels.size(), 3}, std::move(target));
        Tensor loss = train_loss(res.rgb, target_t, ck.latents.shape_codes[obj_idx],
                                 ck.latents.texture_codes[obj_idx], cfg.nu);
        if (!std::isfinite(loss.scalar()))
            throw Error("optim: non-finite loss at iteration " + std::to_string(start_iter + it));

        if (cfg.cosine_decay)
            opt.set_lr_scale(0.5 * (1.0 + std::cos(std::numbers::pi * it /
                                                   std::max(1, cfg.iterations))));
        opt.zero_grad();
        backward(loss);
        opt.step();

        if (log) {
            Tensor photo = sum(square(res.rgb - target_t));
            TrainStats st;
            st.iteration = start_iter + it + 1;
            st.loss = loss.scalar();
            st.psnr = batch_psnr(photo.scalar(), target_t.numel());
            st.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log(st);
        }
    }

    ck.meta["iterations"] = start_iter + cfg.iterations;
    ck.meta["near"] = rcfg.near;
    ck.meta["far"] = rcfg.far;
    ck.meta["mean_rho"] = dataset.meta.mean_rho;
    ck.meta["scene_radius"] = dataset.meta.scene_radius;
    ck.meta["background"] = dataset.meta.background;
    ck.meta["n_objects"] = dataset.objects.size();
    return ck;
}

InvertResult invert(const std::vector<Image>& images, const std::vector<Intrinsics>& Ks,
                    const std::vector<CameraPose>& init_poses, const Checkpoint& ckpt,
                    const RenderConfig& rcfg, const InferConfig& cfg,
                    const InvertCallback& callback, const Tensor* init_z_s,
                    const Tensor* init_z_t) {
    cfg.validate();
    rcfg.validate();
    if (images.empty() || images.size() != Ks.size() || images.size() != init_poses.size())
        throw Error("optim: invert needs matching images/intrinsics/poses");
    for (std::size_t v = 0; v < images.size(); ++v)
        if (images[v].width != Ks[v].width || images[v].height != Ks[v].height)
            throw Error("optim: image " + std::to_string(v) + " does not match its intrinsics");

    InvertResult out;
    const std::size_t dim = static_cast<std::size_t>(ckpt.config.latent_dim);
    out.z_s = Tensor::leaf({1, dim}, init_z_s ? init_z_s->value() : ckpt.latents.mean_shape().value());
    out.z_t = Tensor::leaf({1, dim}, init_z_t ? init_z_t->value() : ckpt.latents.mean_texture().value());
    if (out.z_s.numel() != dim || out.z_t.numel() != dim)
        throw Error("optim: initial codes do not match the checkpoint latent dim");
    for (const auto& p : init_poses)
        out.poses.push_back(CameraPose::make(p.azimuth(), p.elevation(), p.distance(), true));

    AdamW opt;
    opt.add_group({out.z_s, out.z_t}, {cfg.lr_code, 0.9, 0.999, 1e-8, 0.0}, "code");
    if (cfg.optimize_pose) {
        for (auto& p : out.poses) {
            opt.add_group({p.phi}, {cfg.lr_phi, 0.9, 0.999, 1e-8, 0.0}, "phi");
            opt.add_group({p.theta}, {cfg.lr_theta, 0.9, 0.999, 1e-8, 0.0}, "theta");
            opt.add_group({p.log_rho}, {cfg.lr_rho, 0.9, 0.999, 1e-8, 0.0}, "rho");
        }
    }

    // full-image ray batches, all pixels of every view
    std::vector<std::vector<std::pair<int, int>>> pixels(images.size());
    std::vector<Tensor> targets;
    for (std::size_t v = 0; v < images.size(); ++v) {
        std::vector<double> t;
        t.reserve(images[v].pixels() * 3);
        for (int r = 0; r < images[v].height; ++r)
            for (int c = 0; c < images[v].width; ++c) {
                pixels[v].emplace_back(r, c);
                for (int ch = 0; ch < 3; ++ch) t.push_back(images[v].at(r, c, ch));
            }
        targets.push_back(Tensor::constant({images[v].pixels(), 3}, std::move(t)));
    }

    Rng rng(cfg.seed);
    RenderConfig rc = rcfg;
    rc.n_samples = cfg.n_samples;

    auto eval_loss = [&](bool with_grad) {
        Tensor total;
        for (std::size_t v = 0; v < images.size(); ++v) {
            RayBatch rays = generate_rays(out.poses[v], Ks[v], pixels[v]);
            Tensor ts = sample_ts(pixels[v].size(), rc, rc.stratified ? &rng : nullptr);
            Tensor pos = ray_positions(rays, ts);
            Tensor dirs = ray_sample_dirs(rays, ts.cols());
            FieldOutput fo = eval_field(ckpt.params, ckpt.config, out.z_s, out.z_t, pos, dirs);
            RenderResult res = composite(reshape(fo.sigma, ts.shape()), fo.rgb, ts, rc);
            Tensor photo = sum(square(res.rgb - targets[v]));
            total = total.defined() ? total + photo : photo;
        }
        Tensor reg = scale(sum(square(out.z_s)) + sum(square(out.z_t)),
                           1.0 / (cfg.nu * cfg.nu));
        Tensor loss = total + reg;
        if (with_grad) {
            opt.zero_grad();
            backward(loss);
        }
        return loss.scalar();
    };

    auto record = [&](int iter, double loss, double best) {
        InvertStats st;
        st.iteration = iter;
        st.loss = loss;
        st.best_loss = best;
        const double two_pi = 2.0 * std::numbers::pi;
        st.phi = std::fmod(std::fmod(out.poses[0].azimuth(), two_pi) + two_pi, two_pi);
        st.theta = out.poses[0].elevation();
        st.rho = out.poses[0].distance();
        out.trace.push_back(st);
        if (callback) callback(st, out);
    };

    double initial = eval_loss(false);
    double best = initial;
    record(0, initial, best);

    int bad_streak = 0;
    for (int it = 1; it <= cfg.iterations; ++it) {
        const double loss = eval_loss(true);
        if (cfg.cosine_decay)
            opt.set_lr_scale(0.5 * (1.0 + std::cos(std::numbers::pi * (it - 1) /
                                                   std::max(1, cfg.iterations))));
        opt.step();
        for (auto& p : out.poses) p.clamp_elevation();

        best = std::min(best, loss);
        record(it, loss, best);
        if (loss > 10.0 * initial) {
            if (++bad_streak >= 50) {
                out.diverged = true;
                break;
            }
        } else {
            bad_streak = 0;
        }
    }
    return out;
}

Tensor interpolate_codes(const Tensor& a, const Tensor& b, double alpha) {
    if (a.shape() != b.shape()) throw Error("optim: interpolate_codes dim mismatch");
    if (alpha < 0.0 || alpha > 1.0)
        throw Error("optim: interpolation alpha must lie in [0,1]");
    return scale(a, 1.0 - alpha) + scale(b, alpha);
}

}  // namespace drf

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drf/data.hpp"
#include "drf/field.hpp"
#include "drf/render.hpp"
#include "drf/tensor.hpp"

namespace drf {

struct AdamWOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay and per-group hyperparameters.
/// Parameters whose grad buffer is empty at step() time are skipped, so
/// auto-decoder codes of objects absent from a batch keep their moments.
class AdamW {
public:
    void add_group(const std::vector<Tensor>& params, const AdamWOptions& opts,
                   const std::string& name = "");

    /// One update. Throws on non-finite gradients, naming the parameter.
    void step();
    void zero_grad();
    long step_count() const { return step_count_; }
    void set_step_count(long n) { step_count_ = n; }

    /// Multiplies every group's base lr at step time (cosine schedules etc).
    void set_lr_scale(double s) { lr_scale_ = s; }

private:
    struct Slot {
        Tensor param;
        std::vector<double> m, v;
        AdamWOptions opts;
        std::string name;
        long opts_step = 0;  // per-parameter update count for bias correction
    };
    std::vector<Slot> slots_;
    long step_count_ = 0;
    double lr_scale_ = 1.0;
};

/// Eq-style training objective: sum of squared per-ray color errors plus
/// (1/nu^2)(|z_s|^2 + |z_t|^2).
Tensor train_loss(const Tensor& rendered, const Tensor& target, const Tensor& z_s,
                  const Tensor& z_t, double nu);

struct TrainConfig {
    int rays_per_batch = 128;
    double lr_net = 1e-4;
    double lr_latent = 1e-3;
    double weight_decay_net = 1e-2;
    double nu = 100.0;
    int iterations = 2000;
    std::uint64_t seed = 0;
    int n_samples = 32;       // per ray
    bool stratified = true;
    bool cosine_decay = false;

    void validate() const;
};

struct TrainStats {
    int iteration = 0;
    double loss = 0;
    double psnr = 0;  // of the sampled ray batch
    double wall_seconds = 0;
};

using TrainLogFn = std::function<void(const TrainStats&)>;

/// Jointly optimizes network weights and every per-object code pair.
/// Deterministic given (dataset, cfg, fcfg): same seed, bit-identical
/// checkpoint. `resume` continues from an existing checkpoint (step counter
/// included).
Checkpoint train(const SceneDataset& dataset, const TrainConfig& cfg,
                 const FieldConfig& fcfg, const TrainLogFn& log = nullptr,
                 const Checkpoint* resume = nullptr);

struct InferConfig {
    double lr_code = 1e-2;
    double lr_phi = 1e-1;
    double lr_theta = 1e-1;
    double lr_rho = 1e-2;
    int iterations = 299;
    double nu = 100.0;
    int n_samples = 32;
    std::uint64_t seed = 0;
    bool optimize_pose = true;   // false = GT-pose mode, poses stay fixed
    bool cosine_decay = true;    // anneal step sizes to zero over the run

    void validate() const;
};

struct InvertStats {
    int iteration = 0;
    double loss = 0;
    double best_loss = 0;  // monotone (running minimum) reporting
    double phi = 0, theta = 0, rho = 0;
};

struct InvertResult {
    Tensor z_s, z_t;
    std::vector<CameraPose> poses;  // one per input view
    std::vector<InvertStats> trace;
    bool diverged = false;
};

/// Per-iteration hook; invoked after each optimizer step (and once at
/// iteration 0 before any step).
using InvertCallback = std::function<void(const InvertStats&, const InvertResult&)>;

/// Test-time inversion: freezes the checkpoint weights and minimizes the
/// photometric + code-prior loss over (z_s, z_t) and, unless disabled, each
/// view's (phi, theta, rho). Codes start at the mean of the trained tables
/// unless explicit initial codes are supplied. Views share codes; each view
/// owns its pose.
InvertResult invert(const std::vector<Image>& images, const std::vector<Intrinsics>& Ks,
                    const std::vector<CameraPose>& init_poses, const Checkpoint& ckpt,
                    const RenderConfig& rcfg, const InferConfig& cfg,
                    const InvertCallback& callback = nullptr,
                    const Tensor* init_z_s = nullptr, const Tensor* init_z_t = nullptr);

/// (1-alpha) * a + alpha * b.
Tensor interpolate_codes(const Tensor& a, const Tensor& b, double alpha);

}  // namespace drf

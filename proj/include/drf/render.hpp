#pragma once

#include <vector>

#include "drf/camera.hpp"
#include "drf/field.hpp"
#include "drf/image.hpp"
#include "drf/rng.hpp"
#include "drf/tensor.hpp"

namespace drf {

struct RenderConfig {
    int n_samples = 64;
    double near = 0.5;
    double far = 3.5;
    bool stratified = false;
    bool white_background = false;
    int importance_samples = 0;  // 0 disables resampling

    void validate() const;
};

/// Per-ray compositing output. weights[i] = T_i * (1 - exp(-sigma_i delta_i))
/// form a sub-probability distribution per ray; transmittance is the final T.
struct RenderResult {
    Tensor rgb;            // {R,3}
    Tensor weights;        // {R,S}
    Tensor transmittance;  // {R,1}
};

/// Sample depths for n_rays rays: n_samples values in [near, far) per ray,
/// left bin edges when stratified is off, uniform jitter inside each bin when
/// on. Returned as a constant {R,S} tensor.
Tensor sample_ts(std::size_t n_rays, const RenderConfig& cfg, Rng* rng);

/// positions = origin + t * direction, flattened to {R*S,3} in ray-major
/// order; differentiable through rays and ts.
Tensor ray_positions(const RayBatch& rays, const Tensor& ts);

/// Per-sample view directions, each ray's direction repeated per sample
/// ({R*S,3}).
Tensor ray_sample_dirs(const RayBatch& rays, std::size_t n_samples);

/// Alpha compositing: rgb = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i with
/// T_1 = 1, delta_i = t_{i+1} - t_i and the last delta closed at cfg.far.
/// sigmas {R,S}, colors {R*S,3}, ts {R,S}; differentiable in all three.
RenderResult composite(const Tensor& sigmas, const Tensor& colors, const Tensor& ts,
                       const RenderConfig& cfg);

/// Inverse-CDF draws from the piecewise-constant distribution induced by
/// `weights` over the bins [ts_i, ts_{i+1}) (last bin closed at `far`),
/// merged and sorted with the original ts. All-zero weights fall back to a
/// uniform distribution.
std::vector<double> importance_resample(const std::vector<double>& weights,
                                        const std::vector<double>& ts, double far,
                                        int n_extra, Rng& rng);

/// Renders a full image, rays processed in chunks of chunk_size; results are
/// independent of the chunk size. No gradients are retained.
Image render_image(const FieldParams& params, const FieldConfig& fcfg,
                   const Tensor& z_s, const Tensor& z_t, const Extrinsic& pose,
                   const Intrinsics& K, const RenderConfig& cfg,
                   std::size_t chunk_size = 1024, int threads = 1);

}  // namespace drf

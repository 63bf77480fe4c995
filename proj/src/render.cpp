#include "drf/render.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace drf {

void RenderConfig::validate() const {
    if (n_samples < 2) throw Error("render: need at least 2 samples per ray");
    if (!(0.0 < near && near < far))
        throw Error("render: need 0 < near < far, got near=" + std::to_string(near) +
                    " far=" + std::to_string(far));
    if (importance_samples < 0) throw Error("render: importance_samples must be >= 0");
}

Tensor sample_ts(std::size_t n_rays, const RenderConfig& cfg, Rng* rng) {
    cfg.validate();
    if (cfg.stratified && !rng) throw Error("render: stratified sampling needs an rng");
    const std::size_t s = static_cast<std::size_t>(cfg.n_samples);
    const double bin = (cfg.far - cfg.near) / static_cast<double>(s);
    std::vector<double> ts(n_rays * s);
    for (std::size_t r = 0; r < n_rays; ++r)
        for (std::size_t i = 0; i < s; ++i) {
            const double jitter = cfg.stratified ? rng->uniform() : 0.0;
            ts[r * s + i] = cfg.near + (static_cast<double>(i) + jitter) * bin;
        }
    return Tensor::constant({n_rays, s}, std::move(ts));
}

Tensor ray_positions(const RayBatch& rays, const Tensor& ts) {
    const std::size_t s = ts.cols();
    Tensor t_col = reshape(ts, {ts.rows() * s, 1});
    return repeat_rows(rays.origins, s) + t_col * repeat_rows(rays.directions, s);
}

Tensor ray_sample_dirs(const RayBatch& rays, std::size_t n_samples) {
    return repeat_rows(rays.directions, n_samples);
}

RenderResult composite(const Tensor& sigmas, const Tensor& colors, const Tensor& ts,
                       const RenderConfig& cfg) {
    cfg.validate();
    const std::size_t r = sigmas.rows(), s = sigmas.cols();
    if (ts.rows() != r || ts.cols() != s || colors.rows() != r * s || colors.cols() != 3)
        throw Error("render: composite length mismatch, sigmas {" + std::to_string(r) + "," +
                    std::to_string(s) + "} vs ts {" + std::to_string(ts.rows()) + "," +
                    std::to_string(ts.cols()) + "} vs colors {" + std::to_string(colors.rows()) +
                    "," + std::to_string(colors.cols()) + "}");
    if (s < 2) throw Error("render: composite needs at least 2 samples");

    // delta_i = t_{i+1} - t_i; the last interval is closed at the far bound
    Tensor interior = slice_cols(ts, 1, s - 1) - slice_cols(ts, 0, s - 1);
    Tensor last = add_scalar(neg(slice_cols(ts, s - 1, 1)), cfg.far);
    Tensor delta = concat_cols({interior, last});

    Tensor tau = sigmas * delta;
    Tensor trans = exp(neg(cumsum_exclusive(tau)));        // T_i, T_1 = 1
    Tensor alpha = add_scalar(neg(exp(neg(tau))), 1.0);    // 1 - exp(-sigma delta)
    RenderResult out;
    out.weights = trans * alpha;
    out.transmittance = exp(neg(row_sum(tau)));

    std::vector<Tensor> channels;
    for (std::size_t k = 0; k < 3; ++k) {
        Tensor ck = reshape(slice_cols(colors, k, 1), {r, s});
        channels.push_back(row_sum(out.weights * ck));
    }
    out.rgb = concat_cols(channels);
    if (cfg.white_background) out.rgb = out.rgb + out.transmittance;
    return out;
}

std::vector<double> importance_resample(const std::vector<double>& weights,
                                        const std::vector<double>& ts, double far,
                                        int n_extra, Rng& rng) {
    if (n_extra < 1) throw Error("render: importance_resample needs n_extra >= 1");
    if (weights.size() != ts.size() || ts.empty())
        throw Error("render: importance_resample weight/ts length mismatch");
    const std::size_t s = ts.size();

    std::vector<double> cdf(s + 1, 0.0);
    for (std::size_t i = 0; i < s; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0);
    const double total = cdf.back();
    std::vector<double> edges(ts);
    edges.push_back(far);

    std::vector<double> merged(ts);
    for (int k = 0; k < n_extra; ++k) {
        const double u = rng.uniform();
        double t;
        if (total <= 0.0) {
            t = ts.front() + u * (far - ts.front());
        } else {
            const double target = u * total;
            const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
            std::size_t bin = std::min<std::size_t>(it - cdf.begin() - 1, s - 1);
            const double span = cdf[bin + 1] - cdf[bin];
            const double frac = span > 0.0 ? (target - cdf[bin]) / span : 0.5;
            t = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
        }
        merged.push_back(t);
    }
    std::sort(merged.begin(), merged.end());
    return merged;
}

namespace {

// One chunk of rays, forward only. Results depend only on the pixel list.
void render_chunk(const FieldParams& params, const FieldConfig& fcfg,
                  const Tensor& z_s, const Tensor& z_t, const Extrinsic& pose,
                  const Intrinsics& K, const RenderConfig& cfg,
                  const std::vector<std::pair<int, int>>& pixels, Image& out) {
    RayBatch rays = generate_rays(pose, K, pixels);
    const std::size_t nr = pixels.size();
    Tensor ts = sample_ts(nr, cfg, nullptr);

    if (cfg.importance_samples > 0) {
        // coarse pass -> per-ray importance draws seeded by pixel identity,
        // keeping the result independent of chunking
        Tensor pos = ray_positions(rays, ts);
        Tensor dirs = ray_sample_dirs(rays, ts.cols());
        FieldOutput fo = eval_field(params, fcfg, z_s, z_t, pos, dirs);
        RenderResult coarse = composite(reshape(fo.sigma, ts.shape()), fo.rgb, ts, cfg);
        const std::size_t s = ts.cols();
        const std::size_t s_fine = s + static_cast<std::size_t>(cfg.importance_samples);
        std::vector<double> fine(nr * s_fine);
        for (std::size_t i = 0; i < nr; ++i) {
            std::vector<double> w(coarse.weights.value().begin() + i * s,
                                  coarse.weights.value().begin() + (i + 1) * s);
            std::vector<double> t0(ts.value().begin() + i * s, ts.value().begin() + (i + 1) * s);
            Rng ray_rng(0x5eedu ^ (static_cast<std::uint64_t>(pixels[i].first) << 32) ^
                        static_cast<std::uint64_t>(pixels[i].second));
            auto merged = importance_resample(w, t0, cfg.far, cfg.importance_samples, ray_rng);
            std::copy(merged.begin(), merged.end(), fine.begin() + i * s_fine);
        }
        ts = Tensor::constant({nr, s_fine}, std::move(fine));
    }

    Tensor pos = ray_positions(rays, ts);
    Tensor dirs = ray_sample_dirs(rays, ts.cols());
    FieldOutput fo = eval_field(params, fcfg, z_s, z_t, pos, dirs);
    RenderResult res = composite(reshape(fo.sigma, ts.shape()), fo.rgb, ts, cfg);
    for (std::size_t i = 0; i < nr; ++i)
        for (int ch = 0; ch < 3; ++ch)
            out.at(pixels[i].first, pixels[i].second, ch) = res.rgb(i, ch);
}

}  // namespace

Image render_image(const FieldParams& params, const FieldConfig& fcfg,
                   const Tensor& z_s, const Tensor& z_t, const Extrinsic& pose,
                   const Intrinsics& K, const RenderConfig& cfg,
                   std::size_t chunk_size, int threads) {
    cfg.validate();
    if (chunk_size == 0) throw Error("render: chunk_size must be positive");
    Image img(K.width, K.height);

    std::vector<std::vector<std::pair<int, int>>> chunks;
    std::vector<std::pair<int, int>> cur;
    for (int r = 0; r < K.height; ++r)
        for (int c = 0; c < K.width; ++c) {
            cur.emplace_back(r, c);
            if (cur.size() == chunk_size) {
                chunks.push_back(std::move(cur));
                cur.clear();
            }
        }
    if (!cur.empty()) chunks.push_back(std::move(cur));

    const int nthreads = std::max(1, threads);
    if (nthreads == 1) {
        for (const auto& chunk : chunks)
            render_chunk(params, fcfg, z_s, z_t, pose, K, cfg, chunk, img);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < chunks.size(); i = next++)
                render_chunk(params, fcfg, z_s, z_t, pose, K, cfg, chunks[i], img);
        };
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return img;
}

}  // namespace drf

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "common.hpp"
#include "gradcheck.hpp"
#include "drf/render.hpp"

using namespace drf;
using namespace drf::testutil;

TEST_SUITE("render") {

TEST_CASE("uniform depth samples are left bin edges") {
    RenderConfig cfg;
    cfg.n_samples = 4;
    cfg.near = 1.0;
    cfg.far = 3.0;
    Tensor ts = sample_ts(2, cfg, nullptr);
    const std::vector<double> expect = {1.0, 1.5, 2.0, 2.5, 1.0, 1.5, 2.0, 2.5};
    CHECK(ts.value() == expect);
}

TEST_CASE("stratified samples stay inside their bins") {
    RenderConfig cfg;
    cfg.n_samples = 8;
    cfg.near = 0.5;
    cfg.far = 2.5;
    cfg.stratified = true;
    Rng rng(1);
    Tensor ts = sample_ts(10, cfg, &rng);
    const double bin = 0.25;
    for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t j = 0; j < 8; ++j) {
            const double t = ts(r, j);
            CHECK(t >= 0.5 + j * bin);
            CHECK(t < 0.5 + (j + 1) * bin);
        }
    CHECK_THROWS_AS(sample_ts(2, cfg, nullptr), Error);
}

TEST_CASE("two-sample closed form") {
    // optical depth ln2 in both intervals: w = (1/2, 1/4), T_final = 1/4
    RenderConfig cfg;
    cfg.n_samples = 2;
    cfg.near = 1.0;
    cfg.far = 2.0;
    const double s = 2.0 * std::log(2.0);  // sigma * delta = ln 2 with delta = 0.5
    Tensor sigmas = Tensor::constant({1, 2}, {s, s});
    Tensor colors = Tensor::constant({2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor ts = Tensor::constant({1, 2}, {1.0, 1.5});
    RenderResult res = composite(sigmas, colors, ts, cfg);
    CHECK(std::abs(res.weights(0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(res.weights(0, 1) - 0.25) < 1e-12);
    CHECK(std::abs(res.rgb(0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(res.rgb(0, 1) - 0.25) < 1e-12);
    CHECK(std::abs(res.rgb(0, 2)) < 1e-12);
    CHECK(std::abs(res.transmittance(0, 0) - 0.25) < 1e-12);
}

TEST_CASE("weights are a sub-probability distribution") {
    Rng rng(3);
    RenderConfig cfg;
    cfg.n_samples = 16;
    cfg.near = 0.5;
    cfg.far = 3.5;
    const std::size_t r = 500, s = 16;
    Tensor sigmas = rand_leaf(rng, {r, s}, 0.0, 5.0);
    Tensor colors = rand_const(rng, {r * s, 3}, 0.0, 1.0);
    Tensor ts = sample_ts(r, cfg, nullptr);
    RenderResult res = composite(sigmas, colors, ts, cfg);
    for (std::size_t i = 0; i < r; ++i) {
        double total = 0;
        for (std::size_t j = 0; j < s; ++j) {
            const double w = res.weights(i, j);
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(total <= 1.0 + 1e-12);
        CHECK(std::abs(total + res.transmittance(i, 0) - 1.0) < 1e-12);
    }
}

TEST_CASE("zero density renders the background") {
    RenderConfig cfg;
    cfg.n_samples = 4;
    cfg.near = 1.0;
    cfg.far = 3.0;
    Rng rng(4);
    Tensor sigmas = Tensor::constant({1, 4}, {0, 0, 0, 0});
    Tensor colors = rand_const(rng, {4, 3}, 0.0, 1.0);
    Tensor ts = sample_ts(1, cfg, nullptr);
    RenderResult black = composite(sigmas, colors, ts, cfg);
    for (int k = 0; k < 3; ++k) CHECK(black.rgb(0, k) == 0.0);
    CHECK(black.transmittance(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    cfg.white_background = true;
    RenderResult white = composite(sigmas, colors, ts, cfg);
    for (int k = 0; k < 3; ++k) CHECK(white.rgb(0, k) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("a zero-density sample does not change the color") {
    RenderConfig cfg;
    cfg.n_samples = 3;
    cfg.near = 1.0;
    cfg.far = 3.0;
    Tensor sigmas = Tensor::constant({1, 3}, {1.2, 0.7, 0.0});
    Tensor colors = Tensor::constant({3, 3}, {0.8, 0.2, 0.1, 0.3, 0.9, 0.4, 0.5, 0.5, 0.5});
    Tensor ts = Tensor::constant({1, 3}, {1.0, 1.8, 2.6});
    RenderResult a = composite(sigmas, colors, ts, cfg);

    // inject a zero-density sample mid-ray
    cfg.n_samples = 4;
    Tensor sigmas2 = Tensor::constant({1, 4}, {1.2, 0.0, 0.7, 0.0});
    Tensor colors2 = Tensor::constant(
        {4, 3}, {0.8, 0.2, 0.1, 0.6, 0.6, 0.6, 0.3, 0.9, 0.4, 0.5, 0.5, 0.5});
    Tensor ts2 = Tensor::constant({1, 4}, {1.0, 1.8, 1.8, 2.6});
    RenderResult b = composite(sigmas2, colors2, ts2, cfg);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(a.rgb(0, k) - b.rgb(0, k)) < 1e-12);
}

TEST_CASE("composite gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed)
        CHECK(composite_grad_suite(seed).max_rel < 1e-4);
}

TEST_CASE("full-pipeline pose gradients") {
    for (std::uint64_t seed = 0; seed < 3; ++seed)
        CHECK(photometric_grad_suite(seed).max_rel < 1e-3);
}

TEST_CASE("ray position and direction expansion") {
    RayBatch rays;
    rays.origins = Tensor::constant({1, 3}, {0, 0, 4});
    rays.directions = Tensor::constant({1, 3}, {0, 0, -1});
    Tensor ts = Tensor::constant({1, 2}, {2.0, 3.0});
    Tensor pos = ray_positions(rays, ts);
    CHECK(pos.shape() == std::vector<std::size_t>{2, 3});
    CHECK(pos(0, 2) == 2.0);
    CHECK(pos(1, 2) == 1.0);
    Tensor dirs = ray_sample_dirs(rays, 2);
    CHECK(dirs(0, 2) == -1.0);
    CHECK(dirs(1, 2) == -1.0);
}

TEST_CASE("importance resampling follows the weights") {
    Rng rng(9);
    std::vector<double> ts = {1.0, 1.5, 2.0, 2.5};
    std::vector<double> w = {0.0, 0.9, 0.0, 0.0};  // all mass in [1.5, 2.0)
    std::vector<double> merged = importance_resample(w, ts, 3.0, 64, rng);
    CHECK(merged.size() == 68);
    CHECK(std::is_sorted(merged.begin(), merged.end()));
    int inside = 0;
    for (double t : merged)
        if (t >= 1.5 && t < 2.0) ++inside;
    CHECK(inside >= 64);  // the 64 extras plus the original edge

    // zero weights: uniform fallback over [near edge, far)
    std::vector<double> z = {0, 0, 0, 0};
    Rng rng2(9);
    std::vector<double> uni = importance_resample(z, ts, 3.0, 64, rng2);
    CHECK(uni.size() == 68);
    int upper = 0;
    for (double t : uni)
        if (t >= 2.0) ++upper;
    CHECK(upper > 16);  // spread over the whole range, not pinned to one bin
}

TEST_CASE("render_image is chunk and thread invariant") {
    Rng rng(12);
    FieldConfig cfg = tiny_field_config();
    FieldParams params = FieldParams::init(cfg, 99);
    Tensor z_s = rand_const(rng, {1, (std::size_t)cfg.latent_dim}, -0.5, 0.5);
    Tensor z_t = rand_const(rng, {1, (std::size_t)cfg.latent_dim}, -0.5, 0.5);
    Extrinsic pose = rotation_from_pose(CameraPose::make(0.4, 0.3, 2.0));
    Intrinsics K;
    K.width = K.height = 6;
    K.fx = K.fy = 6.6;
    K.cx = K.cy = 2.5;
    RenderConfig rcfg;
    rcfg.n_samples = 6;
    rcfg.near = 1.0;
    rcfg.far = 3.0;
    rcfg.importance_samples = 4;

    Image a = render_image(params, cfg, z_s, z_t, pose, K, rcfg, 1024, 1);
    Image b = render_image(params, cfg, z_s, z_t, pose, K, rcfg, 5, 1);
    Image c = render_image(params, cfg, z_s, z_t, pose, K, rcfg, 7, 2);
    CHECK(a.data == b.data);
    CHECK(a.data == c.data);
}

TEST_CASE("config validation") {
    RenderConfig cfg;
    cfg.near = 2.0;
    cfg.far = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.near = 0.5;
    cfg.far = 2.0;
    cfg.n_samples = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

}  // TEST_SUITE

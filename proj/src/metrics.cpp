#include "drf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drf/error.hpp"

namespace drf {

namespace {
void check_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw Error("metrics: image shape mismatch " + std::to_string(a.width) + "x" +
                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height));
}
}  // namespace

double psnr(const Image& a, const Image& b) {
    check_same_shape(a, b);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrInfinity;
    return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b);
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (K1 L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    if (a.width < kWin || a.height < kWin)
        throw Error("metrics: image smaller than the 11x11 SSIM window");

    auto luma = [](const Image& img) {
        std::vector<double> y(img.pixels());
        for (int r = 0; r < img.height; ++r)
            for (int c = 0; c < img.width; ++c)
                y[static_cast<std::size_t>(r) * img.width + c] =
                    0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
        return y;
    };
    const std::vector<double> ya = luma(a), yb = luma(b);

    double kernel[kWin];
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        ksum += kernel[i];
    }
    for (auto& k : kernel) k /= ksum;

    const int w = a.width, h = a.height;
    // valid-window mean SSIM, separable Gaussian weights
    auto windowed = [&](const std::vector<double>& img, int r0, int c0) {
        double m = 0.0;
        for (int i = 0; i < kWin; ++i) {
            double row = 0.0;
            for (int j = 0; j < kWin; ++j)
                row += kernel[j] * img[static_cast<std::size_t>(r0 + i) * w + c0 + j];
            m += kernel[i] * row;
        }
        return m;
    };
    auto windowed2 = [&](const std::vector<double>& x, const std::vector<double>& y,
                         int r0, int c0) {
        double m = 0.0;
        for (int i = 0; i < kWin; ++i) {
            double row = 0.0;
            for (int j = 0; j < kWin; ++j) {
                const std::size_t idx = static_cast<std::size_t>(r0 + i) * w + c0 + j;
                row += kernel[j] * x[idx] * y[idx];
            }
            m += kernel[i] * row;
        }
        return m;
    };

    double total = 0.0;
    std::size_t count = 0;
    for (int r0 = 0; r0 + kWin <= h; ++r0)
        for (int c0 = 0; c0 + kWin <= w; ++c0) {
            const double mu_a = windowed(ya, r0, c0);
            const double mu_b = windowed(yb, r0, c0);
            const double var_a = windowed2(ya, ya, r0, c0) - mu_a * mu_a;
            const double var_b = windowed2(yb, yb, r0, c0) - mu_b * mu_b;
            const double cov = windowed2(ya, yb, r0, c0) - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
            const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
            total += num / den;
            ++count;
        }
    return total / static_cast<double>(count);
}

PoseError pose_error(const Extrinsic& est, const Extrinsic& gt) {
    est.validate();
    gt.validate();
    const double tr = (est.rot_cw.transpose() * gt.rot_cw).trace();
    const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    PoseError e;
    e.rot_deg = std::acos(c) * 180.0 / std::numbers::pi;
    const double gt_norm = gt.p.norm();
    e.trans_rel = gt_norm > 0 ? (est.p - gt.p).norm() / gt_norm : (est.p - gt.p).norm();
    return e;
}

PosePartition outlier_filter(const std::vector<PoseError>& errors) {
    PosePartition p;
    std::size_t r5 = 0, r10 = 0, t3 = 0, t5 = 0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const auto& e = errors[i];
        if (e.rot_deg <= 5.0) ++r5;
        if (e.rot_deg <= 10.0) ++r10;
        if (e.trans_rel <= 0.03) ++t3;
        if (e.trans_rel <= 0.05) ++t5;
        if (e.rot_deg > 5.0 || e.trans_rel > 0.03)
            p.outliers.push_back(i);
        else
            p.inliers.push_back(i);
    }
    const double n = errors.empty() ? 1.0 : static_cast<double>(errors.size());
    p.frac_rot_below_5 = r5 / n;
    p.frac_rot_below_10 = r10 / n;
    p.frac_trans_below_3pct = t3 / n;
    p.frac_trans_below_5pct = t5 / n;
    return p;
}

}  // namespace drf

#pragma once

#include <limits>
#include <vector>

#include "drf/camera.hpp"
#include "drf/image.hpp"

namespace drf {

struct PoseError {
    double rot_deg = 0;    // geodesic rotation error, degrees, in [0, 180]
    double trans_rel = 0;  // |p_est - p_gt| / |p_gt|
};

/// Fractions below the standard reporting thresholds; inliers are the poses
/// with rotation error <= 5 degrees AND relative translation error <= 3%.
struct PosePartition {
    std::vector<std::size_t> inliers;
    std::vector<std::size_t> outliers;
    double frac_rot_below_5 = 0;
    double frac_rot_below_10 = 0;
    double frac_trans_below_3pct = 0;
    double frac_trans_below_5pct = 0;
};

/// -10 log10(MSE) over all channels; identical images return +infinity.
double psnr(const Image& a, const Image& b);

/// Mean local SSIM on luma (0.299R + 0.587G + 0.114B), 11x11 Gaussian window
/// sigma = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1. Throws when either
/// image dimension is below the window size.
double ssim(const Image& a, const Image& b);

PoseError pose_error(const Extrinsic& est, const Extrinsic& gt);

PosePartition outlier_filter(const std::vector<PoseError>& errors);

constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

}  // namespace drf

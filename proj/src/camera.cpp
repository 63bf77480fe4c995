#include "drf/camera.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace drf {

namespace {

constexpr double kPoleMargin = 1e-4;

Tensor unit_direction(const Tensor& phi, const Tensor& theta) {
    // (cos t cos f, cos t sin f, sin t) as a {1,3} tensor
    Tensor ct = cos(theta), st = sin(theta);
    Tensor cf = cos(phi), sf = sin(phi);
    return stack_scalars({ct * cf, ct * sf, st}, {1, 3});
}

}  // namespace

CameraPose CameraPose::make(double phi, double theta, double rho, bool trainable) {
    if (rho <= 0.0) throw Error("camera: rho must be positive, got " + std::to_string(rho));
    if (!(theta > -std::numbers::pi / 2 && theta < std::numbers::pi / 2))
        throw Error("camera: theta must lie in (-pi/2, pi/2), got " + std::to_string(theta));
    CameraPose p;
    p.phi = trainable ? Tensor::leaf(phi) : Tensor::constant(phi);
    p.theta = trainable ? Tensor::leaf(theta) : Tensor::constant(theta);
    p.log_rho = trainable ? Tensor::leaf(std::log(rho)) : Tensor::constant(std::log(rho));
    return p;
}

void CameraPose::clamp_elevation() {
    const double lim = std::numbers::pi / 2 - kPoleMargin;
    double& t = theta.value_mut()[0];
    t = std::clamp(t, -lim, lim);
}

Eigen::Matrix4d Extrinsic::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = rot_cw;
    m.block<3, 1>(0, 3) = p;
    return m;
}

void Extrinsic::validate() const {
    const double ortho = (rot_cw.transpose() * rot_cw - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(rot_cw.determinant() - 1.0) > 1e-9) {
        std::ostringstream os;
        os << "camera: rotation not orthonormal (deviation " << ortho << "):\n" << rot_cw;
        throw Error(os.str());
    }
}

void Intrinsics::validate() const {
    if (fx <= 0 || fy <= 0)
        throw Error("camera: focal lengths must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
        throw Error("camera: principal point outside image");
}

Extrinsic rotation_from_pose(const CameraPose& pose) {
    const double f = pose.azimuth(), t = pose.elevation(), r = pose.distance();
    Eigen::Matrix3d R;  // world -> camera
    R << -std::sin(f), std::cos(f), 0,
         -std::sin(t) * std::cos(f), -std::sin(t) * std::sin(f), std::cos(t),
          std::cos(t) * std::cos(f), std::cos(t) * std::sin(f), std::sin(t);
    Extrinsic e;
    e.rot_cw = R.transpose();
    e.p = r * Eigen::Vector3d(std::cos(t) * std::cos(f), std::cos(t) * std::sin(f), std::sin(t));
    return e;
}

Extrinsic look_at(const Eigen::Vector3d& o, const Eigen::Vector3d& target) {
    Eigen::Vector3d b = o - target;
    const double n = b.norm();
    if (n == 0.0) throw Error("camera: look_at with coincident eye and target");
    b /= n;
    const Eigen::Vector3d w(0, 0, 1);
    Eigen::Vector3d r = w.cross(b);
    // sin of the angle between b and world up; degenerate when collinear
    if (r.norm() < 1e-6)
        throw Error("camera: look_at degenerate, view direction parallel to world up");
    r.normalize();
    const Eigen::Vector3d u = b.cross(r);
    Extrinsic e;
    e.rot_cw.col(0) = r;
    e.rot_cw.col(1) = u;
    e.rot_cw.col(2) = b;
    e.p = o;
    return e;
}

std::pair<Extrinsic, Extrinsic> pose_lookat_consistency(const CameraPose& pose) {
    Extrinsic a = rotation_from_pose(pose);
    Extrinsic b = look_at(a.p, Eigen::Vector3d::Zero());
    return {a, b};
}

Eigen::Matrix3d rodrigues(const AxisAngle& aa) {
    if (std::abs(aa.k.norm() - 1.0) > 1e-9)
        throw Error("camera: rodrigues axis must be unit norm, got |k| = " +
                    std::to_string(aa.k.norm()));
    Eigen::Matrix3d K;
    K << 0, -aa.k.z(), aa.k.y(),
         aa.k.z(), 0, -aa.k.x(),
        -aa.k.y(), aa.k.x(), 0;
    return Eigen::Matrix3d::Identity() + std::sin(aa.theta) * K +
           (1.0 - std::cos(aa.theta)) * (K * K);
}

Extrinsic world_to_cam(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
    const double dev = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (dev > 1e-9 || std::abs(R.determinant() - 1.0) > 1e-9)
        throw Error("camera: world_to_cam input is not a rotation");
    Extrinsic e;
    e.rot_cw = R.transpose();
    e.p = -R.transpose() * t;
    return e;
}

double upright_theta(const Eigen::Vector3d& k) {
    const double num = k.x() * k.x() * k.z() * k.z() - k.y() * k.y();
    const double den = k.x() * k.x() * k.z() * k.z() + k.y() * k.y();
    if (den <= 1e-12)
        throw Error("camera: upright_theta degenerate axis (kx*kz and ky both ~0)");
    return std::acos(std::clamp(num / den, -1.0, 1.0));
}

Tensor pose_c2w_rotation(const CameraPose& pose) {
    Tensor ct = cos(pose.theta), st = sin(pose.theta);
    Tensor cf = cos(pose.phi), sf = sin(pose.phi);
    Tensor zero = Tensor::constant(0.0);
    // columns: camera right / up / backward expressed in world coordinates
    return stack_scalars({-sf, -(st * cf), ct * cf,
                          cf, -(st * sf), ct * sf,
                          zero, ct, st},
                         {3, 3});
}

Tensor pose_center(const CameraPose& pose) {
    return mul(exp(pose.log_rho), unit_direction(pose.phi, pose.theta));
}

namespace {

// World-to-camera rotation (the transpose of pose_c2w_rotation) as a {3,3}
// tensor differentiable in phi/theta.
Tensor pose_w2c_rotation(const CameraPose& pose) {
    Tensor ct = cos(pose.theta), st = sin(pose.theta);
    Tensor cf = cos(pose.phi), sf = sin(pose.phi);
    Tensor zero = Tensor::constant(0.0);
    return stack_scalars({-sf, cf, zero,
                          -(st * cf), -(st * sf), ct,
                          ct * cf, ct * sf, st},
                         {3, 3});
}

// w2c_rot is R (world->camera); for row-stacked directions,
// d_world = d_cam * R_c2w^T = d_cam * R.
RayBatch rays_from(const Tensor& w2c_rot, const Tensor& center, const Intrinsics& K,
                   const std::vector<std::pair<int, int>>& pixels) {
    K.validate();
    const std::size_t n = pixels.size();
    std::vector<double> cam(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [row, col] = pixels[i];
        if (row < 0 || row >= K.height || col < 0 || col >= K.width)
            throw Error("camera: pixel (" + std::to_string(row) + "," + std::to_string(col) +
                        ") outside " + std::to_string(K.width) + "x" + std::to_string(K.height));
        cam[i * 3 + 0] = (col - K.cx) / K.fx;
        cam[i * 3 + 1] = -(row - K.cy) / K.fy;
        cam[i * 3 + 2] = -1.0;
    }
    Tensor dirs_cam = Tensor::constant({n, 3}, std::move(cam));
    Tensor world = matmul(dirs_cam, w2c_rot);
    Tensor norm = sqrt(row_sum(square(world)));
    RayBatch rb;
    rb.directions = world / norm;
    rb.origins = tile_rows(center, n);
    return rb;
}

}  // namespace

RayBatch generate_rays(const CameraPose& pose, const Intrinsics& K,
                       const std::vector<std::pair<int, int>>& pixels) {
    return rays_from(pose_w2c_rotation(pose), pose_center(pose), K, pixels);
}

RayBatch generate_rays(const Extrinsic& ext, const Intrinsics& K,
                       const std::vector<std::pair<int, int>>& pixels) {
    ext.validate();
    const Eigen::Matrix3d w2c = ext.world_to_cam_rot();
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i * 3 + j] = w2c(i, j);
    Tensor rot = Tensor::constant({3, 3}, std::move(r));
    Tensor center = Tensor::constant({1, 3}, {ext.p.x(), ext.p.y(), ext.p.z()});
    return rays_from(rot, center, K, pixels);
}

std::string format_pose(const Extrinsic& ext) {
    const Eigen::Matrix4d m = ext.matrix();
    std::ostringstream os;
    os << std::setprecision(17);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) os << m(i, j) << ((i == 3 && j == 3) ? "" : " ");
    return os.str();
}

Extrinsic parse_pose(const std::string& text, const std::string& origin_hint) {
    std::istringstream is(text);
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    if (v.size() != 16)
        throw Error("camera: pose " + (origin_hint.empty() ? std::string("text") : origin_hint) +
                    " has " + std::to_string(v.size()) + " floats, expected 16");
    Extrinsic e;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) e.rot_cw(i, j) = v[i * 4 + j];
        e.p(i) = v[i * 4 + 3];
    }
    e.validate();
    return e;
}

}  // namespace drf

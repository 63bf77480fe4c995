#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "drf/tensor.hpp"

namespace drf {

/// Spherical camera parametrization: azimuth phi, elevation theta, distance
/// rho, all differentiable leaves. The camera sits at
/// p = rho*(cos t cos f, cos t sin f, sin t), faces the world origin and keeps
/// its up vector aligned with world +z. rho is held in log space internally so
/// it stays positive under gradient steps; distance() reports linear units.
struct CameraPose {
    Tensor phi;      // radians
    Tensor theta;    // radians, in (-pi/2, pi/2); poles excluded
    Tensor log_rho;

    static CameraPose make(double phi, double theta, double rho, bool trainable = false);

    double azimuth() const { return phi.scalar(); }
    double elevation() const { return theta.scalar(); }
    double distance() const { return std::exp(log_rho.scalar()); }

    /// Clamps theta away from the poles (and leaves phi/rho untouched);
    /// called after each optimizer step on the pose.
    void clamp_elevation();
};

/// Rigid extrinsic stored camera-to-world: x_world = rot_cw * x_cam + p.
struct Extrinsic {
    Eigen::Matrix3d rot_cw = Eigen::Matrix3d::Identity();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();

    Eigen::Matrix3d world_to_cam_rot() const { return rot_cw.transpose(); }
    Eigen::Matrix4d matrix() const;  // 4x4 camera-to-world

    /// Throws unless rot_cw is orthonormal with det +1 (tol 1e-9).
    void validate() const;
};

struct Intrinsics {
    double fx = 0, fy = 0;  // pixels
    double cx = 0, cy = 0;  // pixels
    int width = 0, height = 0;

    void validate() const;
};

struct AxisAngle {
    Eigen::Vector3d k;  // unit axis
    double theta = 0;   // radians
};

/// Batch of camera rays. origins/directions are {N,3} tensors so gradients
/// can flow back to the pose that generated them; directions are unit norm.
struct RayBatch {
    Tensor origins;
    Tensor directions;
    std::size_t size() const { return origins.defined() ? origins.rows() : 0; }
};

/// World-to-camera rotation of the spherical pose, rows
/// (-sin f, cos f, 0), (-sin t cos f, -sin t sin f, cos t),
/// (cos t cos f, cos t sin f, sin t); returned camera-to-world.
Extrinsic rotation_from_pose(const CameraPose& pose);

/// Camera-to-world rotation built from eye/target with world up (0,0,1):
/// b = normalize(o - target), r = normalize(w x b), u = b x r.
/// Throws when o - target is within 1e-6 rad of the world z axis.
Extrinsic look_at(const Eigen::Vector3d& o, const Eigen::Vector3d& target);

/// Both constructions of the same camera; rotations agree within 1e-9.
std::pair<Extrinsic, Extrinsic> pose_lookat_consistency(const CameraPose& pose);

/// R = I + sin(theta) K + (1 - cos(theta)) K^2. Axis must be unit norm.
Eigen::Matrix3d rodrigues(const AxisAngle& aa);

/// Inverts [R|t] (world-to-camera) into the stored camera-to-world form
/// [R^T | -R^T t].
Extrinsic world_to_cam(const Eigen::Matrix3d& R, const Eigen::Vector3d& t);

/// Angle theta with cos(theta) = (kx^2 kz^2 - ky^2) / (kx^2 kz^2 + ky^2),
/// which (up to sign of theta) zeroes entry [2][0] of rodrigues(k, theta),
/// i.e. keeps the camera x axis in the world plane z = 0. Throws when the
/// denominator is below 1e-12.
double upright_theta(const Eigen::Vector3d& k);

/// Differentiable camera-to-world rotation {3,3} and center {1,3} of a pose.
Tensor pose_c2w_rotation(const CameraPose& pose);
Tensor pose_center(const CameraPose& pose);

/// Backprojects pixels (row, col) through the pinhole model. Camera looks
/// down -z, +x right, +y up: direction = normalize(R_c2w * ((col-cx)/fx,
/// -(row-cy)/fy, -1)). Differentiable w.r.t. the pose leaves.
RayBatch generate_rays(const CameraPose& pose, const Intrinsics& K,
                       const std::vector<std::pair<int, int>>& pixels);
RayBatch generate_rays(const Extrinsic& ext, const Intrinsics& K,
                       const std::vector<std::pair<int, int>>& pixels);

/// SRN pose text format: 16 whitespace-separated floats, row-major 4x4
/// camera-to-world.
std::string format_pose(const Extrinsic& ext);
Extrinsic parse_pose(const std::string& text, const std::string& origin_hint = "");

}  // namespace drf

#pragma once

#include <Eigen/Dense>

#include "mvr/errors.hpp"

namespace mvr {

/// Pinhole camera: intrinsics plus a rigid world-to-camera transform.
///
/// Camera frame convention (fixed once for the whole library): +z forward,
/// +x right, +y down; pixel (u, v) centers sit at integer coordinates, and
/// depth means camera-frame z in meters.
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
    int height = 0, width = 0;

    Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }

    Eigen::Vector3d world_to_cam(const Eigen::Vector3d& xw) const {
        return rotation() * xw + translation();
    }
    Eigen::Vector3d cam_to_world(const Eigen::Vector3d& xc) const {
        return rotation().transpose() * (xc - translation());
    }

    /// Camera center expressed in world coordinates.
    Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

    /// Checks the documented invariants: positive focals, orthonormal
    /// rotation with det +1 (within 1e-6), rigid bottom row.
    void validate(const std::string& context) const {
        if (!(fx > 0) || !(fy > 0))
            throw ContractError(context + ": camera focal lengths must be positive");
        const Eigen::Matrix3d r = rotation();
        if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
            throw ContractError(context + ": rotation is not orthonormal");
        if (std::abs(r.determinant() - 1.0) > 1e-6)
            throw ContractError(context + ": rotation determinant is not +1");
        const Eigen::RowVector4d bottom = world_to_camera.row(3);
        if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
            throw ContractError(context + ": transform bottom row is not (0,0,0,1)");
    }
};

}  // namespace mvr

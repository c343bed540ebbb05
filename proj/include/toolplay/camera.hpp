#pragma once

#include <optional>

#include "toolplay/geometry.hpp"

namespace toolplay {

// Pinhole camera. `pose` is the camera body expressed in World (parent World,
// child Camera(i)). Camera convention: +z forward, +x right, +y down.
struct CameraModel {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Pose pose;

    static CameraModel make(int width, int height, double fov_x_deg, const Pose& pose) {
        CameraModel c;
        c.width = width;
        c.height = height;
        c.cx = 0.5 * width;
        c.cy = 0.5 * height;
        c.fx = 0.5 * width / std::tan(0.5 * fov_x_deg * M_PI / 180.0);
        c.fy = c.fx;
        c.pose = pose;
        return c;
    }

    // Camera placed at `eye` looking at `target`, with `up` resolving roll.
    static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int camera_index) {
        Vec3 z = (target - eye).normalized();
        Vec3 x = z.cross(up).normalized();  // note y-down convention: x = forward x up
        if (x.norm() < 1e-9) x = Vec3(1, 0, 0);
        Vec3 y = z.cross(x);
        Mat3 r;
        r.col(0) = x;
        r.col(1) = y;
        r.col(2) = z;
        return Pose::make(Rotation::from_matrix(r), eye, FrameId::world(),
                          FrameId::camera(camera_index));
    }

    // Project a camera-frame point; nullopt when behind the camera or outside
    // the image.
    std::optional<Eigen::Vector2d> project(const Vec3& p_cam) const {
        if (p_cam.z() <= 1e-9) return std::nullopt;
        double u = fx * p_cam.x() / p_cam.z() + cx;
        double v = fy * p_cam.y() / p_cam.z() + cy;
        if (u < 0 || u >= width || v < 0 || v >= height) return std::nullopt;
        return Eigen::Vector2d(u, v);
    }

    // Back-project a pixel at z-depth `depth` into the camera frame.
    // Pixel centers are at integer coordinates + 0.5.
    Vec3 backproject(double u, double v, double depth) const {
        return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
    }

    Vec3 ray_dir(double u, double v) const {
        return Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized();
    }
};

}  // namespace toolplay

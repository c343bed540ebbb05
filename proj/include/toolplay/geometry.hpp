#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <string>

#include "toolplay/errors.hpp"

namespace toolplay {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Named coordinate frame. Camera frames carry an index so multiple cameras
// can coexist in one chain.
struct FrameId {
    enum class Kind { Camera, Tool, Task, Base, EEF, World };
    Kind kind = Kind::World;
    int index = 0;  // only meaningful for Camera

    static FrameId camera(int i) { return {Kind::Camera, i}; }
    static FrameId tool() { return {Kind::Tool, 0}; }
    static FrameId task() { return {Kind::Task, 0}; }
    static FrameId base() { return {Kind::Base, 0}; }
    static FrameId eef() { return {Kind::EEF, 0}; }
    static FrameId world() { return {Kind::World, 0}; }

    bool operator==(const FrameId& o) const { return kind == o.kind && index == o.index; }
    bool operator!=(const FrameId& o) const { return !(*this == o); }

    std::string str() const {
        switch (kind) {
            case Kind::Camera: return "camera" + std::to_string(index);
            case Kind::Tool: return "tool";
            case Kind::Task: return "task";
            case Kind::Base: return "base";
            case Kind::EEF: return "eef";
            case Kind::World: return "world";
        }
        return "?";
    }
};

// Unit quaternion with canonical sign: w >= 0, ties broken toward +x.
class Rotation {
public:
    Rotation() : q_(1, 0, 0, 0) {}
    Rotation(double w, double x, double y, double z) : q_(w, x, y, z) { canonicalize(); }
    explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }

    static Rotation identity() { return {}; }

    static Rotation from_axis_angle(const Vec3& axis, double angle) {
        return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
    }

    static Rotation from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

    const Eigen::Quaterniond& quat() const { return q_; }
    double w() const { return q_.w(); }
    double x() const { return q_.x(); }
    double y() const { return q_.y(); }
    double z() const { return q_.z(); }

    Mat3 matrix() const { return q_.toRotationMatrix(); }

    Rotation operator*(const Rotation& o) const { return Rotation(q_ * o.q_); }

    Rotation inverse() const { return Rotation(q_.conjugate()); }

    Vec3 rotate(const Vec3& v) const { return q_ * v; }

    // Angle of the relative rotation, in [0, pi]. atan2 form keeps precision
    // near zero where acos loses ~1e-8.
    double angle_to(const Rotation& o) const {
        Eigen::Quaterniond rel = q_.conjugate() * o.q_;
        return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
    }

    // Shortest-arc spherical interpolation.
    Rotation slerp(const Rotation& o, double s) const {
        return Rotation(q_.slerp(s, o.q_));
    }

private:
    void canonicalize() {
        q_.normalize();
        bool flip;
        if (q_.w() != 0) flip = q_.w() < 0;
        else if (q_.x() != 0) flip = q_.x() < 0;
        else if (q_.y() != 0) flip = q_.y() < 0;
        else flip = q_.z() < 0;
        if (flip) q_.coeffs() = -q_.coeffs();
    }

    Eigen::Quaterniond q_;
};

inline double geodesic_distance(const Rotation& a, const Rotation& b) {
    return a.angle_to(b);
}

// Continuous 6D rotation encoding: the first two columns of the rotation
// matrix. Decoding re-orthonormalizes by Gram-Schmidt, so any 6-vector with
// non-degenerate columns maps to a proper rotation.
struct Rot6d {
    Eigen::Matrix<double, 6, 1> v;

    static Rot6d encode(const Rotation& r) {
        Mat3 m = r.matrix();
        Rot6d out;
        out.v << m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1);
        return out;
    }

    Rotation decode() const {
        Vec3 a = v.head<3>();
        Vec3 b = v.tail<3>();
        Vec3 c0 = a.normalized();
        Vec3 c1 = (b - c0.dot(b) * c0).normalized();
        Vec3 c2 = c0.cross(c1);
        Mat3 m;
        m.col(0) = c0;
        m.col(1) = c1;
        m.col(2) = c2;
        return Rotation::from_matrix(m);
    }
};

// Rigid transform carrying its frame labels: maps child-frame coordinates
// into the parent frame, p_parent = R * p_child + t.
struct Pose {
    Rotation rotation;
    Vec3 translation = Vec3::Zero();
    FrameId parent_frame = FrameId::world();
    FrameId child_frame = FrameId::world();

    static Pose identity(FrameId frame = FrameId::world()) {
        Pose p;
        p.parent_frame = frame;
        p.child_frame = frame;
        return p;
    }

    static Pose make(const Rotation& r, const Vec3& t, FrameId parent, FrameId child) {
        Pose p;
        p.rotation = r;
        p.translation = t;
        p.parent_frame = parent;
        p.child_frame = child;
        return p;
    }

    Vec3 transform_point(const Vec3& p) const { return rotation.rotate(p) + translation; }
    Vec3 transform_vector(const Vec3& v) const { return rotation.rotate(v); }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation.matrix();
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    // Same transform under different frame labels.
    Pose relabeled(FrameId parent, FrameId child) const {
        return make(rotation, translation, parent, child);
    }

    std::array<double, 7> serialize() const {
        return {translation.x(), translation.y(), translation.z(),
                rotation.w(), rotation.x(), rotation.y(), rotation.z()};
    }

    static Pose deserialize(const std::array<double, 7>& a, FrameId parent, FrameId child) {
        return make(Rotation(a[3], a[4], a[5], a[6]), Vec3(a[0], a[1], a[2]), parent, child);
    }
};

inline Pose compose(const Pose& a, const Pose& b) {
    if (a.child_frame != b.parent_frame) {
        throw FrameMismatch("compose: chain does not connect (" + a.parent_frame.str() + "<-" +
                            a.child_frame.str() + " vs " + b.parent_frame.str() + "<-" +
                            b.child_frame.str() + ")");
    }
    return Pose::make(a.rotation * b.rotation,
                      a.rotation.rotate(b.translation) + a.translation,
                      a.parent_frame, b.child_frame);
}

inline Pose inverse(const Pose& p) {
    Rotation ri = p.rotation.inverse();
    return Pose::make(ri, -ri.rotate(p.translation), p.child_frame, p.parent_frame);
}

// Action representation: T_tool^task = T_camera^task * T_tool^camera.
inline Pose tool_pose_in_task(const Pose& t_camera_task, const Pose& t_tool_camera) {
    return compose(t_camera_task, t_tool_camera);
}

// Controller setpoint: T_eef^base = T_task^base * T_tool^task * T_eef^tool.
inline Pose eef_command_in_base(const Pose& t_task_base, const Pose& t_tool_task,
                                const Pose& t_eef_tool) {
    return compose(compose(t_task_base, t_tool_task), t_eef_tool);
}

// Shortest-arc rotation, linear translation. s must be in [0,1].
inline Pose interpolate(const Pose& a, const Pose& b, double s) {
    if (s < 0.0 || s > 1.0) throw DomainError("interpolate: s outside [0,1]");
    if (a.parent_frame != b.parent_frame || a.child_frame != b.child_frame) {
        throw FrameMismatch("interpolate: frame labels differ");
    }
    return Pose::make(a.rotation.slerp(b.rotation, s),
                      (1.0 - s) * a.translation + s * b.translation,
                      a.parent_frame, a.child_frame);
}

}  // namespace toolplay

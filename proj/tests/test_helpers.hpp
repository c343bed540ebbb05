#pragma once

#include "toolplay/geometry.hpp"
#include "toolplay/rng.hpp"

namespace toolplay::testing {

inline Rotation random_rotation(Rng& rng) {
    // uniform over SO(3) via normalized 4D Gaussian
    return Rotation(rng.normal(), rng.normal(), rng.normal(), rng.normal());
}

inline Pose random_pose(Rng& rng, FrameId parent, FrameId child, double t_scale = 1.0) {
    return Pose::make(random_rotation(rng),
                      Vec3(rng.uniform(-t_scale, t_scale), rng.uniform(-t_scale, t_scale),
                           rng.uniform(-t_scale, t_scale)),
                      parent, child);
}

// dense homogeneous-matrix oracle, independent of Pose composition
inline Mat4 matmul_oracle(const Mat4& a, const Mat4& b) {
    Mat4 out = Mat4::Zero();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) out(i, j) += a(i, k) * b(k, j);
    return out;
}

inline double pose_matrix_diff(const Pose& p, const Mat4& m) {
    return (p.matrix() - m).cwiseAbs().maxCoeff();
}

}  // namespace toolplay::testing

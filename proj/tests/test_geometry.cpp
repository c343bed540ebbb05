#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_helpers.hpp"
#include "toolplay/geometry.hpp"

using namespace toolplay;
using namespace toolplay::testing;

TEST_CASE("rotation canonical sign and norm") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        Rotation r = random_rotation(rng);
        CHECK(std::abs(r.quat().norm() - 1.0) < 1e-9);
        CHECK(r.w() >= 0.0);
        Rotation prod = r * random_rotation(rng);
        CHECK(std::abs(prod.quat().norm() - 1.0) < 1e-9);
    }
    // tie at w == 0 broken toward +x
    Rotation tie(0.0, -1.0, 0.0, 0.0);
    CHECK(tie.x() == 1.0);
}

TEST_CASE("compose: identity and inverse cases") {
    Rng rng(2);
    Pose p = random_pose(rng, FrameId::world(), FrameId::tool());
    Pose id_w = Pose::identity(FrameId::world());
    Pose r = compose(id_w, p);
    CHECK(pose_matrix_diff(r, p.matrix()) < 1e-12);

    Pose pinv = inverse(p);
    Pose i = compose(p, pinv);
    CHECK(geodesic_distance(i.rotation, Rotation::identity()) < 1e-9);
    CHECK(i.translation.norm() < 1e-9);
}

TEST_CASE("compose matches dense 4x4 matrix oracle") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Pose a = random_pose(rng, FrameId::world(), FrameId::task());
        Pose b = random_pose(rng, FrameId::task(), FrameId::tool());
        Mat4 expected = matmul_oracle(a.matrix(), b.matrix());
        CHECK(pose_matrix_diff(compose(a, b), expected) < 1e-12);
    }
}

TEST_CASE("compose frame mismatch raises") {
    Rng rng(4);
    Pose a = random_pose(rng, FrameId::world(), FrameId::task());
    Pose b = random_pose(rng, FrameId::tool(), FrameId::eef());
    CHECK_THROWS_AS(compose(a, b), FrameMismatch);
    // camera indices are part of the frame identity
    Pose c1 = random_pose(rng, FrameId::task(), FrameId::camera(0));
    Pose c2 = random_pose(rng, FrameId::camera(1), FrameId::tool());
    CHECK_THROWS_AS(compose(c1, c2), FrameMismatch);
}

TEST_CASE("inverse: trivial and matrix-inverse oracle") {
    Pose id = Pose::identity();
    Pose idi = inverse(id);
    CHECK(pose_matrix_diff(idi, Mat4::Identity()) < 1e-15);

    Pose t = Pose::make(Rotation::identity(), Vec3(0.1, 0, 0), FrameId::world(), FrameId::tool());
    CHECK((inverse(t).translation - Vec3(-0.1, 0, 0)).norm() < 1e-15);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        Pose p = random_pose(rng, FrameId::world(), FrameId::tool());
        Mat4 expected = p.matrix().inverse();
        CHECK(pose_matrix_diff(inverse(p), expected) < 1e-12);
        CHECK(inverse(p).parent_frame == FrameId::tool());
        CHECK(inverse(p).child_frame == FrameId::world());
    }
}

TEST_CASE("tool_pose_in_task") {
    Pose id_tc = Pose::identity(FrameId::task()).relabeled(FrameId::task(), FrameId::camera(0));
    Pose id_ct = Pose::identity().relabeled(FrameId::camera(0), FrameId::tool());
    Pose r = tool_pose_in_task(id_tc, id_ct);
    CHECK(r.parent_frame == FrameId::task());
    CHECK(r.child_frame == FrameId::tool());
    CHECK(r.translation.norm() < 1e-15);

    Rng rng(6);
    // camera coincident with task frame: result is t_tool_camera relabeled
    Pose ttc = random_pose(rng, FrameId::camera(0), FrameId::tool());
    Pose relab = tool_pose_in_task(id_tc, ttc);
    CHECK(pose_matrix_diff(relab, ttc.matrix()) < 1e-15);

    for (int i = 0; i < 100; ++i) {
        Pose a = random_pose(rng, FrameId::task(), FrameId::camera(0));
        Pose b = random_pose(rng, FrameId::camera(0), FrameId::tool());
        CHECK(pose_matrix_diff(tool_pose_in_task(a, b), matmul_oracle(a.matrix(), b.matrix())) <
              1e-12);
    }
}

TEST_CASE("eef_command_in_base") {
    Pose id_bt = Pose::identity().relabeled(FrameId::base(), FrameId::task());
    Pose id_tt = Pose::identity().relabeled(FrameId::task(), FrameId::tool());
    Pose id_te = Pose::identity().relabeled(FrameId::tool(), FrameId::eef());
    Pose r = eef_command_in_base(id_bt, id_tt, id_te);
    CHECK(r.parent_frame == FrameId::base());
    CHECK(r.child_frame == FrameId::eef());
    CHECK(r.translation.norm() < 1e-15);

    Pose up = Pose::make(Rotation::identity(), Vec3(0, 0, 0.5), FrameId::base(), FrameId::task());
    Pose shifted = eef_command_in_base(up, id_tt, id_te);
    CHECK((shifted.translation - Vec3(0, 0, 0.5)).norm() < 1e-15);

    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        Pose a = random_pose(rng, FrameId::base(), FrameId::task());
        Pose b = random_pose(rng, FrameId::task(), FrameId::tool());
        Pose c = random_pose(rng, FrameId::tool(), FrameId::eef());
        Mat4 expected = matmul_oracle(matmul_oracle(a.matrix(), b.matrix()), c.matrix());
        CHECK(pose_matrix_diff(eef_command_in_base(a, b, c), expected) < 1e-12);
    }
}

TEST_CASE("geodesic distance") {
    Rng rng(8);
    Rotation q = random_rotation(rng);
    CHECK(geodesic_distance(q, q) == doctest::Approx(0.0).epsilon(1e-12));

    Rotation z90 = Rotation::from_axis_angle(Vec3(0, 0, 1), M_PI / 2);
    CHECK(geodesic_distance(Rotation::identity(), z90) == doctest::Approx(M_PI / 2).epsilon(1e-9));

    for (int i = 0; i < 200; ++i) {
        Rotation a = random_rotation(rng), b = random_rotation(rng);
        // trace oracle: angle = acos((tr(Ra^T Rb) - 1) / 2)
        double tr = (a.matrix().transpose() * b.matrix()).trace();
        double expected = std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
        CHECK(std::abs(geodesic_distance(a, b) - expected) < 1e-9);
        CHECK(std::abs(geodesic_distance(b, a) - expected) < 1e-9);
        CHECK(geodesic_distance(a, b) >= 0.0);
        CHECK(geodesic_distance(a, b) <= M_PI + 1e-12);
    }
}

TEST_CASE("interpolate") {
    Rng rng(9);
    Pose a = random_pose(rng, FrameId::world(), FrameId::tool());
    Pose b = random_pose(rng, FrameId::world(), FrameId::tool());
    CHECK(pose_matrix_diff(interpolate(a, b, 0.0), a.matrix()) < 1e-12);
    CHECK(pose_matrix_diff(interpolate(a, b, 1.0), b.matrix()) < 1e-12);
    CHECK_THROWS_AS(interpolate(a, b, -0.01), DomainError);
    CHECK_THROWS_AS(interpolate(a, b, 1.01), DomainError);

    Pose ida = Pose::identity().relabeled(FrameId::world(), FrameId::tool());
    Pose z90 = Pose::make(Rotation::from_axis_angle(Vec3(0, 0, 1), M_PI / 2), Vec3::Zero(),
                          FrameId::world(), FrameId::tool());
    Pose mid = interpolate(ida, z90, 0.5);
    CHECK(geodesic_distance(mid.rotation, Rotation::from_axis_angle(Vec3(0, 0, 1), M_PI / 4)) <
          1e-9);
    CHECK(std::abs(geodesic_distance(mid.rotation, ida.rotation) -
                   geodesic_distance(mid.rotation, z90.rotation)) < 1e-9);
}

TEST_CASE("rot6d round trip and gram-schmidt properness") {
    Rng rng(10);
    for (int i = 0; i < 500; ++i) {
        Rotation r = random_rotation(rng);
        Rotation back = Rot6d::encode(r).decode();
        CHECK(geodesic_distance(r, back) < 1e-9);
    }
    for (int i = 0; i < 500; ++i) {
        Rot6d v;
        for (int k = 0; k < 6; ++k) v.v(k) = rng.normal();
        Mat3 m = v.decode().matrix();
        CHECK(std::abs(m.determinant() - 1.0) < 1e-9);
        CHECK((m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("associativity property") {
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
        Pose a = random_pose(rng, FrameId::world(), FrameId::base());
        Pose b = random_pose(rng, FrameId::base(), FrameId::task());
        Pose c = random_pose(rng, FrameId::task(), FrameId::tool());
        Pose lhs = compose(compose(a, b), c);
        Pose rhs = compose(a, compose(b, c));
        CHECK(pose_matrix_diff(lhs, rhs.matrix()) < 1e-9);
    }
}

TEST_CASE("frame safety property over random labels") {
    Rng rng(12);
    auto random_frame = [&rng]() {
        switch (rng.uniform_index(6)) {
            case 0: return FrameId::camera(static_cast<int>(rng.uniform_index(3)));
            case 1: return FrameId::tool();
            case 2: return FrameId::task();
            case 3: return FrameId::base();
            case 4: return FrameId::eef();
            default: return FrameId::world();
        }
    };
    for (int i = 0; i < 1000; ++i) {
        FrameId pa = random_frame(), ca = random_frame();
        FrameId pb = random_frame(), cb = random_frame();
        Pose a = random_pose(rng, pa, ca);
        Pose b = random_pose(rng, pb, cb);
        if (ca == pb) {
            Pose r = compose(a, b);
            CHECK(r.parent_frame == pa);
            CHECK(r.child_frame == cb);
        } else {
            CHECK_THROWS_AS(compose(a, b), FrameMismatch);
        }
    }
}

TEST_CASE("base-motion algebra invariant") {
    // moving the base by B and compensating T_task^base leaves the command,
    // re-expressed in the original base frame, unchanged
    Rng rng(13);
    for (int i = 0; i < 300; ++i) {
        Pose t_task_base = random_pose(rng, FrameId::base(), FrameId::task());
        Pose t_tool_task = random_pose(rng, FrameId::task(), FrameId::tool());
        Pose t_eef_tool = random_pose(rng, FrameId::tool(), FrameId::eef());
        Pose unperturbed = eef_command_in_base(t_task_base, t_tool_task, t_eef_tool);

        Pose b_motion = random_pose(rng, FrameId::base(), FrameId::base(), 0.05);
        Pose compensated = eef_command_in_base(compose(inverse(b_motion), t_task_base),
                                               t_tool_task, t_eef_tool);
        Pose back_in_original = compose(b_motion, compensated.relabeled(FrameId::base(),
                                                                        FrameId::eef()));
        CHECK(pose_matrix_diff(back_in_original, unperturbed.matrix()) < 1e-9);
    }
}

TEST_CASE("pose serialization round trip") {
    Rng rng(14);
    for (int i = 0; i < 100; ++i) {
        Pose p = random_pose(rng, FrameId::task(), FrameId::tool());
        Pose q = Pose::deserialize(p.serialize(), FrameId::task(), FrameId::tool());
        CHECK(pose_matrix_diff(q, p.matrix()) < 1e-14);
    }
}

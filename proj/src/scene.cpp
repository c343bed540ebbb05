#include "toolplay/scene.hpp"

#include "toolplay/rng.hpp"

namespace toolplay {

namespace {

ToolModel make_hammer() {
    ToolModel t;
    t.name = "hammer";
    // tool frame: grip at origin, handle down -z to the head
    Primitive handle;
    handle.shape = Shape::Capsule;
    handle.size = Vec3(0.008, 0.045, 0);
    handle.albedo = Vec3(0.45, 0.30, 0.18);
    handle.instance_id = kToolIdBase;
    handle.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.05), FrameId::world(),
                              FrameId::world());
    t.primitives.push_back(handle);

    Primitive head;
    head.shape = Shape::Box;
    head.size = Vec3(0.030, 0.014, 0.014);
    head.albedo = Vec3(0.35, 0.36, 0.40);
    head.instance_id = kToolIdBase + 1;
    head.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.105), FrameId::world(),
                            FrameId::world());
    t.primitives.push_back(head);

    // dense surface features: head-box corners, edge midpoints and face
    // centers plus handle side points (a pose tracker sees many features,
    // and a slender tool needs the lateral spread to pin the roll axis)
    Vec3 hc(0, 0, -0.105), hs(0.030, 0.014, 0.014);
    for (int i = 0; i < 8; ++i) {
        Vec3 s((i & 1) ? hs.x() : -hs.x(), (i & 2) ? hs.y() : -hs.y(), (i & 4) ? hs.z() : -hs.z());
        t.model_points.push_back(hc + s);
    }
    for (int axis = 0; axis < 3; ++axis) {
        for (int sgn : {-1, 1}) {
            Vec3 c = Vec3::Zero();
            c[axis] = sgn * hs[axis];
            t.model_points.push_back(hc + c);  // 6 face centers
        }
        // 4 edge midpoints running along this axis
        int u = (axis + 1) % 3, v = (axis + 2) % 3;
        for (int su : {-1, 1}) {
            for (int sv : {-1, 1}) {
                Vec3 e = Vec3::Zero();
                e[u] = su * hs[u];
                e[v] = sv * hs[v];
                t.model_points.push_back(hc + e);
            }
        }
    }
    for (double z : {-0.02, -0.04, -0.06, -0.08}) {
        t.model_points.push_back(Vec3(0.008, 0, z));
        t.model_points.push_back(Vec3(-0.008, 0, z));
        t.model_points.push_back(Vec3(0, 0.008, z));
        t.model_points.push_back(Vec3(0, -0.008, z));
    }
    t.tip = Vec3(0, 0, -0.119);
    return t;
}

ToolModel make_mallet() {
    // alternate tool geometry for the two-tool toy study
    ToolModel t;
    t.name = "mallet";
    Primitive handle;
    handle.shape = Shape::Capsule;
    handle.size = Vec3(0.009, 0.05, 0);
    handle.albedo = Vec3(0.25, 0.25, 0.28);
    handle.instance_id = kToolIdBase;
    handle.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.055), FrameId::world(),
                              FrameId::world());
    t.primitives.push_back(handle);

    Primitive head;
    head.shape = Shape::Sphere;
    head.size = Vec3(0.022, 0, 0);
    head.albedo = Vec3(0.6, 0.45, 0.2);
    head.instance_id = kToolIdBase + 1;
    head.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.12), FrameId::world(),
                            FrameId::world());
    t.primitives.push_back(head);

    for (int i = 0; i < 8; ++i) {
        double a = i * M_PI / 4;
        t.model_points.push_back(Vec3(0.022 * std::cos(a), 0.022 * std::sin(a), -0.12));
    }
    // 45-degree latitude rings and handle side points for roll conditioning
    for (int i = 0; i < 8; ++i) {
        double a = i * M_PI / 4 + M_PI / 8, r = 0.022 * M_SQRT1_2, dz = 0.022 * M_SQRT1_2;
        t.model_points.push_back(Vec3(r * std::cos(a), r * std::sin(a), -0.12 - dz));
        t.model_points.push_back(Vec3(r * std::cos(a), r * std::sin(a), -0.12 + dz));
    }
    t.model_points.push_back(Vec3(0, 0, -0.142));
    for (double z : {-0.02, -0.05, -0.08}) {
        t.model_points.push_back(Vec3(0.009, 0, z));
        t.model_points.push_back(Vec3(-0.009, 0, z));
        t.model_points.push_back(Vec3(0, 0.009, z));
        t.model_points.push_back(Vec3(0, -0.009, z));
    }
    t.tip = Vec3(0, 0, -0.142);
    return t;
}

ToolModel make_spoon() {
    ToolModel t;
    t.name = "spoon";
    Primitive handle;
    handle.shape = Shape::Capsule;
    handle.size = Vec3(0.007, 0.05, 0);
    handle.albedo = Vec3(0.7, 0.7, 0.72);
    handle.instance_id = kToolIdBase;
    handle.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.055), FrameId::world(),
                              FrameId::world());
    t.primitives.push_back(handle);

    Primitive cup;
    cup.shape = Shape::Disk;
    cup.size = Vec3(0.028, 0, 0);
    cup.albedo = Vec3(0.75, 0.75, 0.78);
    cup.instance_id = kToolIdBase + 1;
    cup.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.112), FrameId::world(),
                           FrameId::world());
    t.primitives.push_back(cup);

    for (int i = 0; i < 8; ++i) {
        double a = i * M_PI / 4;
        t.model_points.push_back(Vec3(0.028 * std::cos(a), 0.028 * std::sin(a), -0.112));
        t.model_points.push_back(Vec3(0.014 * std::cos(a), 0.014 * std::sin(a), -0.112));
    }
    for (double z : {-0.02, -0.05, -0.08}) {
        t.model_points.push_back(Vec3(0.007, 0, z));
        t.model_points.push_back(Vec3(-0.007, 0, z));
        t.model_points.push_back(Vec3(0, 0.007, z));
        t.model_points.push_back(Vec3(0, -0.007, z));
    }
    t.tip = Vec3(0, 0, -0.112);
    return t;
}

ToolModel make_pan() {
    ToolModel t;
    t.name = "pan";
    Primitive handle;
    handle.shape = Shape::Capsule;
    handle.size = Vec3(0.008, 0.05, 0);
    handle.albedo = Vec3(0.15, 0.15, 0.15);
    handle.instance_id = kToolIdBase;
    handle.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.055), FrameId::world(),
                              FrameId::world());
    t.primitives.push_back(handle);

    Primitive face;
    face.shape = Shape::Disk;
    face.size = Vec3(0.05, 0, 0);
    face.albedo = Vec3(0.22, 0.22, 0.24);
    face.instance_id = kToolIdBase + 1;
    face.local = Pose::make(Rotation::identity(), Vec3(0, 0, -0.112), FrameId::world(),
                            FrameId::world());
    t.primitives.push_back(face);

    for (int i = 0; i < 8; ++i) {
        double a = i * M_PI / 4;
        t.model_points.push_back(Vec3(0.05 * std::cos(a), 0.05 * std::sin(a), -0.112));
        t.model_points.push_back(Vec3(0.025 * std::cos(a), 0.025 * std::sin(a), -0.112));
    }
    for (double z : {-0.02, -0.05, -0.09}) {
        t.model_points.push_back(Vec3(0.008, 0, z));
        t.model_points.push_back(Vec3(-0.008, 0, z));
        t.model_points.push_back(Vec3(0, 0.008, z));
        t.model_points.push_back(Vec3(0, -0.008, z));
    }
    t.tip = Vec3(0, 0, -0.112);
    return t;
}

Rotation rot_between(const Vec3& from, const Vec3& to) {
    return Rotation(Eigen::Quaterniond::FromTwoVectors(from, to));
}

}  // namespace

Scene make_scene(TaskKind kind, EmbodimentKind embodiment, std::uint64_t seed, int cam_height,
                 int cam_width) {
    Scene s;
    s.seed = seed;
    s.embodiment = embodiment;
    s.task.kind = kind;

    // tabletop
    Primitive table;
    table.shape = Shape::Plane;
    table.size = Vec3(0.35, 0.28, 0);
    table.albedo = Vec3(0.55, 0.44, 0.32);
    table.instance_id = kTableId;
    table.local = Pose::identity();
    s.statics.push_back(table);

    // task frame anchored on the table, deliberately offset from World
    s.t_task_world = Pose::make(Rotation::from_axis_angle(Vec3(0, 0, 1), 0.15),
                                Vec3(0.05, -0.03, 0), FrameId::world(), FrameId::task());
    // fiducial disks sit 1.5 mm above the table; the model points carry the
    // same height so detector observations match the model exactly
    s.fiducial_model = {Vec3(-0.15, 0.04, 0.0015), Vec3(-0.07, 0.04, 0.0015),
                        Vec3(-0.15, 0.10, 0.0015)};
    const Vec3 fid_colors[3] = {{0.92, 0.10, 0.85}, {0.95, 0.85, 0.10}, {0.10, 0.85, 0.90}};
    for (int i = 0; i < 3; ++i) {
        Primitive f;
        f.shape = Shape::Disk;
        f.size = Vec3(0.013, 0, 0);
        f.albedo = fid_colors[i];
        f.instance_id = kFiducialId0 + i;
        Vec3 p = s.t_task_world.transform_point(s.fiducial_model[i]);
        f.local = Pose::make(s.t_task_world.rotation, p, FrameId::world(), FrameId::world());
        s.statics.push_back(f);
    }

    switch (kind) {
        case TaskKind::Hammer:
            s.tool = make_hammer();
            s.task.placement_center = Eigen::Vector2d(0.0, 0.0);
            s.task.placement_half_range = Eigen::Vector2d(0.04, 0.04);
            s.task.demo_duration = 3.0;
            break;
        case TaskKind::Scoop:
            s.tool = make_spoon();
            s.task.placement_center = Eigen::Vector2d(-0.06, 0.0);
            s.task.placement_half_range = Eigen::Vector2d(0.03, 0.03);
            s.task.demo_duration = 4.0;
            break;
        case TaskKind::Flip:
            s.tool = make_pan();
            s.task.placement_center = Eigen::Vector2d(0.0, 0.0);
            s.task.placement_half_range = Eigen::Vector2d(0.015, 0.015);
            s.task.demo_duration = 3.0;
            break;
    }

    if (kind == TaskKind::Scoop) {
        Primitive bowl;
        bowl.shape = Shape::Disk;
        bowl.size = Vec3(s.task.bowl_radius, 0, 0);
        bowl.albedo = Vec3(0.15, 0.25, 0.70);
        bowl.instance_id = kObjectIdBase + 1;
        Vec3 bc = s.t_task_world.transform_point(
            Vec3(s.task.bowl_center.x(), s.task.bowl_center.y(), 0.0015));
        bowl.local = Pose::make(s.t_task_world.rotation, bc, FrameId::world(), FrameId::world());
        s.statics.push_back(bowl);
    }

    s.look_at_point = s.t_task_world.transform_point(
        Vec3(s.task.placement_center.x(), s.task.placement_center.y(), 0.02));

    const double fov_x_deg = 55.0;
    s.demo_cameras.push_back(CameraModel::make(
        cam_width, cam_height, fov_x_deg,
        CameraModel::look_at(Vec3(0.26, 0.30, 0.34), s.look_at_point, Vec3(0, 0, 1), 0)));
    s.demo_cameras.push_back(CameraModel::make(
        cam_width, cam_height, fov_x_deg,
        CameraModel::look_at(Vec3(-0.24, 0.28, 0.32), s.look_at_point, Vec3(0, 0, 1), 1)));
    // deployment uses the first demo viewpoint by default
    s.deploy_camera = s.demo_cameras[0];
    s.deploy_camera.pose.child_frame = FrameId::camera(2);

    s.tool_home = Pose::make(Rotation::identity(), Vec3(-0.08, 0.13, 0.17), FrameId::world(),
                             FrameId::tool());
    return s;
}

SceneState initial_state(const Scene& scene, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "placement"));
    SceneState st;
    st.tool_world = scene.tool_home;
    Eigen::Vector2d xy = scene.task.placement_center;
    xy.x() += rng.uniform(-scene.task.placement_half_range.x(), scene.task.placement_half_range.x());
    xy.y() += rng.uniform(-scene.task.placement_half_range.y(), scene.task.placement_half_range.y());
    Vec3 p_task(xy.x(), xy.y(), 0);
    Vec3 p_world = scene.t_task_world.transform_point(p_task);
    switch (scene.task.kind) {
        case TaskKind::Hammer:
            st.nail_pos = p_world;
            break;
        case TaskKind::Scoop:
            st.ball_pos = p_world + Vec3(0, 0, scene.task.ball_radius);
            break;
        case TaskKind::Flip:
            // object rides on the pan face; stored relative offset in ball_pos
            st.ball_pos = Vec3(xy.x() * 0.2, xy.y() * 0.2, 0.012);
            break;
    }
    return st;
}

std::vector<Vec3> fiducial_world(const Scene& scene) {
    std::vector<Vec3> out;
    for (const Vec3& f : scene.fiducial_model)
        out.push_back(scene.t_task_world.transform_point(f));
    return out;
}

Vec3 nail_tip_world(const Scene& scene, const SceneState& state) {
    return state.nail_pos + Vec3(0, 0, scene.task.nail_height - state.nail_sunk);
}

std::vector<Primitive> embodiment_primitives(const Scene& scene, const SceneState& state,
                                             const Vec3& base_shift) {
    std::vector<Primitive> prims;
    if (scene.embodiment == EmbodimentKind::None) return prims;
    if (scene.embodiment == EmbodimentKind::Hand) {
        // 3-capsule hand blob, rigid in the Tool frame at the grip
        const Vec3 skin(0.87, 0.62, 0.50);
        struct Cap { Vec3 pos; Vec3 axis; double r, hl; };
        const Cap caps[3] = {
            {{0, 0.012, 0.005}, {1, 0, 0}, 0.020, 0.016},   // palm
            {{0, 0.030, -0.015}, {0, 0.3, -1}, 0.010, 0.022},  // thumb
            {{0, -0.004, 0.035}, {0, -0.2, 1}, 0.011, 0.020},  // fingers over grip
        };
        for (int i = 0; i < 3; ++i) {
            Primitive p;
            p.shape = Shape::Capsule;
            p.size = Vec3(caps[i].r, caps[i].hl, 0);
            p.albedo = skin;
            p.instance_id = kEmbodimentIdBase + i;
            Pose local_in_tool = Pose::make(rot_between(Vec3(0, 0, 1), caps[i].axis),
                                            caps[i].pos, FrameId::world(), FrameId::world());
            Pose world = Pose::make(
                state.tool_world.rotation * local_in_tool.rotation,
                state.tool_world.transform_point(local_in_tool.translation), FrameId::world(),
                FrameId::world());
            p.local = world;
            prims.push_back(p);
        }
    } else {
        // 3-box kinematic link chain from the base anchor to the grip
        const Vec3 metal(0.52, 0.56, 0.66);
        Vec3 base = scene.robot_base + base_shift;
        Vec3 base_top = base + Vec3(0, 0, 0.06);
        Vec3 eef = state.tool_world.translation;
        Vec3 elbow = 0.5 * (base_top + eef) + Vec3(0, 0, 0.16);
        const Vec3 joints[4] = {base, base_top, elbow, eef};
        for (int i = 0; i < 3; ++i) {
            Vec3 a = joints[i], b = joints[i + 1];
            Vec3 seg = b - a;
            double len = seg.norm();
            if (len < 1e-6) len = 1e-6;
            Primitive p;
            p.shape = Shape::Box;
            p.size = Vec3(0.020, 0.020, 0.5 * len);
            p.albedo = metal;
            p.instance_id = kEmbodimentIdBase + i;
            p.local = Pose::make(rot_between(Vec3(0, 0, 1), seg / len), 0.5 * (a + b),
                                 FrameId::world(), FrameId::world());
            prims.push_back(p);
        }
    }
    return prims;
}

std::vector<Primitive> instantiate(const Scene& scene, const SceneState& state,
                                   const Vec3& base_shift) {
    std::vector<Primitive> prims = scene.statics;

    // task objects
    switch (scene.task.kind) {
        case TaskKind::Hammer: {
            Primitive nail;
            nail.shape = Shape::Capsule;
            double h = scene.task.nail_height - state.nail_sunk;
            if (h < 0.004) h = 0.004;
            nail.size = Vec3(0.0045, 0.5 * h, 0);
            nail.albedo = Vec3(0.88, 0.10, 0.10);
            nail.instance_id = kObjectIdBase;
            nail.local = Pose::make(Rotation::identity(), state.nail_pos + Vec3(0, 0, 0.5 * h),
                                    FrameId::world(), FrameId::world());
            prims.push_back(nail);
            break;
        }
        case TaskKind::Scoop: {
            Primitive ball;
            ball.shape = Shape::Sphere;
            ball.size = Vec3(scene.task.ball_radius, 0, 0);
            ball.albedo = Vec3(0.95, 0.55, 0.10);
            ball.instance_id = kObjectIdBase;
            Vec3 pos = state.ball_pos;
            if (state.ball_carried) {
                pos = state.tool_world.transform_point(scene.tool.tip) +
                      Vec3(0, 0, scene.task.ball_radius);
            }
            ball.local = Pose::make(Rotation::identity(), pos, FrameId::world(), FrameId::world());
            prims.push_back(ball);
            break;
        }
        case TaskKind::Flip: {
            Primitive patty;
            patty.shape = Shape::Box;
            patty.size = Vec3(0.018, 0.018, 0.006);
            patty.albedo = state.flipped ? Vec3(0.45, 0.22, 0.08) : Vec3(0.80, 0.55, 0.35);
            patty.instance_id = kObjectIdBase;
            if (state.dropped) {
                patty.local = Pose::make(Rotation::identity(),
                                         Vec3(state.tool_world.translation.x(),
                                              state.tool_world.translation.y(), 0.006),
                                         FrameId::world(), FrameId::world());
            } else {
                Vec3 on_pan = scene.tool.tip + state.ball_pos;
                patty.local = Pose::make(
                    state.tool_world.rotation, state.tool_world.transform_point(on_pan),
                    FrameId::world(), FrameId::world());
            }
            prims.push_back(patty);
            break;
        }
    }

    // tool
    for (const auto& tp : scene.tool.primitives) {
        Primitive p = tp;
        p.local = Pose::make(state.tool_world.rotation * tp.local.rotation,
                             state.tool_world.transform_point(tp.local.translation),
                             FrameId::world(), FrameId::world());
        prims.push_back(p);
    }

    auto emb = embodiment_primitives(scene, state, base_shift);
    prims.insert(prims.end(), emb.begin(), emb.end());
    return prims;
}

bool task_success(const Scene& scene, const SceneState& state) {
    switch (scene.task.kind) {
        case TaskKind::Hammer:
            return state.nail_sunk >= scene.task.sink_target;
        case TaskKind::Scoop: {
            if (state.ball_carried) return false;
            Vec3 bowl_world = scene.t_task_world.transform_point(
                Vec3(scene.task.bowl_center.x(), scene.task.bowl_center.y(), 0));
            Eigen::Vector2d d(state.ball_pos.x() - bowl_world.x(),
                              state.ball_pos.y() - bowl_world.y());
            return d.norm() <= scene.task.bowl_radius;
        }
        case TaskKind::Flip:
            return state.flipped && !state.dropped;
    }
    return false;
}

}  // namespace toolplay

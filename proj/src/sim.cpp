#include "toolplay/sim.hpp"

#include <cmath>

#include "toolplay/rng.hpp"

namespace toolplay {

namespace {

constexpr double kMaxLinSpeed = 2.0;   // m/s
constexpr double kMaxAngSpeed = 10.0;  // rad/s

// closest distance between segment [a,b] and point p
double segment_point_dist(const Vec3& a, const Vec3& b, const Vec3& p) {
    Vec3 ab = b - a;
    double len2 = ab.squaredNorm();
    if (len2 < 1e-18) return (p - a).norm();
    double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + s * ab)).norm();
}

}  // namespace

SceneState step(const Scene& scene, const SceneState& state, const Pose& cmd, double dt) {
    if (!(dt > 0.0 && dt <= 0.1 + 1e-9)) throw DomainError("step: dt outside (0, 0.1]");

    SceneState next = state;
    next.time = state.time + dt;

    // clamp translation
    Vec3 dp = cmd.translation - state.tool_world.translation;
    double dist = dp.norm();
    double max_step = kMaxLinSpeed * dt;
    Vec3 new_t = (dist <= max_step || dist < 1e-12)
                     ? cmd.translation
                     : state.tool_world.translation + dp * (max_step / dist);

    // clamp rotation
    double ang = geodesic_distance(state.tool_world.rotation, cmd.rotation);
    double max_ang = kMaxAngSpeed * dt;
    Rotation new_r = (ang <= max_ang || ang < 1e-12)
                         ? cmd.rotation
                         : state.tool_world.rotation.slerp(cmd.rotation, max_ang / ang);

    Vec3 tip_before = state.tool_world.transform_point(scene.tool.tip);
    next.tool_world = Pose::make(new_r, new_t, FrameId::world(), FrameId::tool());
    Vec3 tip_after = next.tool_world.transform_point(scene.tool.tip);
    next.tip_velocity = (tip_after - tip_before) / dt;

    switch (scene.task.kind) {
        case TaskKind::Hammer: {
            // swept-segment contact test so fast strikes cannot tunnel past
            Vec3 nail_tip = nail_tip_world(scene, state);
            double d = segment_point_dist(tip_before, tip_after, nail_tip);
            if (d <= scene.task.eps_hit && next.tip_velocity.z() <= -scene.task.v_min) {
                next.nail_sunk = std::min(state.nail_sunk + scene.task.sink_per_hit,
                                          scene.task.nail_height - 0.004);
            }
            break;
        }
        case TaskKind::Scoop: {
            double tilt = tool_tilt(next.tool_world);
            if (state.ball_carried) {
                if (tilt > scene.task.scoop_level_tilt) {
                    // released: the ball drops straight down onto the table
                    next.ball_carried = false;
                    next.ball_pos = Vec3(tip_after.x(), tip_after.y(), scene.task.ball_radius);
                } else {
                    next.ball_pos = tip_after + Vec3(0, 0, scene.task.ball_radius);
                }
            } else {
                if ((tip_after - state.ball_pos).norm() <= scene.task.scoop_capture_radius &&
                    tilt <= scene.task.scoop_level_tilt) {
                    next.ball_carried = true;
                    next.ball_pos = tip_after + Vec3(0, 0, scene.task.ball_radius);
                }
            }
            break;
        }
        case TaskKind::Flip: {
            if (!state.flipped && !state.dropped &&
                next.tip_velocity.z() >= scene.task.v_flip) {
                double tilt = tool_tilt(next.tool_world);
                if (tilt >= scene.task.flip_tilt_min && tilt <= scene.task.flip_tilt_max) {
                    next.flipped = true;
                } else if (tilt > scene.task.flip_tilt_max) {
                    next.dropped = true;
                }
            }
            break;
        }
    }

    next.success = task_success(scene, next);
    return next;
}

namespace {

struct Waypoint {
    Pose pose;
    double duration;  // segment time from the previous waypoint
};

Trajectory sample_waypoints(const Pose& start, const std::vector<Waypoint>& wps, double rate_hz,
                            double total_duration) {
    Trajectory traj;
    const double dt = 1.0 / rate_hz;
    int n = static_cast<int>(std::round(total_duration * rate_hz));
    Pose prev = start;
    double seg_start = 0.0;
    size_t wi = 0;
    for (int i = 0; i < n; ++i) {
        double t = i * dt;
        while (wi < wps.size() && t > seg_start + wps[wi].duration + 1e-9) {
            seg_start += wps[wi].duration;
            prev = wps[wi].pose;
            ++wi;
        }
        Pose p;
        if (wi >= wps.size()) {
            p = wps.back().pose;
        } else {
            double tau = std::clamp((t - seg_start) / wps[wi].duration, 0.0, 1.0);
            p = interpolate(prev, wps[wi].pose, min_jerk(tau));
        }
        traj.poses.push_back(p);
        traj.timestamps.push_back(t);
    }
    return traj;
}

Pose tool_at(const Vec3& origin, const Rotation& r = Rotation::identity()) {
    return Pose::make(r, origin, FrameId::world(), FrameId::tool());
}

}  // namespace

Trajectory scripted_demo(const Scene& scene, std::uint64_t seed, double rate_hz) {
    SceneState st = initial_state(scene, seed);
    const Pose home = scene.tool_home;
    const Vec3 tip_off = scene.tool.tip;  // tool-frame tip, identity orientation => world offset
    std::vector<Waypoint> wps;

    switch (scene.task.kind) {
        case TaskKind::Hammer: {
            Vec3 nail_tip = nail_tip_world(scene, st);
            if (std::abs(nail_tip.x()) > 0.32 || std::abs(nail_tip.y()) > 0.25)
                throw PlanFailure("hammer: nail off the table");
            Vec3 above = nail_tip - tip_off + Vec3(0, 0, 0.10);
            Vec3 through = nail_tip - tip_off + Vec3(0, 0, -0.025);
            Vec3 retract = nail_tip - tip_off + Vec3(0, 0, 0.08);
            wps.push_back({tool_at(above), 1.0});
            wps.push_back({tool_at(through), 0.4});
            wps.push_back({tool_at(retract), 0.8});
            break;
        }
        case TaskKind::Scoop: {
            Vec3 ball = st.ball_pos;
            Vec3 bowl = scene.t_task_world.transform_point(
                Vec3(scene.task.bowl_center.x(), scene.task.bowl_center.y(), 0));
            Vec3 above_ball = ball - tip_off + Vec3(0, 0, 0.05);
            Vec3 at_ball = ball - tip_off + Vec3(0, 0, 0.004);
            Vec3 lifted = at_ball + Vec3(0, 0, 0.09);
            // at release tilt the tip swings by L*sin(tilt) along +y
            double L = tip_off.norm();
            Vec3 over_bowl = Vec3(bowl.x(), bowl.y() - L * std::sin(0.65), 0.16);
            Rotation tilt_r = Rotation::from_axis_angle(Vec3(1, 0, 0), 0.95);
            wps.push_back({tool_at(above_ball), 1.1});
            wps.push_back({tool_at(at_ball), 0.7});
            wps.push_back({tool_at(lifted), 0.6});
            wps.push_back({tool_at(over_bowl), 1.0});
            wps.push_back({tool_at(over_bowl, tilt_r), 0.6});
            break;
        }
        case TaskKind::Flip: {
            Vec3 hold = scene.t_task_world.transform_point(Vec3(0, 0, 0)) - tip_off +
                        Vec3(0, 0, 0.10);
            Rotation flick_r = Rotation::from_axis_angle(Vec3(1, 0, 0), 0.35);
            wps.push_back({tool_at(hold), 1.2});
            wps.push_back({tool_at(hold + Vec3(0, 0, 0.10), flick_r), 0.25});
            wps.push_back({tool_at(hold), 1.55});
            break;
        }
    }

    return sample_waypoints(home, wps, rate_hz, scene.task.demo_duration);
}

namespace {

// smooth bounded noise: three random sinusoids with |c_k| <= sigma
struct SmoothNoise {
    double c[3], f[3], ph[3];
    explicit SmoothNoise(std::uint64_t seed, double sigma, double base_freq) {
        Rng rng(seed);
        for (int k = 0; k < 3; ++k) {
            c[k] = rng.uniform(-sigma, sigma);
            f[k] = base_freq * rng.uniform(1.3, 4.0);
            ph[k] = rng.uniform(0, 2 * M_PI);
        }
    }
    double eval(double t) const {
        double v = 0;
        for (int k = 0; k < 3; ++k) v += c[k] * std::sin(2 * M_PI * f[k] * t + ph[k]);
        return v;
    }
};

void check_spec(const PerturbSpec& s) {
    if (s.amplitude > 0.05) throw DomainError("perturb: amplitude > 5 cm");
    if (s.freq_hz > 10.0) throw DomainError("perturb: frequency > 10 Hz");
}

}  // namespace

Pose perturb_base(const PerturbSpec& s, double t) {
    check_spec(s);
    double d = s.amplitude * std::sin(2 * M_PI * s.freq_hz * t);
    if (s.noise_sigma > 0) d += SmoothNoise(s.seed, s.noise_sigma, s.freq_hz).eval(t);
    return Pose::make(Rotation::identity(), d * s.axis.normalized(), FrameId::world(),
                      FrameId::base());
}

Pose perturb_camera(const PerturbSpec& s, double t) {
    check_spec(s);
    double osc = std::sin(2 * M_PI * s.freq_hz * t);
    double d = s.amplitude * osc;
    double a = s.rot_amplitude * osc;
    if (s.noise_sigma > 0) {
        SmoothNoise n(s.seed, s.noise_sigma, s.freq_hz);
        d += n.eval(t);
        if (s.rot_amplitude > 0) a += SmoothNoise(s.seed ^ 0x9e3779b9ull, s.noise_sigma, s.freq_hz).eval(t);
    }
    Vec3 axis = s.axis.normalized();
    Rotation r = (a != 0.0) ? Rotation::from_axis_angle(axis, a) : Rotation::identity();
    return Pose::make(r, d * axis, FrameId::world(), FrameId::world());
}

}  // namespace toolplay

#include "toolplay/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace toolplay {

const Vec3 kBackgroundColor(0.16, 0.17, 0.20);

namespace {

constexpr double kTMin = 1e-6;

// Local-frame intersections; ray is unit-length dir.
bool hit_sphere(const Vec3& o, const Vec3& d, double r, double& t, Vec3& n) {
    double b = o.dot(d);
    double c = o.squaredNorm() - r * r;
    double disc = b * b - c;
    if (disc < 0) return false;
    double s = std::sqrt(disc);
    t = -b - s;
    if (t < kTMin) t = -b + s;
    if (t < kTMin) return false;
    n = (o + t * d).normalized();
    return true;
}

bool hit_box(const Vec3& o, const Vec3& d, const Vec3& h, double& t, Vec3& n) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int axis0 = -1;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-12) {
            if (std::abs(o[i]) > h[i]) return false;
            continue;
        }
        double inv = 1.0 / d[i];
        double ta = (-h[i] - o[i]) * inv;
        double tb = (h[i] - o[i]) * inv;
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) { t0 = ta; axis0 = i; }
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    t = t0 >= kTMin ? t0 : t1;
    if (t < kTMin) return false;
    Vec3 p = o + t * d;
    n = Vec3::Zero();
    if (axis0 >= 0 && t == t0) {
        n[axis0] = p[axis0] > 0 ? 1.0 : -1.0;
    } else {
        // exiting hit from inside; pick dominant axis
        int k = 0;
        Vec3 q = p.cwiseQuotient(h).cwiseAbs();
        if (q[1] > q[0]) k = 1;
        if (q[2] > q[k]) k = 2;
        n[k] = p[k] > 0 ? 1.0 : -1.0;
    }
    return true;
}

bool hit_capsule(const Vec3& o, const Vec3& d, double r, double hl, double& t, Vec3& n) {
    // infinite cylinder about z
    double best = std::numeric_limits<double>::infinity();
    Vec3 bn;
    double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-12) {
        double b = o.x() * d.x() + o.y() * d.y();
        double c = o.x() * o.x() + o.y() * o.y() - r * r;
        double disc = b * b - a * c;
        if (disc >= 0) {
            double s = std::sqrt(disc);
            for (double tc : {(-b - s) / a, (-b + s) / a}) {
                if (tc < kTMin || tc >= best) continue;
                Vec3 p = o + tc * d;
                if (std::abs(p.z()) <= hl) {
                    best = tc;
                    bn = Vec3(p.x(), p.y(), 0).normalized();
                }
            }
        }
    }
    for (double zc : {-hl, hl}) {
        double tc;
        Vec3 nc;
        if (hit_sphere(o - Vec3(0, 0, zc), d, r, tc, nc) && tc < best) {
            best = tc;
            bn = nc;
        }
    }
    if (!std::isfinite(best)) return false;
    t = best;
    n = bn;
    return true;
}

bool hit_plane_rect(const Vec3& o, const Vec3& d, double hx, double hy, double& t, Vec3& n) {
    if (std::abs(d.z()) < 1e-12) return false;
    t = -o.z() / d.z();
    if (t < kTMin) return false;
    Vec3 p = o + t * d;
    if (std::abs(p.x()) > hx || std::abs(p.y()) > hy) return false;
    n = Vec3(0, 0, d.z() > 0 ? -1.0 : 1.0);
    return true;
}

bool hit_disk(const Vec3& o, const Vec3& d, double r, double& t, Vec3& n) {
    if (std::abs(d.z()) < 1e-12) return false;
    t = -o.z() / d.z();
    if (t < kTMin) return false;
    Vec3 p = o + t * d;
    if (p.x() * p.x() + p.y() * p.y() > r * r) return false;
    n = Vec3(0, 0, d.z() > 0 ? -1.0 : 1.0);
    return true;
}

bool hit_primitive(const Primitive& prim, const Vec3& o_w, const Vec3& d_w, double& t, Vec3& n_w) {
    // transform ray into the primitive's local frame
    Rotation rinv = prim.local.rotation.inverse();
    Vec3 o = rinv.rotate(o_w - prim.local.translation);
    Vec3 d = rinv.rotate(d_w);
    Vec3 n;
    bool hit = false;
    switch (prim.shape) {
        case Shape::Sphere: hit = hit_sphere(o, d, prim.size.x(), t, n); break;
        case Shape::Box: hit = hit_box(o, d, prim.size, t, n); break;
        case Shape::Capsule: hit = hit_capsule(o, d, prim.size.x(), prim.size.y(), t, n); break;
        case Shape::Plane: hit = hit_plane_rect(o, d, prim.size.x(), prim.size.y(), t, n); break;
        case Shape::Disk: hit = hit_disk(o, d, prim.size.x(), t, n); break;
    }
    if (hit) n_w = prim.local.rotation.rotate(n);
    return hit;
}

const Vec3 kLightDir = Vec3(0.3, -0.5, 0.9).normalized();  // toward the light
constexpr double kAmbient = 0.35;
constexpr double kDiffuse = 0.65;

std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

bool raycast(const std::vector<Primitive>& prims, const Vec3& origin, const Vec3& dir,
             double& t_hit, int& instance_id, Vec3& normal) {
    t_hit = std::numeric_limits<double>::infinity();
    instance_id = kBackgroundId;
    for (const auto& prim : prims) {
        double t;
        Vec3 n;
        if (hit_primitive(prim, origin, dir, t, n) && t < t_hit) {
            t_hit = t;
            instance_id = prim.instance_id;
            normal = n;
        }
    }
    return instance_id != kBackgroundId;
}

RenderOutput render(const std::vector<Primitive>& prims, const CameraModel& camera) {
    RenderOutput out;
    out.rgb = ImageRgb8(camera.width, camera.height);
    out.depth = DepthMap(camera.width, camera.height, 0.0f);
    out.instance = InstanceMap(camera.width, camera.height, kBackgroundId);

    const Vec3 origin = camera.pose.translation;
    const Mat3 r_cam = camera.pose.rotation.matrix();

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            Vec3 d_cam = camera.ray_dir(x + 0.5, y + 0.5);
            Vec3 d_w = r_cam * d_cam;
            double t;
            int id;
            Vec3 n;
            if (raycast(prims, origin, d_w, t, id, n)) {
                // find albedo of the winner (raycast already tracked id)
                Vec3 albedo(0.5, 0.5, 0.5);
                for (const auto& prim : prims) {
                    if (prim.instance_id == id) { albedo = prim.albedo; break; }
                }
                double shade = kAmbient + kDiffuse * std::abs(n.dot(kLightDir));
                Vec3 c = albedo * shade;
                out.rgb.set(x, y, to_u8(c.x()), to_u8(c.y()), to_u8(c.z()));
                out.depth.at(x, y) = static_cast<float>(t * d_cam.z());
                out.instance.at(x, y) = static_cast<int16_t>(id);
            } else {
                out.rgb.set(x, y, to_u8(kBackgroundColor.x()), to_u8(kBackgroundColor.y()),
                            to_u8(kBackgroundColor.z()));
            }
        }
    }
    return out;
}

bool point_visible(const std::vector<Primitive>& prims, const CameraModel& camera,
                   const Vec3& point_world, double tol) {
    Pose cam_from_world = inverse(camera.pose);
    Vec3 p_cam = cam_from_world.transform_point(point_world);
    if (!camera.project(p_cam)) return false;
    Vec3 origin = camera.pose.translation;
    Vec3 diff = point_world - origin;
    double dist = diff.norm();
    Vec3 dir = diff / dist;
    double t;
    int id;
    Vec3 n;
    if (!raycast(prims, origin, dir, t, id, n)) return false;
    return t >= dist - tol;
}

}  // namespace toolplay

#include "toolplay/view_aug.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "toolplay/rng.hpp"

namespace toolplay {

namespace {

constexpr double kRadiusMin = 5e-4;
constexpr double kRadiusMax = 2e-2;
constexpr double kSplatOpacity = 0.9;

// uniform voxel grid for k-NN queries
struct PointGrid {
    double cell;
    Vec3 origin;
    int max_ring = 1;  // cell span of the cloud; rings beyond it are empty
    std::unordered_map<std::uint64_t, std::vector<int>> cells;

    PointGrid(const std::vector<Vec3>& pts, double cell_size) : cell(cell_size) {
        origin = pts.empty() ? Vec3::Zero() : pts[0];
        Vec3 hi = origin;
        for (const Vec3& p : pts) {
            origin = origin.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        max_ring = static_cast<int>((hi - origin).maxCoeff() / cell) + 2;
        for (size_t i = 0; i < pts.size(); ++i)
            cells[key_of(pts[i])].push_back(static_cast<int>(i));
    }

    Eigen::Vector3i coord(const Vec3& p) const {
        return Eigen::Vector3i(static_cast<int>(std::floor((p.x() - origin.x()) / cell)),
                               static_cast<int>(std::floor((p.y() - origin.y()) / cell)),
                               static_cast<int>(std::floor((p.z() - origin.z()) / cell)));
    }

    static std::uint64_t key(const Eigen::Vector3i& c) {
        auto u = [](int v) { return static_cast<std::uint64_t>(v + (1 << 20)) & 0x1fffff; };
        return (u(c.x()) << 42) | (u(c.y()) << 21) | u(c.z());
    }
    std::uint64_t key_of(const Vec3& p) const { return key(coord(p)); }
};

// exact k-NN distances via expanding Chebyshev rings of grid cells
double mean_knn_dist(const std::vector<Vec3>& pts, const PointGrid& grid, int qi, int k) {
    const Vec3& q = pts[qi];
    Eigen::Vector3i c0 = grid.coord(q);
    const int kk = std::min<int>(k, static_cast<int>(pts.size()) - 1);
    std::vector<double> best;  // ascending, at most kk entries
    auto push = [&](double d) {
        auto it = std::lower_bound(best.begin(), best.end(), d);
        best.insert(it, d);
        if (static_cast<int>(best.size()) > kk) best.pop_back();
    };
    for (int r = 0; r < grid.max_ring; ++r) {
        // once the ring's minimum possible distance exceeds the kth best, stop
        if (static_cast<int>(best.size()) == kk && (r - 1) * grid.cell > best.back()) break;
        for (int dx = -r; dx <= r; ++dx) {
            for (int dy = -r; dy <= r; ++dy) {
                for (int dz = -r; dz <= r; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                    auto it = grid.cells.find(PointGrid::key(c0 + Eigen::Vector3i(dx, dy, dz)));
                    if (it == grid.cells.end()) continue;
                    for (int j : it->second) {
                        if (j == qi) continue;
                        push((pts[j] - q).norm());
                    }
                }
            }
        }
    }
    if (best.empty()) return kRadiusMin;
    double sum = 0;
    for (double d : best) sum += d;
    return sum / static_cast<double>(best.size());
}

}  // namespace

std::vector<Splat> cloud_to_splats(const FusedCloud& cloud, int k) {
    if (cloud.points.empty()) throw DomainError("cloud_to_splats: empty cloud");
    if (k < 1) throw DomainError("cloud_to_splats: k < 1");
    PointGrid grid(cloud.points, kRadiusMax);
    std::vector<Splat> out(cloud.points.size());
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        Splat& s = out[i];
        s.center = cloud.points[i];
        s.color = cloud.colors[i];
        s.opacity = kSplatOpacity;
        double r = cloud.points.size() == 1
                       ? kRadiusMin
                       : mean_knn_dist(cloud.points, grid, static_cast<int>(i), k);
        s.radius = std::clamp(r, kRadiusMin, kRadiusMax);
    }
    return out;
}

SplatRender render_splats(const std::vector<Splat>& splats, const CameraModel& camera) {
    SplatRender out;
    out.rgb = ImageRgb8(camera.width, camera.height);
    out.coverage = Plane<std::uint8_t>(camera.width, camera.height, 0);

    struct Proj {
        double z, u, v, sigma_px;
        int idx;
    };
    Pose cam_from_cloud = inverse(camera.pose);
    std::vector<Proj> projs;
    projs.reserve(splats.size());
    for (size_t i = 0; i < splats.size(); ++i) {
        Vec3 p = cam_from_cloud.transform_point(splats[i].center);
        if (p.z() <= 1e-6) continue;
        Proj pr;
        pr.z = p.z();
        pr.u = camera.fx * p.x() / p.z() + camera.cx;
        pr.v = camera.fy * p.y() / p.z() + camera.cy;
        pr.sigma_px = std::max(camera.fx * splats[i].radius / p.z(), 0.3);
        pr.idx = static_cast<int>(i);
        double ext = 3.0 * pr.sigma_px;
        if (pr.u + ext < 0 || pr.u - ext >= camera.width || pr.v + ext < 0 ||
            pr.v - ext >= camera.height)
            continue;
        projs.push_back(pr);
    }
    // order must not depend on input order: tie-break on full splat contents
    std::sort(projs.begin(), projs.end(), [&](const Proj& a, const Proj& b) {
        if (a.z != b.z) return a.z < b.z;
        const Splat &sa = splats[a.idx], &sb = splats[b.idx];
        auto ka = std::make_tuple(sa.center.x(), sa.center.y(), sa.center.z(), sa.radius,
                                  sa.color.x(), sa.color.y(), sa.color.z(), sa.opacity);
        auto kb = std::make_tuple(sb.center.x(), sb.center.y(), sb.center.z(), sb.radius,
                                  sb.color.x(), sb.color.y(), sb.color.z(), sb.opacity);
        return ka < kb;
    });

    const size_t npx = static_cast<size_t>(camera.width) * camera.height;
    std::vector<double> acc(npx * 3, 0.0), trans(npx, 1.0);
    for (const Proj& pr : projs) {
        const Splat& s = splats[pr.idx];
        double ext = 3.0 * pr.sigma_px;
        int x0 = std::max(0, static_cast<int>(std::floor(pr.u - ext)));
        int x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(pr.u + ext)));
        int y0 = std::max(0, static_cast<int>(std::floor(pr.v - ext)));
        int y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(pr.v + ext)));
        double inv2s2 = 0.5 / (pr.sigma_px * pr.sigma_px);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                size_t i = static_cast<size_t>(y) * camera.width + x;
                if (trans[i] < 1e-3) continue;
                double du = (x + 0.5) - pr.u, dv = (y + 0.5) - pr.v;
                double a = s.opacity * std::exp(-(du * du + dv * dv) * inv2s2);
                if (a < 1.0 / 255.0) continue;
                double w = trans[i] * a;
                acc[i * 3 + 0] += w * s.color.x();
                acc[i * 3 + 1] += w * s.color.y();
                acc[i * 3 + 2] += w * s.color.z();
                trans[i] *= 1.0 - a;
            }
        }
    }

    for (size_t i = 0; i < npx; ++i) {
        for (int c = 0; c < 3; ++c) {
            double v = acc[i * 3 + c] + trans[i] * kBackgroundColor[c];
            out.rgb.data[i * 3 + c] =
                static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        }
        out.coverage.data[i] = (1.0 - trans[i]) >= 0.5 ? 1 : 0;
    }
    return out;
}

std::vector<CameraModel> sample_novel_cameras(const CameraModel& base, const Vec3& look_at,
                                              const NovelViewSpec& spec) {
    if (spec.cap_deg < 0 || spec.cap_deg > 45.0)
        throw DomainError("sample_novel_cameras: cap outside [0, 45] deg");
    if (spec.radial_jitter < 0 || spec.radial_jitter > 0.5)
        throw DomainError("sample_novel_cameras: jitter outside [0, 0.5]");
    if (spec.count < 0) throw DomainError("sample_novel_cameras: negative count");

    Vec3 d0 = base.pose.translation - look_at;
    double radius = d0.norm();
    if (radius < 1e-9) throw DomainError("sample_novel_cameras: base at the look-at point");
    Vec3 d0u = d0 / radius;
    Vec3 ref = std::abs(d0u.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    Vec3 e1 = d0u.cross(ref).normalized();
    Vec3 e2 = d0u.cross(e1);

    Rng rng(derive_seed(spec.seed, "novelcam"));
    const double cap = spec.cap_deg * M_PI / 180.0;
    std::vector<CameraModel> out;
    out.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        // uniform over the cap: cos(theta) uniform in [cos(cap), 1]
        double u = rng.uniform(0.0, 1.0);
        double phi = rng.uniform(0.0, 2.0 * M_PI);
        double rj = rng.uniform(-spec.radial_jitter, spec.radial_jitter);
        double ct = 1.0 - u * (1.0 - std::cos(cap));
        double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        Vec3 dir = ct * d0u + st * (std::cos(phi) * e1 + std::sin(phi) * e2);
        Vec3 eye = look_at + radius * (1.0 + rj) * dir;

        // minimal re-aim keeps roll continuous and makes cap 0 an exact copy
        Vec3 f0 = base.pose.rotation.rotate(Vec3(0, 0, 1));
        Vec3 f1 = (look_at - eye).normalized();
        Rotation realign(Eigen::Quaterniond::FromTwoVectors(f0, f1));
        CameraModel cam = base;
        cam.pose = Pose::make(realign * base.pose.rotation, eye, base.pose.parent_frame,
                              base.pose.child_frame);
        out.push_back(cam);
    }
    return out;
}

std::pair<int, int> crop_offset(int in_w, int in_h, int out_w, int out_h, std::uint64_t seed) {
    if (out_w > in_w || out_h > in_h || out_w < 1 || out_h < 1)
        throw DomainError("crop_offset: crop size outside input");
    Rng rng(derive_seed(seed, "crop"));
    int ox = static_cast<int>(rng.uniform_index(static_cast<size_t>(in_w - out_w) + 1));
    int oy = static_cast<int>(rng.uniform_index(static_cast<size_t>(in_h - out_h) + 1));
    return {ox, oy};
}

ImageRgb8 random_crop(const ImageRgb8& img, int out_w, int out_h, std::uint64_t seed) {
    auto [ox, oy] = crop_offset(img.width, img.height, out_w, out_h, seed);
    if (out_w == img.width && out_h == img.height) return img;
    ImageRgb8 crop(out_w, out_h);
    for (int y = 0; y < out_h; ++y)
        std::copy_n(img.px(ox, oy + y), static_cast<size_t>(out_w) * 3, crop.px(0, y));
    return resize_bilinear(crop, img.width, img.height);
}

}  // namespace toolplay

#include "toolplay/reconstruction.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "toolplay/rng.hpp"

namespace toolplay {

PointMap synth_pointmap(const RenderOutput& render, const CameraModel& camera,
                        double noise_sigma, std::uint64_t seed,
                        std::optional<double> forced_scale,
                        const std::vector<Vec3>& fiducial_centers_world) {
    Rng rng(derive_seed(seed, "pointmap"));
    PointMap pm;
    pm.width = camera.width;
    pm.height = camera.height;
    pm.camera = camera;
    pm.noise_sigma = noise_sigma;
    pm.seed = seed;
    pm.scale_known = false;
    pm.hidden_scale = forced_scale ? *forced_scale : rng.uniform(0.5, 2.0);

    const size_t n = static_cast<size_t>(pm.width) * pm.height;
    pm.points.assign(n, Vec3::Zero());
    pm.colors.assign(n, Vec3::Zero());
    pm.valid.assign(n, 0);
    pm.gt_world.assign(n, Vec3::Zero());

    for (int y = 0; y < pm.height; ++y) {
        for (int x = 0; x < pm.width; ++x) {
            size_t i = pm.idx(x, y);
            float d = render.depth.at(x, y);
            if (d <= 0) continue;
            Vec3 p_cam = camera.backproject(x + 0.5, y + 0.5, d);
            pm.gt_world[i] = camera.pose.transform_point(p_cam);
            Vec3 noise(rng.normal(0, noise_sigma), rng.normal(0, noise_sigma),
                       rng.normal(0, noise_sigma));
            pm.points[i] = pm.hidden_scale * p_cam + noise;
            const auto* px = render.rgb.px(x, y);
            pm.colors[i] = Vec3(px[0], px[1], px[2]) / 255.0;
            pm.valid[i] = 1;
        }
    }

    // marker-detector analog: the reported center averages the pointmap over
    // the marker's pixels, so its noise shrinks with the visible area
    Pose cam_from_world = inverse(camera.pose);
    for (size_t k = 0; k < fiducial_centers_world.size(); ++k) {
        Vec3 p_cam = cam_from_world.transform_point(fiducial_centers_world[k]);
        int area = 0;
        int16_t want = static_cast<int16_t>(kFiducialId0 + static_cast<int>(k));
        for (int16_t id : render.instance.data)
            if (id == want) ++area;
        double sigma = noise_sigma / std::sqrt(static_cast<double>(std::max(area, 1)));
        Vec3 noise(rng.normal(0, sigma), rng.normal(0, sigma), rng.normal(0, sigma));
        pm.fiducial_obs.push_back(pm.hidden_scale * p_cam + noise);
        auto uv = camera.project(p_cam);
        pm.fiducial_uv.push_back(uv ? *uv : Eigen::Vector2d(-1, -1));
    }
    return pm;
}

std::vector<Correspondence> match(const PointMap& pm1, const PointMap& pm2, int n,
                                  double outlier_frac, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "match"));
    const int n_out = static_cast<int>(std::lround(n * outlier_frac));
    const int n_true = n - n_out;

    std::vector<size_t> valid1, valid2;
    for (size_t i = 0; i < pm1.valid.size(); ++i)
        if (pm1.valid[i]) valid1.push_back(i);
    for (size_t i = 0; i < pm2.valid.size(); ++i)
        if (pm2.valid[i]) valid2.push_back(i);
    if (valid1.empty() || valid2.empty())
        throw InsufficientOverlap("match: empty pointmap");

    std::shuffle(valid1.begin(), valid1.end(), rng.engine());

    Pose cam2_from_world = inverse(pm2.camera.pose);
    std::vector<Correspondence> out;
    out.reserve(n);
    for (size_t i : valid1) {
        if (static_cast<int>(out.size()) >= n_true) break;
        const Vec3& P = pm1.gt_world[i];
        Vec3 p2_cam = cam2_from_world.transform_point(P);
        auto uv2 = pm2.camera.project(p2_cam);
        if (!uv2) continue;
        int x2 = std::clamp(static_cast<int>(uv2->x()), 0, pm2.width - 1);
        int y2 = std::clamp(static_cast<int>(uv2->y()), 0, pm2.height - 1);
        size_t i2 = pm2.idx(x2, y2);
        if (!pm2.valid[i2]) continue;
        // depth-buffer co-visibility over a 3x3 window: the whole local patch
        // must lie on the same surface, which rejects occlusion boundaries
        // and thin occluders crossing the subpixel ray
        double tol = std::max(3e-3, 3.0 * p2_cam.z() / pm2.camera.fx);
        bool covisible = (x2 >= 1 && x2 < pm2.width - 1 && y2 >= 1 && y2 < pm2.height - 1);
        for (int dy = -1; dy <= 1 && covisible; ++dy) {
            for (int dx = -1; dx <= 1 && covisible; ++dx) {
                size_t in = pm2.idx(x2 + dx, y2 + dy);
                if (!pm2.valid[in] || (pm2.gt_world[in] - P).norm() > 2.0 * tol)
                    covisible = false;
            }
        }
        if (!covisible) continue;
        // the patch must also be planar: on a flat surface the subpixel ray
        // through uv2 provably re-hits P, while curved primitives can
        // self-occlude between pixel centers
        const Vec3& pc = pm2.gt_world[i2];
        Vec3 du = pm2.gt_world[pm2.idx(x2 + 1, y2)] - pm2.gt_world[pm2.idx(x2 - 1, y2)];
        Vec3 dv = pm2.gt_world[pm2.idx(x2, y2 + 1)] - pm2.gt_world[pm2.idx(x2, y2 - 1)];
        Vec3 nrm = du.cross(dv);
        if (nrm.norm() < 1e-12) continue;
        nrm.normalize();
        bool planar = std::abs((P - pc).dot(nrm)) <= 1e-5;
        for (int dy = -1; dy <= 1 && planar; ++dy)
            for (int dx = -1; dx <= 1 && planar; ++dx)
                if (std::abs((pm2.gt_world[pm2.idx(x2 + dx, y2 + dy)] - pc).dot(nrm)) > 1e-5)
                    planar = false;
        if (!planar) continue;

        Correspondence c;
        c.idx1 = static_cast<int>(i);
        c.idx2 = static_cast<int>(i2);
        c.uv1 = Eigen::Vector2d(static_cast<double>(i % pm1.width) + 0.5,
                                static_cast<double>(i / pm1.width) + 0.5);
        c.uv2 = *uv2;
        c.p1 = pm1.points[i];
        Vec3 noise(rng.normal(0, pm2.noise_sigma), rng.normal(0, pm2.noise_sigma),
                   rng.normal(0, pm2.noise_sigma));
        c.p2 = pm2.hidden_scale * p2_cam + noise;
        out.push_back(c);
    }
    if (static_cast<int>(out.size()) < n_true)
        throw InsufficientOverlap("match: only " + std::to_string(out.size()) + " of " +
                                  std::to_string(n_true) + " true matches found");

    for (int k = 0; k < n_out; ++k) {
        size_t i1 = valid1[rng.uniform_index(valid1.size())];
        size_t i2 = valid2[rng.uniform_index(valid2.size())];
        Correspondence c;
        c.idx1 = static_cast<int>(i1);
        c.idx2 = static_cast<int>(i2);
        c.uv1 = Eigen::Vector2d(static_cast<double>(i1 % pm1.width) + 0.5,
                                static_cast<double>(i1 / pm1.width) + 0.5);
        c.uv2 = Eigen::Vector2d(static_cast<double>(i2 % pm2.width) + 0.5,
                                static_cast<double>(i2 / pm2.width) + 0.5);
        c.p1 = pm1.points[i1];
        c.p2 = pm2.points[i2];
        c.is_outlier = true;
        out.push_back(c);
    }
    return out;
}

SimilarityTransform umeyama(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                            bool with_scale) {
    if (src.size() != dst.size()) throw LengthMismatch("umeyama: size mismatch");
    const size_t n = src.size();
    if (n < 3) throw DegenerateConfiguration("umeyama: fewer than 3 points");

    Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= static_cast<double>(n);
    mu_d /= static_cast<double>(n);

    Mat3 sigma = Mat3::Zero();
    double var_s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        Vec3 ds = src[i] - mu_s;
        Vec3 dd = dst[i] - mu_d;
        sigma += dd * ds.transpose();
        var_s += ds.squaredNorm();
    }
    sigma /= static_cast<double>(n);
    var_s /= static_cast<double>(n);

    Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 d_vals = svd.singularValues();
    if (d_vals(1) < 1e-12 * std::max(d_vals(0), 1e-300) || d_vals(0) < 1e-15)
        throw DegenerateConfiguration("umeyama: collinear or coincident points");

    Mat3 s_fix = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s_fix(2, 2) = -1.0;

    SimilarityTransform out;
    Mat3 r = svd.matrixU() * s_fix * svd.matrixV().transpose();
    out.rotation = Rotation::from_matrix(r);
    out.scale = with_scale ? (d_vals.dot(s_fix.diagonal()) / var_s) : 1.0;
    out.translation = mu_d - out.scale * (r * mu_s);
    return out;
}

namespace {

double fiducial_scale_estimate(const std::vector<Vec3>& obs, const std::vector<Vec3>& model) {
    if (obs.size() < 3 || model.size() < 3)
        throw DegenerateConfiguration("fiducial scale: need 3 fiducial observations");
    double num = 0, den = 0;
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (auto& pr : pairs) {
        num += (obs[pr[0]] - obs[pr[1]]).norm();
        den += (model[pr[0]] - model[pr[1]]).norm();
    }
    if (den < 1e-12) throw DegenerateConfiguration("fiducial scale: degenerate model");
    return num / den;
}

}  // namespace

FusedCloud align_views(const PointMap& pm1, const PointMap& pm2,
                       const std::vector<Correspondence>& matches, const RansacParams& ransac,
                       const std::vector<Vec3>& fiducial_model) {
    if (matches.size() < 3) throw AlignmentFailure("align_views: fewer than 3 matches");
    Rng rng(derive_seed(ransac.seed, "ransac"));

    const size_t m = matches.size();
    std::vector<int> best_inliers;
    for (int it = 0; it < ransac.iters; ++it) {
        size_t a = rng.uniform_index(m), b = rng.uniform_index(m), c = rng.uniform_index(m);
        if (a == b || b == c || a == c) continue;
        SimilarityTransform hyp;
        try {
            hyp = umeyama({matches[a].p2, matches[b].p2, matches[c].p2},
                          {matches[a].p1, matches[b].p1, matches[c].p1}, true);
        } catch (const DegenerateConfiguration&) {
            continue;
        }
        // residual noise grows with the map-to-map scale (noise in p2 is
        // multiplied by hyp.scale), so widen the gate accordingly
        double tol = ransac.inlier_tol * std::sqrt((1.0 + hyp.scale * hyp.scale) / 2.0);
        std::vector<int> inliers;
        for (size_t i = 0; i < m; ++i) {
            if ((hyp.apply(matches[i].p2) - matches[i].p1).norm() <= tol)
                inliers.push_back(static_cast<int>(i));
        }
        if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
    }

    if (best_inliers.size() < 0.30 * m)
        throw AlignmentFailure("align_views: inlier ratio below 30%");

    std::vector<Vec3> src, dst;
    src.reserve(best_inliers.size());
    for (int i : best_inliers) {
        src.push_back(matches[i].p2);
        dst.push_back(matches[i].p1);
    }
    SimilarityTransform sim = umeyama(src, dst, true);

    FusedCloud cloud;
    cloud.inlier_count = best_inliers.size();
    cloud.s1 = fiducial_scale_estimate(pm1.fiducial_obs, fiducial_model);
    cloud.s2 = cloud.s1 / sim.scale;

    int cam1_idx = pm1.camera.pose.child_frame.index;
    int cam2_idx = pm2.camera.pose.child_frame.index;
    cloud.t_cam2_cam1 = Pose::make(sim.rotation, sim.translation / cloud.s1,
                                   FrameId::camera(cam1_idx), FrameId::camera(cam2_idx));

    const double inv_s1 = 1.0 / cloud.s1;
    for (size_t i = 0; i < pm1.points.size(); ++i) {
        if (!pm1.valid[i]) continue;
        cloud.points.push_back(pm1.points[i] * inv_s1);
        cloud.colors.push_back(pm1.colors[i]);
        cloud.source_view.push_back(0);
    }
    for (size_t i = 0; i < pm2.points.size(); ++i) {
        if (!pm2.valid[i]) continue;
        cloud.points.push_back(sim.apply(pm2.points[i]) * inv_s1);
        cloud.colors.push_back(pm2.colors[i]);
        cloud.source_view.push_back(1);
    }
    return cloud;
}

Pose camera_to_task(const std::vector<Vec3>& fiducial_obs_cam, const PointMap& pm,
                    const std::vector<Vec3>& fiducial_model) {
    if (fiducial_obs_cam.size() < 3)
        throw DegenerateConfiguration("camera_to_task: need 3 fiducials");
    SimilarityTransform t = umeyama(fiducial_obs_cam, fiducial_model, false);
    int cam_idx = pm.camera.pose.child_frame.index;
    return Pose::make(t.rotation, t.translation, FrameId::task(), FrameId::camera(cam_idx));
}

void export_cloud(const FusedCloud& cloud, const std::string& points_path,
                  const std::string& meta_path) {
    std::ofstream pf(points_path);
    if (!pf) throw MissingArtifact("cannot write " + points_path);
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const Vec3& c = cloud.colors[i];
        pf << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << c.x() << ' ' << c.y() << ' '
           << c.z() << ' ' << cloud.source_view[i] << '\n';
    }
    std::ofstream mf(meta_path);
    if (!mf) throw MissingArtifact("cannot write " + meta_path);
    mf.precision(17);
    auto s = cloud.t_cam2_cam1.serialize();
    mf << "t_cam2_cam1 =";
    for (double v : s) mf << ' ' << v;
    mf << "\ns1 = " << cloud.s1 << "\ns2 = " << cloud.s2
       << "\ninliers = " << cloud.inlier_count << "\npoints = " << cloud.points.size() << '\n';
}

}  // namespace toolplay

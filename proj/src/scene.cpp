#include "swm/scene.hpp"

#include <cmath>

namespace swm {

MotionProfile parse_profile(const std::string& name) {
    if (name == "orbit") return MotionProfile::Orbit;
    if (name == "corridor") return MotionProfile::Corridor;
    if (name == "loop") return MotionProfile::Loop;
    throw ConfigError("unknown motion profile '" + name + "'");
}

namespace {

constexpr real kPi = real(3.14159265358979323846);

// Camera-to-world rotation for a camera at p looking at the target, with
// the usual x-right / y-down / z-forward camera frame.
geo::Mat3 look_at(const geo::Vec3& p, const geo::Vec3& target) {
    geo::Vec3 fwd = geo::normalize(geo::sub(target, p));
    geo::Vec3 world_up{0, 0, 1};
    if (std::abs(geo::dot(fwd, world_up)) > real(0.99)) world_up = {0, 1, 0};
    geo::Vec3 right = geo::normalize(geo::cross(fwd, world_up));
    geo::Vec3 down = geo::cross(fwd, right);
    // columns are the camera axes expressed in world coordinates
    return {right[0], down[0], fwd[0], right[1], down[1], fwd[1], right[2], down[2], fwd[2]};
}

CameraPose pose_at(const SceneConfig& cfg, std::int64_t t, std::int64_t n) {
    const real u = n > 1 ? real(t) / real(n - 1) : real(0);
    geo::Vec3 p;
    geo::Vec3 target{0, 0, 0};
    switch (cfg.profile) {
        case MotionProfile::Orbit: {
            // three quarters of a circle, never returning to the start
            const real theta = u * real(1.5) * kPi;
            p = {cfg.orbit_radius * std::cos(theta), cfg.orbit_radius * std::sin(theta),
                 real(0.8)};
            break;
        }
        case MotionProfile::Loop: {
            // full circle: the camera comes back next to frame 0
            const real theta = u * real(2) * kPi;
            p = {cfg.orbit_radius * std::cos(theta), cfg.orbit_radius * std::sin(theta),
                 real(0.8)};
            break;
        }
        case MotionProfile::Corridor: {
            p = {-cfg.orbit_radius + u * real(2) * cfg.orbit_radius, -cfg.orbit_radius, real(0.8)};
            break;
        }
    }
    CameraPose pose;
    pose.trans = p;
    pose.quat = geo::mat_to_quat(look_at(p, target));
    return pose;
}

}  // namespace

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
    if (cfg.n_frames < 1) throw ConfigError("gen_scene: n_frames must be >= 1");
    if (cfg.frame_size % cfg.patch != 0) throw ConfigError("gen_scene: patch must divide frame");

    SyntheticScene scene;
    scene.cfg = cfg;
    scene.seed = seed;

    Rng root(seed);
    Rng rng_features = root.fork(0);
    Rng rng_noise = cfg.noise_seed ? Rng(cfg.noise_seed) : root.fork(1);

    // world lattice with per-point feature vectors; a positive
    // texture_period tiles the same features across the lattice so that
    // distinct viewpoints can look alike
    const std::int64_t period = cfg.texture_period > 0 ? cfg.texture_period : cfg.lattice;
    std::vector<std::vector<real>> tile(
        static_cast<std::size_t>(period * period * period));
    for (auto& f : tile) {
        f.resize(static_cast<std::size_t>(cfg.channels));
        for (auto& v : f) v = static_cast<real>(rng_features.uniform(-1.0, 1.0));
    }
    std::vector<geo::Vec3> points;
    std::vector<std::vector<real>> feats;
    for (std::int64_t ix = 0; ix < cfg.lattice; ++ix) {
        for (std::int64_t iy = 0; iy < cfg.lattice; ++iy) {
            for (std::int64_t iz = 0; iz < cfg.lattice; ++iz) {
                auto coord = [&](std::int64_t i) {
                    return cfg.lattice > 1
                               ? -cfg.lattice_extent +
                                     real(2) * cfg.lattice_extent * real(i) / real(cfg.lattice - 1)
                               : real(0);
                };
                points.push_back({coord(ix), coord(iy), coord(iz)});
                const std::size_t idx = static_cast<std::size_t>(
                    (ix % period) * period * period + (iy % period) * period + iz % period);
                feats.push_back(tile[idx]);
            }
        }
    }

    const std::int64_t hw = cfg.frame_size;
    const real fx = real(hw) * real(0.8), fy = real(hw) * real(0.8);
    const real cx = real(hw) / 2, cy = real(hw) / 2;
    const std::int64_t grid = hw / cfg.patch;

    for (std::int64_t t = 0; t < cfg.n_frames; ++t) {
        CameraPose pose = pose_at(cfg, t, cfg.n_frames);
        scene.trajectory.push_back(pose);
        const geo::Mat3 r_cw = geo::quat_to_mat(pose.quat);
        const geo::Mat3 r_wc = geo::mat_transpose(r_cw);

        Tensor image = Tensor::zeros({hw, hw, cfg.channels});
        Tensor hits = Tensor::zeros({hw, hw, 1});
        // patch-cell depth accumulators
        Tensor cell_depth = Tensor::zeros({grid, grid});
        Tensor cell_hits = Tensor::zeros({grid, grid});

        for (std::size_t pi = 0; pi < points.size(); ++pi) {
            const geo::Vec3 xc = geo::mat_apply(r_wc, geo::sub(points[pi], pose.trans));
            if (xc[2] <= real(0.1)) continue;
            const real u = fx * xc[0] / xc[2] + cx;
            const real v = fy * xc[1] / xc[2] + cy;
            const auto px = static_cast<std::int64_t>(std::floor(u));
            const auto py = static_cast<std::int64_t>(std::floor(v));
            if (px < 0 || px >= hw || py < 0 || py >= hw) continue;
            for (std::int64_t ch = 0; ch < cfg.channels; ++ch) {
                image[(py * hw + px) * cfg.channels + ch] +=
                    feats[pi][static_cast<std::size_t>(ch)];
            }
            hits[py * hw + px] += 1;
            cell_depth.at(py / cfg.patch, px / cfg.patch) += xc[2];
            cell_hits.at(py / cfg.patch, px / cfg.patch) += 1;
        }
        // average accumulated features, then add seeded observation noise
        for (std::int64_t py = 0; py < hw; ++py) {
            for (std::int64_t px = 0; px < hw; ++px) {
                const real n = hits[py * hw + px];
                for (std::int64_t ch = 0; ch < cfg.channels; ++ch) {
                    auto& v = image[(py * hw + px) * cfg.channels + ch];
                    if (n > 0) v /= n;
                    v += static_cast<real>(rng_noise.normal(0.0, cfg.noise_std));
                }
            }
        }

        Frame frame;
        frame.image = std::move(image);
        frame.intrinsics = {fx, fy, cx, cy};
        frame.index = t;
        scene.frames.push_back(std::move(frame));

        // ground truth: per-cell depth (background where nothing lands),
        // pointmap by back-projecting cell centers at that depth
        GroundTruthFrame gtf;
        gtf.depth = Tensor::zeros({grid, grid});
        gtf.pointmap = Tensor::zeros({grid * grid, 3});
        for (std::int64_t gy = 0; gy < grid; ++gy) {
            for (std::int64_t gx = 0; gx < grid; ++gx) {
                const real depth = cell_hits.at(gy, gx) > 0
                                       ? cell_depth.at(gy, gx) / cell_hits.at(gy, gx)
                                       : cfg.background_depth;
                gtf.depth.at(gy, gx) = depth;
                const real uc = (real(gx) + real(0.5)) * real(cfg.patch);
                const real vc = (real(gy) + real(0.5)) * real(cfg.patch);
                const geo::Vec3 xc{(uc - cx) / fx * depth, (vc - cy) / fy * depth, depth};
                const geo::Vec3 xw = geo::add(geo::mat_apply(r_cw, xc), pose.trans);
                const std::int64_t tok = gy * grid + gx;
                gtf.pointmap.at(tok, 0) = xw[0];
                gtf.pointmap.at(tok, 1) = xw[1];
                gtf.pointmap.at(tok, 2) = xw[2];
            }
        }
        gtf.quat = geo::quat_tensor(pose.quat);
        gtf.trans = geo::vec3_tensor(pose.trans);
        scene.gt.push_back(std::move(gtf));
    }

    // trajectory continuity bound
    const real step_bound = cfg.max_translation_step > 0
                                ? cfg.max_translation_step
                                : real(2.05) * cfg.orbit_radius;
    for (std::size_t t = 1; t < scene.trajectory.size(); ++t) {
        const real step =
            geo::norm(geo::sub(scene.trajectory[t].trans, scene.trajectory[t - 1].trans));
        if (step > step_bound) {
            throw NumericError("gen_scene: trajectory step " + std::to_string(step) +
                               " exceeds the continuity bound");
        }
    }
    return scene;
}

}  // namespace swm

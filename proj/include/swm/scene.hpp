#pragma once

#include <string>
#include <vector>

#include "swm/backbone.hpp"
#include "swm/geometry.hpp"
#include "swm/pipeline.hpp"
#include "swm/rng.hpp"

namespace swm {

enum class MotionProfile { Orbit, Corridor, Loop };
MotionProfile parse_profile(const std::string& name);

struct SceneConfig {
    std::int64_t n_frames = 16;
    MotionProfile profile = MotionProfile::Loop;
    std::int64_t frame_size = 28;
    std::int64_t patch = 14;
    std::int64_t channels = 3;
    std::int64_t lattice = 6;       // world points per axis (lattice^3 total)
    real lattice_extent = real(1);  // lattice spans [-extent, extent]^3
    // 0 = every point gets a unique feature; k > 0 repeats features with
    // period k along each axis, producing visually aliased viewpoints
    std::int64_t texture_period = 0;
    real orbit_radius = real(4);
    real noise_std = real(0.02);
    // observation-noise stream; 0 derives it from the scene seed. Scenes
    // sharing a seed but differing here are re-renders of the same
    // geometry under fresh noise.
    std::uint64_t noise_seed = 0;
    real background_depth = real(8);
    real loop_closure_radius = real(0.5);  // loop profile must end this close to its start
    // trajectory continuity bound; 0 = auto (orbit diameter + slack)
    real max_translation_step = 0;
};

struct CameraPose {
    geo::Quat quat;   // camera-to-world rotation
    geo::Vec3 trans;  // camera position, meters
};

// Fixed 3-D lattice of feature-carrying points observed by a smooth
// camera path; frames are deterministic feature-grid projections with
// seeded noise, and ground truth comes from the same geometry.
struct SyntheticScene {
    SceneConfig cfg;
    std::uint64_t seed = 0;
    std::vector<Frame> frames;
    std::vector<GroundTruthFrame> gt;
    std::vector<CameraPose> trajectory;
};

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg);

}  // namespace swm

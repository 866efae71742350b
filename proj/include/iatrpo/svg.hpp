#pragma once

// SVG overlays of episode traces: course outline, goal discs and one
// polyline per agent. Single-agent replays are drawn dashed.

#include <iosfwd>
#include <vector>

#include "iatrpo/envs.hpp"
#include "iatrpo/rollout.hpp"

namespace iatrpo {

// `singles` holds one-agent traces (any roles) drawn dashed over `traces`.
void render_trajectories(const envs::EnvConfig& env, const std::vector<EpisodeTrace>& traces,
                         const std::vector<EpisodeTrace>& singles, std::ostream& out);

}  // namespace iatrpo

#pragma once

#include <filesystem>

#include "fsag/affordance.hpp"
#include "fsag/tensor.hpp"
#include "fsag/tracker.hpp"

namespace fsag::render {

// Heatmap stack over a grayscale depth background, one distinct color per
// finger, written as binary PPM (P6).
void write_overlay_ppm(const std::filesystem::path& path, const Tensor& depth,
                       const affordance::HeatmapStack& stack);

// Joint curves and per-finger residual curves from a rollout, as SVG.
void write_trajectory_svg(const std::filesystem::path& path,
                          const tracker::RolloutResult& result);

}  // namespace fsag::render

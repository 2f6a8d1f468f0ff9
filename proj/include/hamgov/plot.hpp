#pragma once

// Plain SVG figures from a telemetry log, no plotting dependency.

#include <string>
#include <vector>

#include "hamgov/navigator.hpp"

namespace hamgov {

/// Safety margin and the scaled desired Hamiltonian (2 / kp) H_d over time,
/// with the smallest margin marked.
std::string margin_svg(const std::vector<TelemetryRecord>& log, double kp);

/// True clearance d(p, O) and the sensed clearance at g over time.
std::string distance_svg(const std::vector<TelemetryRecord>& log);

/// Top view: obstacles, planned path (may be empty), vehicle and governor.
std::string trajectory_svg(const std::vector<TelemetryRecord>& log, const World& world,
                           const std::vector<Vec3>& path);

/// Writes margin.svg, distance.svg and trajectory.svg into dir and returns
/// their paths. All plot functions throw std::runtime_error on an empty log.
std::vector<std::string> write_plots(const std::string& dir, const std::vector<TelemetryRecord>& log, double kp,
                                     const World& world, const std::vector<Vec3>& path);

}  // namespace hamgov

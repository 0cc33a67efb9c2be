#pragma once

#include <string>
#include <vector>

#include "vpx/geometry.hpp"

namespace vpx {

// Detection-rate metrics over aligned [frame][joint] arrays. Values are
// fractions in [0,1]; tables render them as percentages.

// PCKh: 2D error within alpha times the frame's head-neck pixel distance,
// inclusive at the boundary. Frames whose head segment is degenerate
// (< 1e-9 px) are skipped for every joint.
std::vector<double> pckh_per_joint(const std::vector<std::vector<Vec2>>& pred,
                                   const std::vector<std::vector<Vec2>>& gt, int head, int neck,
                                   double alpha);

// Fraction of joints with 3D error <= threshold_mm, inclusive.
std::vector<double> within_distance_per_joint(const std::vector<std::vector<Vec3>>& pred,
                                              const std::vector<std::vector<Vec3>>& gt,
                                              double threshold_mm);

constexpr double kTenCmMm = 100.0;

// Unweighted mean over joints.
double mean_average_precision(const std::vector<double>& per_joint);

struct MetricTable {
  std::vector<std::string> joint_names;
  std::vector<double> per_joint;
  // Named rows: body-part groups found in the joint names, then Upper Body,
  // Lower Body and Full Body. Group values are means over member joints.
  std::vector<std::pair<std::string, double>> groups;
  int frames = 0;
};

MetricTable build_table(const std::vector<std::string>& joint_names,
                        const std::vector<double>& per_joint, int frames);

std::string render_table(const MetricTable& table, const std::string& title);

}  // namespace vpx

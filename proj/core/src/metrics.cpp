#include "vpx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vpx/common.hpp"

namespace vpx {

namespace {

void check_aligned(std::size_t pf, std::size_t gf, std::size_t pj, std::size_t gj) {
  check(pf == gf, "prediction and ground truth differ in frame count: " + std::to_string(pf) +
                      " vs " + std::to_string(gf));
  check(pf > 0, "cannot score an empty frame set");
  check(pj == gj && pj > 0, "prediction and ground truth differ in joint count");
}

struct GroupDef {
  const char* label;
  const char* needle;
  bool upper;
};

// Row order follows the usual body-part listing.
constexpr GroupDef kGroups[] = {
    {"Head", "head", true},    {"Neck", "neck", true},   {"Shoulders", "shoulder", true},
    {"Elbows", "elbow", true}, {"Hands", "hand", true},  {"Torso", "torso", false},
    {"Hips", "hip", false},    {"Knees", "knee", false}, {"Feet", "foot", false},
};

}  // namespace

std::vector<double> pckh_per_joint(const std::vector<std::vector<Vec2>>& pred,
                                   const std::vector<std::vector<Vec2>>& gt, int head, int neck,
                                   double alpha) {
  check_aligned(pred.size(), gt.size(), pred[0].size(), gt[0].size());
  const int joints = static_cast<int>(gt[0].size());
  check(head >= 0 && head < joints && neck >= 0 && neck < joints && head != neck,
        "head/neck indices are invalid for this joint set");
  check(alpha > 0.0, "pckh alpha must be positive");

  std::vector<double> hits(joints, 0.0);
  int used = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    check(pred[f].size() == gt[f].size() && static_cast<int>(gt[f].size()) == joints,
          "frame " + std::to_string(f) + " has a mismatched joint count");
    const double du = gt[f][head].u - gt[f][neck].u;
    const double dv = gt[f][head].v - gt[f][neck].v;
    const double seg = std::sqrt(du * du + dv * dv);
    if (seg < 1e-9) continue;
    const double limit = alpha * seg;
    ++used;
    for (int j = 0; j < joints; ++j) {
      const double eu = pred[f][j].u - gt[f][j].u;
      const double ev = pred[f][j].v - gt[f][j].v;
      if (std::sqrt(eu * eu + ev * ev) <= limit) hits[j] += 1.0;
    }
  }
  check(used > 0, "every frame has a degenerate head segment; pckh undefined");
  for (double& h : hits) h /= used;
  return hits;
}

std::vector<double> within_distance_per_joint(const std::vector<std::vector<Vec3>>& pred,
                                              const std::vector<std::vector<Vec3>>& gt,
                                              double threshold_mm) {
  check_aligned(pred.size(), gt.size(), pred[0].size(), gt[0].size());
  check(threshold_mm > 0.0, "distance threshold must be positive");
  const int joints = static_cast<int>(gt[0].size());
  std::vector<double> hits(joints, 0.0);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    check(pred[f].size() == gt[f].size() && static_cast<int>(gt[f].size()) == joints,
          "frame " + std::to_string(f) + " has a mismatched joint count");
    for (int j = 0; j < joints; ++j) {
      if ((pred[f][j] - gt[f][j]).norm() <= threshold_mm) hits[j] += 1.0;
    }
  }
  for (double& h : hits) h /= static_cast<double>(gt.size());
  return hits;
}

double mean_average_precision(const std::vector<double>& per_joint) {
  check(!per_joint.empty(), "cannot average an empty joint set");
  double s = 0.0;
  for (double v : per_joint) s += v;
  return s / static_cast<double>(per_joint.size());
}

MetricTable build_table(const std::vector<std::string>& joint_names,
                        const std::vector<double>& per_joint, int frames) {
  check(joint_names.size() == per_joint.size() && !per_joint.empty(),
        "joint names and values differ in count");
  MetricTable t;
  t.joint_names = joint_names;
  t.per_joint = per_joint;
  t.frames = frames;

  double upper_sum = 0.0, lower_sum = 0.0, full_sum = 0.0;
  int upper_n = 0, lower_n = 0;
  for (const GroupDef& g : kGroups) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t j = 0; j < joint_names.size(); ++j) {
      if (joint_names[j].find(g.needle) == std::string::npos) continue;
      sum += per_joint[j];
      ++n;
    }
    if (n == 0) continue;
    t.groups.emplace_back(g.label, sum / n);
    (g.upper ? upper_sum : lower_sum) += sum;
    (g.upper ? upper_n : lower_n) += n;
    full_sum += sum;
  }
  if (upper_n > 0) t.groups.emplace_back("Upper Body", upper_sum / upper_n);
  if (lower_n > 0) t.groups.emplace_back("Lower Body", lower_sum / lower_n);
  t.groups.emplace_back("Full Body", full_sum / static_cast<double>(upper_n + lower_n));
  check(upper_n + lower_n == static_cast<int>(per_joint.size()),
        "some joint names match no body-part group");
  return t;
}

std::string render_table(const MetricTable& table, const std::string& title) {
  std::ostringstream os;
  os << title << " (" << table.frames << " frames)\n";
  char buf[96];
  for (std::size_t j = 0; j < table.joint_names.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "  %-16s %6.1f\n", table.joint_names[j].c_str(),
                  100.0 * table.per_joint[j]);
    os << buf;
  }
  os << "  ----\n";
  for (const auto& [label, value] : table.groups) {
    std::snprintf(buf, sizeof(buf), "  %-16s %6.1f\n", label.c_str(), 100.0 * value);
    os << buf;
  }
  return os.str();
}

}  // namespace vpx

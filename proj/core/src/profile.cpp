#include "vpx/profile.hpp"

namespace vpx {

Profile Profile::paper() {
  Profile p;
  p.name = "paper";
  return p;
}

Profile Profile::tiny() {
  Profile p;
  p.name = "tiny";
  p.pnet_input = 96;
  p.pnet_margin = 12;
  p.stem_channels = 16;
  p.hourglass_width = 16;
  p.hourglass_depth = 2;
  p.grid_xy = 16;
  p.grid_bins = 24;
  p.grid_crop_bins = 20;
  p.vnet_div = 8;
  p.holistic_xy = 48;
  p.synth_dims = 108;
  p.synth_focal = 107.14;
  p.bone_scale = 0.72;
  p.depth_min_mm = 1800.0;
  p.depth_max_mm = 2400.0;
  return p;
}

Profile Profile::by_name(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "tiny") return tiny();
  fail("unknown profile \"" + name + "\", expected paper or tiny");
}

}  // namespace vpx

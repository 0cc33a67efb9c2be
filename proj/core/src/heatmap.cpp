#include "vpx/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vpx/common.hpp"

namespace vpx {

Tensor gaussian_target_2d(double u, double v, int width, int height, double sigma) {
  check(width > 0 && height > 0, "target grid extents must be positive");
  check(sigma > 0.0, "sigma must be positive");
  Tensor t({height, width});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::size_t i = 0;
  for (int row = 0; row < height; ++row) {
    const double dv = row - v;
    for (int col = 0; col < width; ++col) {
      const double du = col - u;
      t.data[i++] = static_cast<float>(std::exp(-(du * du + dv * dv) * inv));
    }
  }
  return t;
}

Tensor gaussian_target_3d(double x, double y, double z, int dim_x, int dim_y, int dim_d,
                          double sigma) {
  check(dim_x > 0 && dim_y > 0 && dim_d > 0, "target grid extents must be positive");
  check(sigma > 0.0, "sigma must be positive");
  Tensor t({dim_x, dim_y, dim_d});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::size_t i = 0;
  for (int xi = 0; xi < dim_x; ++xi) {
    const double dx = xi - x;
    for (int yi = 0; yi < dim_y; ++yi) {
      const double dy = yi - y;
      const double dxy = dx * dx + dy * dy;
      for (int di = 0; di < dim_d; ++di) {
        const double dz = di - z;
        t.data[i++] = static_cast<float>(std::exp(-(dxy + dz * dz) * inv));
      }
    }
  }
  return t;
}

Peak decode_argmax(const Tensor& channel) {
  check(channel.rank() >= 1, "cannot decode an empty channel");
  check(channel.numel() > 0, "cannot decode an empty channel");
  std::size_t best = 0;
  for (std::size_t i = 1; i < channel.data.size(); ++i) {
    if (channel.data[i] > channel.data[best]) best = i;
  }
  Peak p;
  p.value = channel.data[best];
  p.index.resize(channel.rank());
  std::size_t rem = best;
  for (int a = channel.rank() - 1; a >= 0; --a) {
    p.index[a] = static_cast<int>(rem % channel.shape[a]);
    rem /= channel.shape[a];
  }
  return p;
}

void write_pgm(const std::string& path, const Tensor& channel) {
  check(channel.rank() == 2, "pgm export needs a rank-2 channel, got rank " +
                                 std::to_string(channel.rank()));
  std::ofstream os(path, std::ios::binary);
  check(os.is_open(), "cannot open " + path + " for writing");
  os << "P5\n" << channel.shape[1] << " " << channel.shape[0] << "\n255\n";
  for (float v : channel.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    os.put(static_cast<char>(static_cast<int>(std::lround(c * 255.0f))));
  }
  os.close();
  check(os.good(), "write to " + path + " failed");
}

}  // namespace vpx

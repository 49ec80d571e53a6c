#include "support.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

namespace testing {

TempDir::TempDir() {
  static std::mt19937_64 rng(std::chrono::steady_clock::now().time_since_epoch().count());
  path_ = std::filesystem::temp_directory_path() / ("retarget-test-" + std::to_string(rng()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

torch::Tensor two_scale_texture(int64_t height, int64_t width) {
  auto img = torch::empty({3, height, width}, torch::kFloat32);
  auto a = img.accessor<float, 3>();
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      const double coarse = ((x / 16 + y / 16) % 2 == 0) ? 1.0 : 0.0;
      const double fine = std::sin(x * std::numbers::pi / 2.0) * std::sin(y * std::numbers::pi / 2.0 + 0.7) > 0 ? 1.0 : 0.0;
      const double rgb[3] = {0.2 + 0.6 * coarse, 0.3 + 0.4 * fine, 0.5 + 0.3 * coarse * fine};
      for (int c = 0; c < 3; ++c) a[c][y][x] = static_cast<float>(std::round(rgb[c] * 255.0) / 255.0);
    }
  }
  return img;
}

retarget::ModelConfig tiny_config() {
  retarget::ModelConfig c;
  c.generator.depth = 2;
  c.generator.base_channels = 8;
  c.generator.max_channels = 16;
  c.generator.residual_blocks = 1;
  c.discriminator.num_scales = 2;
  c.discriminator.channels = 8;
  c.train.iterations = 10;
  c.train.curriculum_iters = 4;
  c.train.crop_min = 24;
  c.train.crop_max = 32;
  c.train.snapshot_every = 0;
  c.train.transform_ranges.max_scale_dev = 0.3;
  return c;
}

retarget::Homography random_homography(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  for (;;) {
    retarget::Homography::Matrix m{{{1 + u(rng), u(rng), u(rng)},
                                    {u(rng), 1 + u(rng), u(rng)},
                                    {0.3 * u(rng), 0.3 * u(rng), 1.0}}};
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (std::abs(det) > 0.05) return retarget::Homography::from_matrix(m);
  }
}

Mat3 multiply_extended(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      long double s = 0;
      for (int k = 0; k < 3; ++k) s += static_cast<long double>(a[r][k]) * static_cast<long double>(b[k][c]);
      out[r][c] = static_cast<double>(s);
    }
  }
  return out;
}

Mat3 gauss_jordan_inverse(const Mat3& m) {
  long double aug[3][6];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      aug[r][c] = m[r][c];
      aug[r][c + 3] = r == c ? 1.0L : 0.0L;
    }
  }
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
    }
    for (int c = 0; c < 6; ++c) std::swap(aug[col][c], aug[pivot][c]);
    const long double p = aug[col][col];
    for (int c = 0; c < 6; ++c) aug[col][c] /= p;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const long double f = aug[r][col];
      for (int c = 0; c < 6; ++c) aug[r][c] -= f * aug[col][c];
    }
  }
  Mat3 out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r][c] = static_cast<double>(aug[r][c + 3]);
  }
  return out;
}

Mat3 canonical(const Mat3& m) {
  Mat3 out = m;
  for (auto& row : out) {
    for (auto& v : row) v /= m[2][2];
  }
  return out;
}

Mat3 corners_least_squares(const std::array<retarget::Point2, 4>& src, const std::array<retarget::Point2, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.colPivHouseholderQr().solve(b);
  return {{{h(0), h(1), h(2)}, {h(3), h(4), h(5)}, {h(6), h(7), 1.0}}};
}

double max_abs_diff(const Mat3& a, const Mat3& b) {
  double m = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(a[r][c] - b[r][c]));
  }
  return m;
}

torch::Tensor warp_reference(const torch::Tensor& feature, const retarget::OutputGeometry& geo) {
  const auto f = feature.to(torch::kFloat64).contiguous();
  const int64_t C = f.size(0), H = f.size(1), W = f.size(2);
  auto out = torch::zeros({C, geo.height, geo.width}, torch::kFloat64);
  auto fa = f.accessor<double, 3>();
  auto oa = out.accessor<double, 3>();
  const auto& m = geo.transform.matrix();
  auto norm = [](int64_t i, int64_t n) { return n > 1 ? 2.0 * i / (n - 1) - 1.0 : 0.0; };
  auto pix = [](double v, int64_t n) { return n > 1 ? (v + 1.0) * (n - 1) / 2.0 : 0.0; };
  for (int64_t r = 0; r < geo.height; ++r) {
    for (int64_t c = 0; c < geo.width; ++c) {
      const double x = norm(c, geo.width), y = norm(r, geo.height);
      const double w = m[2][0] * x + m[2][1] * y + m[2][2];
      if (std::abs(w) < 1e-12) continue;
      const double sx = pix((m[0][0] * x + m[0][1] * y + m[0][2]) / w, W);
      const double sy = pix((m[1][0] * x + m[1][1] * y + m[1][2]) / w, H);
      const double x0 = std::floor(sx), y0 = std::floor(sy);
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int64_t xi = static_cast<int64_t>(x0) + dx, yi = static_cast<int64_t>(y0) + dy;
          if (xi < 0 || yi < 0 || xi >= W || yi >= H) continue;
          const double wt = (dx ? sx - x0 : 1 - (sx - x0)) * (dy ? sy - y0 : 1 - (sy - y0));
          for (int64_t ch = 0; ch < C; ++ch) oa[ch][r][c] += wt * fa[ch][yi][xi];
        }
      }
    }
  }
  return out;
}

torch::Tensor area_resize_reference(const torch::Tensor& image, int64_t out_h, int64_t out_w) {
  const auto f = image.to(torch::kFloat64).contiguous();
  const int64_t C = f.size(0), H = f.size(1), W = f.size(2);
  const double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
  auto overlap = [](double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); };
  auto out = torch::zeros({C, out_h, out_w}, torch::kFloat64);
  auto fa = f.accessor<double, 3>();
  auto oa = out.accessor<double, 3>();
  for (int64_t oy = 0; oy < out_h; ++oy) {
    for (int64_t ox = 0; ox < out_w; ++ox) {
      for (int64_t y = 0; y < H; ++y) {
        const double wy = overlap(oy * sy, (oy + 1) * sy, y, y + 1);
        if (wy == 0) continue;
        for (int64_t x = 0; x < W; ++x) {
          const double wx = overlap(ox * sx, (ox + 1) * sx, x, x + 1);
          if (wx == 0) continue;
          for (int64_t c = 0; c < C; ++c) oa[c][oy][ox] += wy * wx * fa[c][y][x] / (sy * sx);
        }
      }
    }
  }
  return out;
}

double brute_force_nn(const torch::Tensor& y, const torch::Tensor& x, int64_t patch, int64_t stride) {
  const auto ya = y.to(torch::kFloat64).contiguous();
  const auto xa = x.to(torch::kFloat64).contiguous();
  auto a = ya.accessor<double, 3>();
  auto b = xa.accessor<double, 3>();
  const int64_t C = ya.size(0);
  double total = 0;
  int64_t count = 0;
  for (int64_t qy = 0; qy + patch <= ya.size(1); qy += stride) {
    for (int64_t qx = 0; qx + patch <= ya.size(2); qx += stride) {
      double best = std::numeric_limits<double>::infinity();
      for (int64_t ry = 0; ry + patch <= xa.size(1); ry += stride) {
        for (int64_t rx = 0; rx + patch <= xa.size(2); rx += stride) {
          double d = 0;
          for (int64_t c = 0; c < C; ++c) {
            for (int64_t i = 0; i < patch; ++i) {
              for (int64_t j = 0; j < patch; ++j) {
                const double e = a[c][qy + i][qx + j] - b[c][ry + i][rx + j];
                d += e * e;
              }
            }
          }
          best = std::min(best, d);
        }
      }
      total += std::sqrt(best);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace testing

#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <ATen/Parallel.h>

#include "errors.hpp"

namespace retarget {
namespace {

using Matrix = Homography::Matrix;

double det3(const Matrix& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

std::string describe(const Matrix& m) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (int r = 0; r < 3; ++r) {
    os << (r ? "; " : "") << m[r][0] << ", " << m[r][1] << ", " << m[r][2];
  }
  os << "]";
  return os.str();
}

// Twice the signed area of triangle abc.
double cross(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

void require_no_collinear_triple(std::span<const Point2, 4> pts, const char* which) {
  double extent = 0.0;
  for (const auto& p : pts) {
    for (const auto& q : pts) {
      extent = std::max({extent, std::abs(p.x - q.x), std::abs(p.y - q.y)});
    }
  }
  const double tol = 1e-12 * std::max(extent * extent, 1e-300);
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (!(std::abs(cross(pts[i], pts[j], pts[k])) > tol)) {
          throw DegenerateTransform(std::string("from_corners: three collinear points in ") +
                                    which + " quad");
        }
      }
    }
  }
}

template <typename T>
void warp_forward_kernel(const T* in, T* out, int64_t planes, int64_t in_plane, int64_t out_plane,
                         const int64_t* idx, const double* w) {
  at::parallel_for(0, planes, 1, [&](int64_t begin, int64_t end) {
    for (int64_t plane = begin; plane < end; ++plane) {
      const T* src = in + plane * in_plane;
      T* dst = out + plane * out_plane;
      for (int64_t p = 0; p < out_plane; ++p) {
        T acc = 0;
        for (int k = 0; k < 4; ++k) {
          const int64_t i = idx[p * 4 + k];
          if (i >= 0) acc += static_cast<T>(w[p * 4 + k]) * src[i];
        }
        dst[p] = acc;
      }
    }
  });
}

template <typename T>
void warp_backward_kernel(const T* grad_out, T* grad_in, int64_t planes, int64_t in_plane,
                          int64_t out_plane, const int64_t* idx, const double* w) {
  at::parallel_for(0, planes, 1, [&](int64_t begin, int64_t end) {
    for (int64_t plane = begin; plane < end; ++plane) {
      const T* src = grad_out + plane * out_plane;
      T* dst = grad_in + plane * in_plane;
      for (int64_t p = 0; p < out_plane; ++p) {
        const T g = src[p];
        for (int k = 0; k < 4; ++k) {
          const int64_t i = idx[p * 4 + k];
          if (i >= 0) dst[i] += static_cast<T>(w[p * 4 + k]) * g;
        }
      }
    }
  });
}

torch::Tensor run_forward(const torch::Tensor& input, const torch::Tensor& indices,
                          const torch::Tensor& weights, int64_t out_h, int64_t out_w) {
  const auto in = input.contiguous();
  const int64_t planes = in.size(0) * in.size(1);
  const int64_t in_plane = in.size(2) * in.size(3);
  auto out = torch::empty({in.size(0), in.size(1), out_h, out_w}, in.options());
  AT_DISPATCH_FLOATING_TYPES(in.scalar_type(), "warp_forward", [&] {
    warp_forward_kernel<scalar_t>(in.data_ptr<scalar_t>(), out.data_ptr<scalar_t>(), planes,
                                  in_plane, out_h * out_w, indices.data_ptr<int64_t>(),
                                  weights.data_ptr<double>());
  });
  return out;
}

class WarpFunction : public torch::autograd::Function<WarpFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& input,
                               const torch::Tensor& indices, const torch::Tensor& weights,
                               int64_t out_h, int64_t out_w) {
    ctx->save_for_backward({indices, weights});
    ctx->saved_data["in_h"] = input.size(2);
    ctx->saved_data["in_w"] = input.size(3);
    return run_forward(input, indices, weights, out_h, out_w);
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_outputs) {
    const auto saved = ctx->get_saved_variables();
    const auto& indices = saved[0];
    const auto& weights = saved[1];
    const int64_t in_h = ctx->saved_data["in_h"].toInt();
    const int64_t in_w = ctx->saved_data["in_w"].toInt();
    const auto grad_out = grad_outputs[0].contiguous();
    const int64_t planes = grad_out.size(0) * grad_out.size(1);
    const int64_t out_plane = grad_out.size(2) * grad_out.size(3);
    auto grad_in = torch::zeros({grad_out.size(0), grad_out.size(1), in_h, in_w}, grad_out.options());
    AT_DISPATCH_FLOATING_TYPES(grad_out.scalar_type(), "warp_backward", [&] {
      warp_backward_kernel<scalar_t>(grad_out.data_ptr<scalar_t>(), grad_in.data_ptr<scalar_t>(),
                                     planes, in_h * in_w, out_plane, indices.data_ptr<int64_t>(),
                                     weights.data_ptr<double>());
    });
    return {grad_in, torch::Tensor(), torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

// Snaps coordinates that are integral up to rounding noise so that the
// identity transform reproduces its input exactly.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-6 ? r : v;
}

}  // namespace

Homography Homography::from_matrix(const Matrix& m) {
  for (const auto& row : m) {
    for (double v : row) {
      if (!std::isfinite(v)) throw DegenerateTransform("homography has non-finite entries");
    }
  }
  const double det = det3(m);
  if (!(std::abs(det) >= kDegenerateDet)) {
    throw DegenerateTransform("homography is singular (|det| = " + std::to_string(std::abs(det)) +
                              "): " + describe(m));
  }
  const double s = m[2][2];
  if (!(std::abs(s) >= kDegenerateDet)) {
    throw DegenerateTransform("homography has no canonical form (m[2][2] ~ 0): " + describe(m));
  }
  Matrix c{};
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) c[r][k] = m[r][k] / s;
  }
  c[2][2] = 1.0;
  if (!(std::abs(det3(c)) >= kDegenerateDet)) {
    throw DegenerateTransform("homography is singular after canonicalization: " + describe(c));
  }
  return Homography(c);
}

Homography Homography::identity() {
  return Homography(Matrix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}});
}

Homography Homography::translation(double tx, double ty) {
  return from_matrix(Matrix{{{1, 0, tx}, {0, 1, ty}, {0, 0, 1}}});
}

Homography Homography::scaling(double sx, double sy) {
  return from_matrix(Matrix{{{sx, 0, 0}, {0, sy, 0}, {0, 0, 1}}});
}

double Homography::determinant() const noexcept { return det3(m_); }

bool Homography::is_identity(double tol) const noexcept {
  return approx_equal(identity(), tol);
}

bool Homography::apply(Point2 p, Point2& out) const noexcept {
  const double u = m_[0][0] * p.x + m_[0][1] * p.y + m_[0][2];
  const double v = m_[1][0] * p.x + m_[1][1] * p.y + m_[1][2];
  const double w = m_[2][0] * p.x + m_[2][1] * p.y + m_[2][2];
  if (!(std::abs(w) > 1e-12)) return false;
  out = {u / w, v / w};
  return std::isfinite(out.x) && std::isfinite(out.y);
}

bool Homography::approx_equal(const Homography& other, double tol) const noexcept {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(std::abs(m_[r][c] - other.m_[r][c]) <= tol)) return false;
    }
  }
  return true;
}

Homography compose(const Homography& a, const Homography& b) {
  Matrix p{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a(r, k) * b(k, c);
      p[r][c] = acc;
    }
  }
  return Homography::from_matrix(p);
}

Homography invert(const Homography& h) {
  const auto& m = h.matrix();
  const double det = det3(m);
  if (!(std::abs(det) >= Homography::kDegenerateDet)) {
    throw DegenerateTransform("cannot invert near-singular homography: " + describe(m));
  }
  Matrix adj{};
  adj[0][0] = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  adj[0][1] = m[0][2] * m[2][1] - m[0][1] * m[2][2];
  adj[0][2] = m[0][1] * m[1][2] - m[0][2] * m[1][1];
  adj[1][0] = m[1][2] * m[2][0] - m[1][0] * m[2][2];
  adj[1][1] = m[0][0] * m[2][2] - m[0][2] * m[2][0];
  adj[1][2] = m[0][2] * m[1][0] - m[0][0] * m[1][2];
  adj[2][0] = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  adj[2][1] = m[0][1] * m[2][0] - m[0][0] * m[2][1];
  adj[2][2] = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  for (auto& row : adj) {
    for (double& v : row) v /= det;
  }
  return Homography::from_matrix(adj);
}

Homography from_corners(std::span<const Point2, 4> src, std::span<const Point2, 4> dst) {
  require_no_collinear_triple(src, "source");
  require_no_collinear_triple(dst, "destination");

  // Eight equations in h00..h21 with h22 fixed to 1, solved by Gaussian
  // elimination with partial pivoting in extended precision.
  using Real = long double;
  std::array<std::array<Real, 9>, 8> a{};
  for (int i = 0; i < 4; ++i) {
    const Real x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    a[2 * i] = {x, y, 1, 0, 0, 0, -x * u, -y * u, u};
    a[2 * i + 1] = {0, 0, 0, x, y, 1, -x * v, -y * v, v};
  }
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (!(std::abs(a[pivot][col]) > 1e-18L)) {
      throw DegenerateTransform("from_corners: correspondence system is singular");
    }
    std::swap(a[col], a[pivot]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const Real f = a[r][col] / a[col][col];
      if (f == 0) continue;
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Matrix m{};
  for (int i = 0; i < 8; ++i) {
    m[i / 3][i % 3] = static_cast<double>(a[i][8] / a[i][i]);
  }
  m[2][2] = 1.0;
  return Homography::from_matrix(m);
}

void OutputGeometry::validate() const {
  if (height < 1 || width < 1) {
    throw ShapeError("output geometry must be at least 1x1, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

SampleGrid build_sample_grid(int64_t in_height, int64_t in_width, const OutputGeometry& geo,
                             PaddingMode padding) {
  geo.validate();
  if (in_height < 1 || in_width < 1) throw ShapeError("warp input must be at least 1x1");

  const int64_t count = geo.height * geo.width;
  SampleGrid grid{in_height, in_width, geo.height, geo.width,
                  torch::full({count, 4}, -1, torch::kInt64),
                  torch::zeros({count, 4}, torch::kFloat64)};
  auto* idx = grid.indices.data_ptr<int64_t>();
  auto* w = grid.weights.data_ptr<double>();

  for (int64_t oy = 0; oy < geo.height; ++oy) {
    const double ny = to_normalized(static_cast<double>(oy), geo.height);
    for (int64_t ox = 0; ox < geo.width; ++ox) {
      const int64_t p = oy * geo.width + ox;
      Point2 src;
      if (!geo.transform.apply({to_normalized(static_cast<double>(ox), geo.width), ny}, src)) {
        continue;
      }
      double px = snap(from_normalized(src.x, in_width));
      double py = snap(from_normalized(src.y, in_height));
      if (padding == PaddingMode::Clamp) {
        px = std::clamp(px, 0.0, static_cast<double>(in_width - 1));
        py = std::clamp(py, 0.0, static_cast<double>(in_height - 1));
      } else if (px <= -1.0 || py <= -1.0 || px >= static_cast<double>(in_width) ||
                 py >= static_cast<double>(in_height)) {
        continue;
      }
      const double fx0 = std::floor(px), fy0 = std::floor(py);
      const double ax = px - fx0, ay = py - fy0;
      const int64_t x0 = static_cast<int64_t>(fx0), y0 = static_cast<int64_t>(fy0);
      const std::array<int64_t, 4> xs{x0, x0 + 1, x0, x0 + 1};
      const std::array<int64_t, 4> ys{y0, y0, y0 + 1, y0 + 1};
      const std::array<double, 4> ws{(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      for (int k = 0; k < 4; ++k) {
        if (ws[k] == 0.0) continue;
        if (xs[k] < 0 || ys[k] < 0 || xs[k] >= in_width || ys[k] >= in_height) continue;
        idx[p * 4 + k] = ys[k] * in_width + xs[k];
        w[p * 4 + k] = ws[k];
      }
    }
  }
  return grid;
}

torch::Tensor warp(const torch::Tensor& feature, const OutputGeometry& geo, PaddingMode padding) {
  const bool batched = feature.dim() == 4;
  if (!batched && feature.dim() != 3) {
    throw ShapeError("warp expects a [C,H,W] or [N,C,H,W] tensor");
  }
  auto input = batched ? feature : feature.unsqueeze(0);
  if (input.size(1) < 1) throw ShapeError("warp input needs at least one channel");
  const auto grid = build_sample_grid(input.size(2), input.size(3), geo, padding);
  auto out = WarpFunction::apply(input, grid.indices, grid.weights, geo.height, geo.width);
  return batched ? out : out.squeeze(0);
}

}  // namespace retarget

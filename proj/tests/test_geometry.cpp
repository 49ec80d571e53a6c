#include "doctest_torch.hpp"

#include <cmath>
#include <random>

#include "errors.hpp"
#include "geometry.hpp"
#include "support.hpp"

using namespace retarget;
using testing::Mat3;

namespace {

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

std::array<Point2, 4> unit_square() { return {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}; }

double reprojection_error(const Homography& h, const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
  double e = 0;
  for (int i = 0; i < 4; ++i) {
    Point2 p;
    REQUIRE(h.apply(src[i], p));
    e = std::max({e, std::abs(p.x - dst[i].x), std::abs(p.y - dst[i].y)});
  }
  return e;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("identity is the canonical unit matrix") {
    CHECK(Homography::identity().matrix() == identity3());
    CHECK(Homography::identity().is_identity());
    CHECK(invert(Homography::identity()).matrix() == identity3());
  }

  TEST_CASE("identity is neutral under compose") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
      const auto h = testing::random_homography(rng);
      CHECK(compose(Homography::identity(), h).approx_equal(h, 1e-15));
      CHECK(compose(h, Homography::identity()).approx_equal(h, 1e-15));
    }
  }

  TEST_CASE("inverse translations and scalings cancel") {
    CHECK(compose(Homography::translation(0.1, 0), Homography::translation(-0.1, 0)).is_identity(1e-15));
    CHECK(compose(Homography::scaling(2, 2), Homography::scaling(0.5, 0.5)).is_identity(1e-15));
  }

  TEST_CASE("compose matches an extended-precision product") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
      const auto a = testing::random_homography(rng, 0.5);
      const auto b = testing::random_homography(rng, 0.5);
      const auto expected = testing::canonical(testing::multiply_extended(a.matrix(), b.matrix()));
      CHECK(testing::max_abs_diff(compose(a, b).matrix(), expected) < 1e-12);
    }
  }

  TEST_CASE("compose rejects a near-singular product") {
    const auto tiny = Homography::scaling(1e-4, 1e-4);
    CHECK_THROWS_AS(compose(tiny, tiny), DegenerateTransform);
  }

  TEST_CASE("canonical form") {
    const auto h = Homography::from_matrix({{{2, 0, 0}, {0, 4, 2}, {0.2, 0, 2}}});
    CHECK(h(2, 2) == 1.0);
    CHECK(h(1, 1) == doctest::Approx(2.0));
    CHECK_THROWS_AS(Homography::from_matrix({{{1, 2, 3}, {2, 4, 6}, {0, 0, 1}}}), DegenerateTransform);
    CHECK_THROWS_AS(Homography::from_matrix({{{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}}), DegenerateTransform);
  }

  TEST_CASE("invert of an axis scale") {
    const auto inv = invert(Homography::from_matrix({{{2, 0, 0}, {0, 1, 0}, {0, 0, 1}}}));
    CHECK(testing::max_abs_diff(inv.matrix(), {{{0.5, 0, 0}, {0, 1, 0}, {0, 0, 1}}}) < 1e-15);
  }

  TEST_CASE("invert round trip against Gauss-Jordan over 1000 homographies") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
      const auto h = testing::random_homography(rng, 0.6);
      const auto inv = invert(h);
      CHECK(inv(2, 2) == 1.0);
      CHECK(testing::max_abs_diff(compose(h, inv).matrix(), identity3()) < 1e-9);
      CHECK(testing::max_abs_diff(inv.matrix(), testing::canonical(testing::gauss_jordan_inverse(h.matrix()))) < 1e-9);
    }
  }

  TEST_CASE("from_corners: square to itself and to a shifted square") {
    const auto sq = unit_square();
    CHECK(from_corners(sq, sq).is_identity(1e-12));
    std::array<Point2, 4> shifted;
    for (int i = 0; i < 4; ++i) shifted[i] = {sq[i].x + 0.5, sq[i].y};
    CHECK(from_corners(sq, shifted).approx_equal(Homography::translation(0.5, 0), 1e-12));
  }

  TEST_CASE("from_corners agrees with a least-squares solve on random convex quads") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    const std::array<Point2, 4> src{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
    for (int i = 0; i < 100; ++i) {
      std::array<Point2, 4> dst;
      for (int k = 0; k < 4; ++k) dst[k] = {src[k].x * 0.8 + jitter(rng), src[k].y * 0.8 + jitter(rng)};
      const auto h = from_corners(src, dst);
      CHECK(reprojection_error(h, src, dst) < 1e-9);
      CHECK(testing::max_abs_diff(h.matrix(), testing::corners_least_squares(src, dst)) < 1e-9);
    }
  }

  TEST_CASE("from_corners rejects collinear points") {
    const std::array<Point2, 4> bad{{{0, 0}, {1, 1}, {2, 2}, {0, 1}}};
    CHECK_THROWS_AS(from_corners(unit_square(), bad), DegenerateTransform);
    CHECK_THROWS_AS(from_corners(bad, unit_square()), DegenerateTransform);
  }

  TEST_CASE("OutputGeometry rejects non-positive dims") {
    CHECK_THROWS_AS((OutputGeometry{0, 4, Homography::identity()}.validate()), ShapeError);
    CHECK_THROWS_AS((OutputGeometry{4, -1, Homography::identity()}.validate()), ShapeError);
  }

  TEST_CASE("normalized coordinates map corner pixels to -1 and +1") {
    CHECK(to_normalized(0, 9) == -1.0);
    CHECK(to_normalized(8, 9) == 1.0);
    CHECK(from_normalized(0.0, 9) == 4.0);
    CHECK(to_normalized(0, 1) == 0.0);
  }

  TEST_CASE("warp with identity transform returns the input exactly") {
    torch::manual_seed(0);
    const auto f = torch::rand({4, 7, 9});
    const auto out = warp(f, {7, 9, Homography::identity()});
    CHECK(torch::equal(out, f));
  }

  TEST_CASE("warp of a constant stays constant when sampling in bounds") {
    const auto f = torch::full({2, 8, 8}, 0.37, torch::kFloat64);
    const auto h = Homography::from_matrix({{{0.7, 0.1, 0.05}, {-0.05, 0.8, 0}, {0.05, 0.02, 1}}});
    const auto out = warp(f, {11, 13, h});
    CHECK((out - 0.37).abs().max().item<double>() < 1e-12);
  }

  TEST_CASE("warp matches a loop reference") {
    std::mt19937_64 rng(5);
    torch::manual_seed(5);
    const auto f = torch::rand({3, 10, 12}, torch::kFloat64);
    for (int i = 0; i < 10; ++i) {
      const OutputGeometry geo{9 + i, 14 - i, testing::random_homography(rng, 0.4)};
      const auto out = warp(f, geo);
      CHECK(out.sizes() == torch::IntArrayRef({3, geo.height, geo.width}));
      CHECK((out - testing::warp_reference(f, geo)).abs().max().item<double>() < 1e-5);
    }
  }

  TEST_CASE("warp samples outside the input are zero; clamp padding repeats the edge") {
    const auto f = torch::ones({1, 4, 4});
    const OutputGeometry far{4, 4, Homography::translation(5, 0)};
    CHECK(warp(f, far).abs().max().item<float>() == 0.0f);
    CHECK(warp(f, far, PaddingMode::Clamp).min().item<float>() == 1.0f);
  }

  TEST_CASE("warp is linear in the feature values") {
    torch::manual_seed(6);
    std::mt19937_64 rng(6);
    const auto a = torch::rand({2, 8, 8}, torch::kFloat64);
    const auto b = torch::rand({2, 8, 8}, torch::kFloat64);
    const OutputGeometry geo{9, 7, testing::random_homography(rng)};
    const auto lhs = warp(a * 0.3 - b * 1.7, geo);
    const auto rhs = warp(a, geo) * 0.3 - warp(b, geo) * 1.7;
    CHECK((lhs - rhs).abs().max().item<double>() < 1e-6);
  }

  TEST_CASE("warp output dims follow the geometry for batched input") {
    const auto f = torch::rand({2, 3, 8, 8});
    std::mt19937_64 rng(7);
    const OutputGeometry geo{5, 17, testing::random_homography(rng)};
    const auto out = warp(f, geo);
    CHECK(out.sizes() == torch::IntArrayRef({2, 3, 5, 17}));
    CHECK(torch::allclose(out[1], warp(f[1], geo)));
  }

  TEST_CASE("warp gradient matches central finite differences") {
    std::mt19937_64 rng(8);
    torch::manual_seed(8);
    const double step = 1e-3;
    double worst = 0;
    for (int t = 0; t < 10; ++t) {
      const OutputGeometry geo{8, 8, testing::random_homography(rng, 0.3)};
      const auto f = torch::rand({1, 8, 8}, torch::kFloat64).requires_grad_(true);
      const auto r = torch::randn({1, 8, 8}, torch::kFloat64);
      (warp(f, geo) * r).sum().backward();
      const auto analytic = f.grad().clone();
      auto base = f.detach().clone();
      auto flat = base.view({-1});
      auto numeric = torch::zeros_like(base);
      auto nflat = numeric.view({-1});
      for (int64_t i = 0; i < flat.numel(); ++i) {
        const double v = flat[i].item<double>();
        flat[i] = v + step;
        const double up = (warp(base, geo) * r).sum().item<double>();
        flat[i] = v - step;
        const double down = (warp(base, geo) * r).sum().item<double>();
        flat[i] = v;
        nflat[i] = (up - down) / (2 * step);
      }
      const double rel = ((analytic - numeric).abs() / (numeric.abs() + analytic.abs()).clamp_min(1e-8)).max().item<double>();
      worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("warp rejects tensors of the wrong rank") {
    CHECK_THROWS_AS(warp(torch::zeros({8, 8}), {8, 8, Homography::identity()}), ShapeError);
  }
}

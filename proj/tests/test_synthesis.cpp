#include "doctest_torch.hpp"

#include "errors.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "support.hpp"
#include "synthesis.hpp"
#include "training.hpp"

using namespace retarget;
using nlohmann::json;

namespace {

const Model& shared_model() {
  static const Model model = [] {
    Trainer t(testing::tiny_config(), testing::two_scale_texture(32, 32));
    t.step();
    return Model(t.to_checkpoint());
  }();
  return model;
}

SynthesisRequest parse(const char* text) { return SynthesisRequest::from_json(json::parse(text)); }

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("request parsing") {
    const auto s = parse(R"({"scale_x": 2})");
    CHECK(*s.scale_x == 2.0);
    CHECK_FALSE(s.scale_y);
    const auto c = parse(R"({"corners": [[0,0],[1,0],{"x":1,"y":1},[0,1]], "output_height": 8, "output_width": 9})");
    REQUIRE(c.corners);
    CHECK((*c.corners)[2].x == 1.0);
    CHECK(SynthesisRequest::from_json(c.to_json()).to_json() == c.to_json());

    for (const char* bad : {R"([])", R"({})", R"({"scale_x": 0})", R"({"scale_x": -1})", R"({"scale_x": "2"})",
                            R"({"scale_x": 1, "bogus": 1})", R"({"corners": [[0,0],[1,0],[1,1]], "output_height": 4, "output_width": 4})",
                            R"({"corners": [[0,0],[1,0],[1,1],[0,1]]})",
                            R"({"corners": [[0,0],[1,0],[1,1],[0,1]], "scale_x": 1, "output_height": 4, "output_width": 4})",
                            R"({"scale_x": 1, "output_height": 0})"}) {
      CAPTURE(bad);
      CHECK_THROWS_AS(parse(bad), InvalidArgument);
    }
  }

  TEST_CASE("scale requests resolve to rounded dims and the identity") {
    const auto g = resolve_geometry(parse(R"({"scale_x": 2, "scale_y": 0.5})"), 30, 21);
    CHECK(g.height == 15);
    CHECK(g.width == 42);
    CHECK(g.transform.matrix() == Homography::identity().matrix());
    const auto explicit_dims = resolve_geometry(parse(R"({"scale_x": 1, "output_width": 50})"), 30, 21);
    CHECK(explicit_dims.width == 50);
    CHECK(explicit_dims.height == 30);
  }

  TEST_CASE("unit-square corners give the identity warp") {
    const auto g = resolve_geometry(parse(R"({"corners": [[0,0],[1,0],[1,1],[0,1]], "output_height": 20, "output_width": 30})"), 20, 30);
    CHECK(g.height == 20);
    CHECK(g.width == 30);
    const auto m = g.transform.matrix();
    const auto id = Homography::identity().matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(m[i][j] - id[i][j]) < 1e-12);
  }

  TEST_CASE("corner requests map input corners onto the given canvas points") {
    const std::array<Point2, 4> c{{{0.1, 0.0}, {0.9, 0.1}, {1.0, 1.0}, {0.0, 0.8}}};
    SynthesisRequest r;
    r.corners = c;
    r.output_height = 16;
    r.output_width = 16;
    const auto g = resolve_geometry(r, 16, 16);
    const std::array<Point2, 4> src{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
    for (size_t i = 0; i < 4; ++i) {
      Point2 p;
      REQUIRE(g.transform.apply({2 * c[i].x - 1, 2 * c[i].y - 1}, p));
      CHECK(std::abs(p.x - src[i].x) < 1e-9);
      CHECK(std::abs(p.y - src[i].y) < 1e-9);
    }
  }

  TEST_CASE("degenerate and oversized requests") {
    CHECK_THROWS_AS(resolve_geometry(parse(R"({"corners": [[0,0],[1,1],[1,0],[0,1]], "output_height": 8, "output_width": 8})"), 8, 8),
                    DegenerateTransform);
    CHECK_THROWS_AS(resolve_geometry(parse(R"({"corners": [[0,0],[0.5,0],[1,0],[0,1]], "output_height": 8, "output_width": 8})"), 8, 8),
                    DegenerateTransform);
    CHECK_THROWS_AS(resolve_geometry(parse(R"({"scale_x": 100})"), 64, 64, 2048), TooLarge);
    CHECK_THROWS_AS(resolve_geometry(parse(R"({"scale_x": 1, "output_height": 5000})"), 64, 64), TooLarge);
    CHECK_NOTHROW(resolve_geometry(parse(R"({"scale_x": 32})"), 64, 64, 2048));
    CHECK(is_strictly_convex({{{0, 0}, {0, 1}, {1, 1}, {1, 0}}}));
    CHECK_FALSE(is_strictly_convex({{{0, 0}, {1, 0}, {0.2, 0.2}, {0, 1}}}));
  }

  TEST_CASE("model keeps the input dims for the identity request and is deterministic") {
    const auto& m = shared_model();
    const auto geo = resolve_geometry(parse(R"({"scale_x": 1})"), m.input_height(), m.input_width());
    const auto y = m.synthesize(geo);
    CHECK(y.sizes() == torch::IntArrayRef({3, m.input_height(), m.input_width()}));
    CHECK(torch::equal(y, m.synthesize(geo)));
    CHECK(m.meta()["input_height"] == m.input_height());
  }

  TEST_CASE("evaluation rows match metrics recomputed from the outputs") {
    const auto& m = shared_model();
    const std::vector<SynthesisRequest> grid{parse(R"({"scale_x": 1})"), parse(R"({"scale_x": 2})")};
    const auto rows = evaluate_grid(m, grid, m.input());
    REQUIRE(rows.size() == 2);
    const auto identity = m.synthesize(m.input(), {m.input_height(), m.input_width(), Homography::identity()});
    CHECK(rows[0]["coherence"].get<double>() == coherence(identity, m.input()));
    CHECK(rows[0]["completeness"].get<double>() == completeness(identity, m.input()));
    CHECK(rows[0]["index"] == 0);
    CHECK(rows[1]["output_width"] == 2 * m.input_width());
    CHECK(rows[1]["request"] == grid[1].to_json());
    CHECK(evaluate_grid(m, {}, m.input()).empty());
  }

  TEST_CASE("PNG round trip is exact on 8-bit data") {
    const auto img = testing::two_scale_texture(9, 13);
    const auto back = decode_png(encode_png(img));
    CHECK(torch::equal(back, img));
    CHECK_THROWS_AS(decode_png("not a png"), IoError);
  }
}

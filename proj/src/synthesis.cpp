#include "synthesis.hpp"

#include <cmath>
#include <set>

#include "errors.hpp"
#include "training.hpp"

namespace retarget {
namespace {

using nlohmann::json;

int64_t positive_int(const json& v, const char* key) {
  if (!v.is_number_integer() || v.get<int64_t>() < 1) {
    throw InvalidArgument(std::string(key) + " must be a positive integer");
  }
  return v.get<int64_t>();
}

double finite_number(const json& v, const char* key) {
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw InvalidArgument(std::string(key) + " must be a finite number");
  }
  return v.get<double>();
}

Point2 parse_point(const json& v) {
  if (v.is_array() && v.size() == 2) return {finite_number(v[0], "corner x"), finite_number(v[1], "corner y")};
  if (v.is_object() && v.size() == 2 && v.contains("x") && v.contains("y")) {
    return {finite_number(v["x"], "corner x"), finite_number(v["y"], "corner y")};
  }
  throw InvalidArgument("each corner must be [x, y] or {\"x\": .., \"y\": ..}");
}

void check_side(int64_t side, int64_t max_side, const char* axis) {
  if (side > max_side) {
    throw TooLarge(std::string("output ") + axis + " " + std::to_string(side) + " exceeds the limit of " +
                   std::to_string(max_side));
  }
}

}  // namespace

SynthesisRequest SynthesisRequest::from_json(const json& record) {
  if (!record.is_object()) throw InvalidArgument("synthesis request must be a JSON object");
  static const std::set<std::string> known{"output_height", "output_width", "corners", "scale_x", "scale_y"};
  for (const auto& [key, value] : record.items()) {
    if (!known.contains(key)) throw InvalidArgument("unknown request field '" + key + "'");
  }
  SynthesisRequest r;
  if (record.contains("output_height")) r.output_height = positive_int(record["output_height"], "output_height");
  if (record.contains("output_width")) r.output_width = positive_int(record["output_width"], "output_width");
  if (record.contains("scale_x")) r.scale_x = finite_number(record["scale_x"], "scale_x");
  if (record.contains("scale_y")) r.scale_y = finite_number(record["scale_y"], "scale_y");
  if (record.contains("corners")) {
    const auto& c = record["corners"];
    if (!c.is_array() || c.size() != 4) throw InvalidArgument("corners must hold exactly four points");
    std::array<Point2, 4> pts;
    for (size_t i = 0; i < 4; ++i) pts[i] = parse_point(c[i]);
    r.corners = pts;
  }
  const bool has_scales = r.scale_x || r.scale_y;
  if (r.corners && has_scales) throw InvalidArgument("give either corners or scales, not both");
  if (!r.corners && !has_scales) throw InvalidArgument("request needs corners or scale_x/scale_y");
  if ((r.scale_x && !(*r.scale_x > 0.0)) || (r.scale_y && !(*r.scale_y > 0.0))) {
    throw InvalidArgument("scales must be positive");
  }
  if (r.corners && (!r.output_height || !r.output_width)) {
    throw InvalidArgument("corner requests need output_height and output_width");
  }
  return r;
}

json SynthesisRequest::to_json() const {
  json out = json::object();
  if (output_height) out["output_height"] = *output_height;
  if (output_width) out["output_width"] = *output_width;
  if (scale_x) out["scale_x"] = *scale_x;
  if (scale_y) out["scale_y"] = *scale_y;
  if (corners) {
    json pts = json::array();
    for (const auto& p : *corners) pts.push_back({p.x, p.y});
    out["corners"] = pts;
  }
  return out;
}

bool is_strictly_convex(const std::array<Point2, 4>& quad) {
  int sign = 0;
  for (size_t i = 0; i < 4; ++i) {
    const auto& a = quad[i];
    const auto& b = quad[(i + 1) % 4];
    const auto& c = quad[(i + 2) % 4];
    const double z = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (!(std::abs(z) > 1e-12)) return false;
    const int s = z > 0 ? 1 : -1;
    if (sign != 0 && s != sign) return false;
    sign = s;
  }
  return true;
}

OutputGeometry resolve_geometry(const SynthesisRequest& request, int64_t in_height, int64_t in_width,
                                int64_t max_side) {
  if (request.corners) {
    if (!request.output_height || !request.output_width) {
      throw InvalidArgument("corner requests need output_height and output_width");
    }
    check_side(*request.output_height, max_side, "height");
    check_side(*request.output_width, max_side, "width");
    const auto& c = *request.corners;
    if (!is_strictly_convex(c)) throw DegenerateTransform("corners do not form a strictly convex quad");
    const std::array<Point2, 4> src{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
    std::array<Point2, 4> dst;
    for (size_t i = 0; i < 4; ++i) dst[i] = {2.0 * c[i].x - 1.0, 2.0 * c[i].y - 1.0};
    const auto forward = from_corners(src, dst);
    return {*request.output_height, *request.output_width, invert(forward)};
  }
  const double sx = request.scale_x.value_or(1.0);
  const double sy = request.scale_y.value_or(1.0);
  if (!(sx > 0.0) || !(sy > 0.0)) throw InvalidArgument("scales must be positive");
  const double hd = static_cast<double>(in_height) * sy;
  const double wd = static_cast<double>(in_width) * sx;
  if (!request.output_height && hd > static_cast<double>(max_side)) check_side(max_side + 1, max_side, "height");
  if (!request.output_width && wd > static_cast<double>(max_side)) check_side(max_side + 1, max_side, "width");
  const int64_t h = request.output_height.value_or(std::max<int64_t>(1, std::llround(hd)));
  const int64_t w = request.output_width.value_or(std::max<int64_t>(1, std::llround(wd)));
  check_side(h, max_side, "height");
  check_side(w, max_side, "width");
  return {h, w, Homography::identity()};
}

Model::Model(const Checkpoint& checkpoint)
    : config_(checkpoint.config), iteration_(checkpoint.iteration), format_version_(checkpoint.format_version) {
  config_.generator.validate();
  input_ = checkpoint.require("input_image").clone();
  if (input_.dim() != 3 || input_.size(0) != 3) throw ShapeError("checkpoint input image must be [3,H,W]");
  generator_ = Generator(config_.generator);
  load_module_state(*generator_, checkpoint, "g.");
  generator_->eval();
}

Model Model::load(const std::filesystem::path& path) { return Model(load_checkpoint(path)); }

torch::Tensor Model::synthesize(const OutputGeometry& geo) const {
  c10::InferenceMode guard;
  return generator_->forward(input_, geo);
}

torch::Tensor Model::synthesize(const torch::Tensor& input, const OutputGeometry& geo) const {
  c10::InferenceMode guard;
  return generator_->forward(crop_to_quantum(input, config_.generator.size_quantum()), geo);
}

json Model::meta() const {
  return {{"input_height", input_height()},
          {"input_width", input_width()},
          {"iteration", iteration_},
          {"format_version", format_version_},
          {"config", retarget::to_json(config_)}};
}

std::vector<json> evaluate_grid(const Model& model, const std::vector<SynthesisRequest>& grid,
                                const torch::Tensor& input, const PatchMetricConfig& metric_config) {
  const auto x = crop_to_quantum(input, model.config().generator.size_quantum());
  std::vector<json> rows;
  for (size_t i = 0; i < grid.size(); ++i) {
    const auto geo = resolve_geometry(grid[i], x.size(1), x.size(2));
    const auto y = model.synthesize(x, geo);
    auto record = bidirectional_report(y, x, metric_config).to_record();
    record["index"] = i;
    record["request"] = grid[i].to_json();
    record["output_height"] = geo.height;
    record["output_width"] = geo.width;
    rows.push_back(std::move(record));
  }
  return rows;
}

}  // namespace retarget

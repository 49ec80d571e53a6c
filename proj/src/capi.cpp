#include "retarget/retarget.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "config.hpp"
#include "errors.hpp"
#include "image_io.hpp"
#include "service.hpp"
#include "synthesis.hpp"
#include "telemetry.hpp"
#include "training.hpp"

struct retarget_model {
  retarget::Model model;
};

struct retarget_server {
  std::unique_ptr<retarget::Service> service;
  int port = 0;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

retarget_status fail(retarget_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
retarget_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return RETARGET_OK;
  } catch (const retarget::Error& e) {
    return fail(static_cast<retarget_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(RETARGET_INVALID_ARGUMENT, e.what());
  } catch (const c10::Error& e) {
    return fail(RETARGET_INTERNAL, e.what_without_backtrace());
  } catch (const std::bad_alloc&) {
    return fail(RETARGET_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RETARGET_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw retarget::InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

retarget::ModelConfig preset_config(const char* preset) {
  const std::string name = preset ? preset : "default";
  if (name == "default") return {};
  if (name == "desk") return retarget::desk_config();
  throw retarget::ConfigError("unknown preset '" + name + "' (expected default or desk)");
}

json parse_object(const char* text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw retarget::ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw retarget::ConfigError(std::string(what) + " must be a JSON object");
  return j;
}

std::vector<retarget::SynthesisRequest> parse_grid(const char* text) {
  std::vector<retarget::SynthesisRequest> grid;
  const std::string body(text);
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return grid;
  json whole = json::parse(body, nullptr, false);
  if (!whole.is_discarded() && whole.is_array()) {
    for (const auto& r : whole) grid.push_back(retarget::SynthesisRequest::from_json(r));
    return grid;
  }
  std::istringstream lines(body);
  std::string line;
  int64_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json r = json::parse(line, nullptr, false);
    if (r.is_discarded()) throw retarget::InvalidArgument("grid line " + std::to_string(n) + " is not valid JSON");
    grid.push_back(retarget::SynthesisRequest::from_json(r));
  }
  return grid;
}

std::string synthesize_png(const retarget_model* model, const char* request_json, int64_t max_side) {
  require(model, "model");
  require(request_json, "request");
  json body;
  try {
    body = json::parse(request_json);
  } catch (const json::exception& e) {
    throw retarget::InvalidArgument(std::string("request is not valid JSON: ") + e.what());
  }
  const auto request = retarget::SynthesisRequest::from_json(body);
  const auto& m = model->model;
  const auto geo = retarget::resolve_geometry(request, m.input_height(), m.input_width(),
                                              max_side > 0 ? max_side : retarget::kDefaultMaxOutputSide);
  return retarget::encode_png(m.synthesize(geo));
}

}  // namespace

extern "C" {

const char* retarget_version(void) { return "0.1.0"; }

const char* retarget_status_name(retarget_status status) {
  switch (status) {
    case RETARGET_OK: return "ok";
    case RETARGET_INVALID_ARGUMENT: return "invalid_argument";
    case RETARGET_IO: return "io";
    case RETARGET_CHECKSUM: return "checksum";
    case RETARGET_SHAPE: return "shape";
    case RETARGET_DEGENERATE_TRANSFORM: return "degenerate_transform";
    case RETARGET_NON_FINITE_LOSS: return "non_finite_loss";
    case RETARGET_CONFIG: return "config";
    case RETARGET_TOO_LARGE: return "too_large";
    case RETARGET_NOT_READY: return "not_ready";
    case RETARGET_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* retarget_last_error(void) { return g_last_error.c_str(); }

void retarget_free(void* ptr) { std::free(ptr); }

retarget_status retarget_default_config_json(const char* preset, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup_string(retarget::to_json(preset_config(preset)).dump(2));
  });
}

retarget_status retarget_train(const retarget_train_options* options) {
  return guarded([&] {
    require(options, "options");
    require(options->out_dir, "out_dir");
    std::unique_ptr<retarget::Trainer> trainer;
    if (options->resume_path) {
      auto checkpoint = retarget::load_checkpoint(options->resume_path);
      if (options->config_path) {
        throw retarget::ConfigError("a config file cannot be combined with resume; use overrides");
      }
      if (options->overrides_json) {
        checkpoint.config = retarget::apply_config(checkpoint.config, parse_object(options->overrides_json, "overrides"));
      }
      trainer = std::make_unique<retarget::Trainer>(checkpoint);
    } else {
      require(options->image_path, "image_path");
      auto config = preset_config(options->preset);
      if (options->config_path) config = retarget::load_config_file(options->config_path, config);
      if (options->overrides_json) {
        config = retarget::apply_config(config, parse_object(options->overrides_json, "overrides"));
      }
      config.validate();
      trainer = std::make_unique<retarget::Trainer>(config, retarget::read_png(options->image_path));
    }
    retarget::TrainRun run{options->out_dir, {}};
    if (options->progress) {
      run.on_step = [options](const retarget::LossReport& report) {
        const auto line = retarget::record_line(retarget::to_record(report));
        options->progress(line.c_str(), options->progress_user);
      };
    }
    retarget::run_training(*trainer, run);
  });
}

retarget_status retarget_model_load(const char* checkpoint_path, retarget_model** out_model) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out_model, "out_model");
    *out_model = nullptr;
    *out_model = new retarget_model{retarget::Model::load(checkpoint_path)};
  });
}

void retarget_model_free(retarget_model* model) { delete model; }

retarget_status retarget_model_input_dims(const retarget_model* model, int64_t* height, int64_t* width) {
  return guarded([&] {
    require(model, "model");
    if (height) *height = model->model.input_height();
    if (width) *width = model->model.input_width();
  });
}

retarget_status retarget_model_meta_json(const retarget_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    *out_json = dup_string(model->model.meta().dump());
  });
}

retarget_status retarget_model_synthesize_png(const retarget_model* model, const char* request_json,
                                              int64_t max_side, unsigned char** out_png, size_t* out_len) {
  return guarded([&] {
    require(out_png, "out_png");
    require(out_len, "out_len");
    const auto png = synthesize_png(model, request_json, max_side);
    auto* buf = static_cast<unsigned char*>(std::malloc(png.size()));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, png.data(), png.size());
    *out_png = buf;
    *out_len = png.size();
  });
}

retarget_status retarget_model_synthesize_to_file(const retarget_model* model, const char* request_json,
                                                  int64_t max_side, const char* out_path) {
  return guarded([&] {
    require(out_path, "out_path");
    retarget::write_file_atomic(out_path, synthesize_png(model, request_json, max_side));
  });
}

retarget_status retarget_model_eval(const retarget_model* model, const char* grid_json, const char* input_path,
                                    const char* report_path) {
  return guarded([&] {
    require(model, "model");
    require(grid_json, "grid_json");
    require(report_path, "report_path");
    const auto grid = parse_grid(grid_json);
    const auto input = input_path ? retarget::read_png(input_path) : model->model.input();
    const auto rows = retarget::evaluate_grid(model->model, grid, input);
    std::string out;
    for (const auto& row : rows) out += retarget::record_line(row) + "\n";
    retarget::write_file_atomic(report_path, out);
  });
}

retarget_status retarget_server_start(const char* checkpoint_path, const char* host, int port, int64_t max_side,
                                      retarget_server** out_server) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(host, "host");
    require(out_server, "out_server");
    *out_server = nullptr;
    retarget::ServiceOptions opts;
    if (max_side > 0) opts.max_output_side = max_side;
    auto server = std::make_unique<retarget_server>();
    server->service = std::make_unique<retarget::Service>(checkpoint_path, opts);
    server->port = server->service->start(host, port);
    *out_server = server.release();
  });
}

int retarget_server_port(const retarget_server* server) { return server ? server->port : -1; }

int retarget_server_ready(const retarget_server* server) {
  return server && server->service->ready() ? 1 : 0;
}

void retarget_server_wait(retarget_server* server) {
  if (server) server->service->wait();
}

void retarget_server_stop(retarget_server* server) {
  if (server) server->service->stop();
}

void retarget_server_free(retarget_server* server) { delete server; }

}  // extern "C"

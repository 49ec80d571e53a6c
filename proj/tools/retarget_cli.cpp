// Command-line front end: train, synthesize, eval, serve, config.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "retarget/retarget.h"

namespace {

using nlohmann::json;

int report(retarget_status status) {
  if (status != RETARGET_OK) {
    std::cerr << "retarget: " << retarget_status_name(status) << ": " << retarget_last_error() << "\n";
  }
  return static_cast<int>(status);
}

std::optional<std::string> read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TrainArgs {
  std::string image;
  std::string config;
  std::string preset = "default";
  std::string out;
  std::string resume;
  std::optional<int64_t> iterations;
  std::optional<uint64_t> seed;
  bool ablate_reconst = false;
  bool single_scale_d = false;
  std::vector<std::string> set;
  int64_t log_every = 100;
};

void on_progress(const char* record, void* user) {
  const auto every = *static_cast<int64_t*>(user);
  if (every <= 0) return;
  const auto r = json::parse(record);
  const auto it = r.at("iteration").get<int64_t>();
  if (it % every == 0) {
    std::fprintf(stderr, "iter %lld  d=%.4f  g=%.4f  rec=%.4f  total=%.4f\n", static_cast<long long>(it),
                 r.at("l_gan_d").get<double>(), r.at("l_gan_g").get<double>(), r.at("l_reconst").get<double>(),
                 r.at("l_total").get<double>());
  }
}

int run_train(TrainArgs& a) {
  json overrides = json::object();
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "retarget: --set expects key=value, got '" << kv << "'\n";
      return RETARGET_CONFIG;
    }
    const auto value = kv.substr(eq + 1);
    auto parsed = json::parse(value, nullptr, false);
    overrides[kv.substr(0, eq)] = parsed.is_discarded() ? json(value) : parsed;
  }
  if (a.iterations) overrides["iterations"] = *a.iterations;
  if (a.seed) overrides["seed"] = *a.seed;
  if (a.ablate_reconst) overrides["ablate_reconst"] = true;
  if (a.single_scale_d) overrides["ablate_multiscale"] = true;
  const auto overrides_text = overrides.dump();

  retarget_train_options opts{};
  opts.image_path = a.image.empty() ? nullptr : a.image.c_str();
  opts.preset = a.preset.c_str();
  opts.config_path = a.config.empty() ? nullptr : a.config.c_str();
  opts.overrides_json = overrides.empty() ? nullptr : overrides_text.c_str();
  opts.out_dir = a.out.c_str();
  opts.resume_path = a.resume.empty() ? nullptr : a.resume.c_str();
  opts.progress = on_progress;
  opts.progress_user = &a.log_every;
  return report(retarget_train(&opts));
}

struct SynthArgs {
  std::string checkpoint;
  std::string request;
  std::optional<double> scale_x;
  std::optional<double> scale_y;
  std::optional<int64_t> height;
  std::optional<int64_t> width;
  std::string out;
  int64_t max_side = 0;
};

int run_synthesize(const SynthArgs& a) {
  std::string request;
  if (!a.request.empty()) {
    if (auto text = read_text(a.request)) {
      request = *text;
    } else {
      request = a.request;
    }
  } else {
    json r = json::object();
    if (a.scale_x) r["scale_x"] = *a.scale_x;
    if (a.scale_y) r["scale_y"] = *a.scale_y;
    if (a.height) r["output_height"] = *a.height;
    if (a.width) r["output_width"] = *a.width;
    if (!a.scale_x && !a.scale_y) r["scale_x"] = 1.0;
    request = r.dump();
  }
  retarget_model* model = nullptr;
  if (auto s = retarget_model_load(a.checkpoint.c_str(), &model); s != RETARGET_OK) return report(s);
  const auto status = retarget_model_synthesize_to_file(model, request.c_str(), a.max_side, a.out.c_str());
  retarget_model_free(model);
  return report(status);
}

struct EvalArgs {
  std::string checkpoint;
  std::string grid;
  std::string input;
  std::string report;
};

int run_eval(const EvalArgs& a) {
  const auto grid = read_text(a.grid);
  if (!grid) {
    std::cerr << "retarget: cannot read grid file " << a.grid << "\n";
    return RETARGET_IO;
  }
  retarget_model* model = nullptr;
  if (auto s = retarget_model_load(a.checkpoint.c_str(), &model); s != RETARGET_OK) return report(s);
  const auto status = retarget_model_eval(model, grid->c_str(), a.input.empty() ? nullptr : a.input.c_str(),
                                          a.report.c_str());
  retarget_model_free(model);
  return report(status);
}

volatile std::sig_atomic_t g_stop = 0;

void handle_signal(int) { g_stop = 1; }

int run_serve(const std::string& checkpoint, const std::string& bind, int64_t max_side) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "retarget: --bind expects host:port\n";
    return RETARGET_INVALID_ARGUMENT;
  }
  const auto host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    std::cerr << "retarget: invalid port in --bind\n";
    return RETARGET_INVALID_ARGUMENT;
  }
  retarget_server* server = nullptr;
  if (auto s = retarget_server_start(checkpoint.c_str(), host.c_str(), port, max_side, &server); s != RETARGET_OK) {
    return report(s);
  }
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << "listening on " << host << ":" << retarget_server_port(server) << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  retarget_server_stop(server);
  retarget_server_wait(server);
  retarget_server_free(server);
  return 0;
}

int run_config(const std::string& preset) {
  char* text = nullptr;
  if (auto s = retarget_default_config_json(preset.c_str(), &text); s != RETARGET_OK) return report(s);
  std::cout << text << "\n";
  retarget_free(text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image generative retargeting"};
  app.set_version_flag("--version", std::string(retarget_version()));
  app.require_subcommand(1);

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "Train a model on one image");
  cmd_train->add_option("--image", train.image, "Input PNG")->check(CLI::ExistingFile);
  cmd_train->add_option("--config", train.config, "Flat JSON config file")->check(CLI::ExistingFile);
  cmd_train->add_option("--preset", train.preset, "Base config: default or desk")->capture_default_str();
  cmd_train->add_option("--out", train.out, "Output directory")->required();
  cmd_train->add_option("--resume", train.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  cmd_train->add_option("--iterations", train.iterations, "Total iterations");
  cmd_train->add_option("--seed", train.seed, "Random seed");
  cmd_train->add_flag("--ablate-reconst", train.ablate_reconst, "Drop the reconstruction loss");
  cmd_train->add_flag("--single-scale-d", train.single_scale_d, "Use only the finest discriminator scale");
  cmd_train->add_option("--set", train.set, "Config override key=value (repeatable)");
  cmd_train->add_option("--log-every", train.log_every, "Progress line interval, 0 for none")
      ->capture_default_str();

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synthesize", "Render one output geometry");
  cmd_synth->add_option("--checkpoint", synth.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  auto* req_opt = cmd_synth->add_option("--request", synth.request, "Request JSON file or inline JSON");
  cmd_synth->add_option("--scale-x", synth.scale_x, "Horizontal scale")->excludes(req_opt);
  cmd_synth->add_option("--scale-y", synth.scale_y, "Vertical scale")->excludes(req_opt);
  cmd_synth->add_option("--height", synth.height, "Output height")->excludes(req_opt);
  cmd_synth->add_option("--width", synth.width, "Output width")->excludes(req_opt);
  cmd_synth->add_option("--out", synth.out, "Output PNG")->required();
  cmd_synth->add_option("--max-side", synth.max_side, "Largest allowed output side (0 = default)");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "Patch metrics over a grid of geometries");
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--grid", eval.grid, "JSON array or JSONL of requests")->required();
  cmd_eval->add_option("--input", eval.input, "Reference PNG (default: stored input)")->check(CLI::ExistingFile);
  cmd_eval->add_option("--report", eval.report, "Output JSONL report")->required();

  std::string serve_checkpoint;
  std::string bind = "127.0.0.1:8080";
  int64_t serve_max_side = 0;
  auto* cmd_serve = app.add_subcommand("serve", "HTTP inference service");
  cmd_serve->add_option("--checkpoint", serve_checkpoint, "Checkpoint file")->required();
  cmd_serve->add_option("--bind", bind, "host:port")->capture_default_str();
  cmd_serve->add_option("--max-side", serve_max_side, "Largest allowed output side (0 = default)");

  std::string config_preset = "default";
  auto* cmd_config = app.add_subcommand("config", "Print a preset config");
  cmd_config->add_option("--preset", config_preset, "default or desk")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*cmd_train) {
    if (train.image.empty() && train.resume.empty()) {
      std::cerr << "retarget: train needs --image or --resume\n";
      return RETARGET_INVALID_ARGUMENT;
    }
    return run_train(train);
  }
  if (*cmd_synth) return run_synthesize(synth);
  if (*cmd_eval) return run_eval(eval);
  if (*cmd_serve) return run_serve(serve_checkpoint, bind, serve_max_side);
  if (*cmd_config) return run_config(config_preset);
  return 0;
}

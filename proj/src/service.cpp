#include "service.hpp"

#include <httplib.h>

#include "errors.hpp"
#include "image_io.hpp"

namespace retarget {
namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, {{"error", message}});
}

int status_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Shape:
      return 400;
    case ErrorCode::TooLarge:
      return 413;
    case ErrorCode::DegenerateTransform:
      return 422;
    default:
      return 500;
  }
}

}  // namespace

Service::Service(std::filesystem::path checkpoint, ServiceOptions options)
    : checkpoint_(std::move(checkpoint)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  const size_t workers = std::max<size_t>(1, options_.worker_threads);
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  // The library default adds SO_REUSEPORT, which lets a second server share the port silently.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  install_routes();
}

Service::~Service() {
  stop();
  if (loader_.joinable()) loader_.join();
}

void Service::install_routes() {
  server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    switch (state_.load()) {
      case State::Ready:
        reply_json(res, 200, {{"status", "ok"}});
        break;
      case State::Loading:
        reply_json(res, 503, {{"status", "loading"}});
        break;
      case State::Failed:
        reply_json(res, 500, {{"status", "error"}, {"error", load_error_}});
        break;
    }
  });

  server_->Get("/meta", [this](const httplib::Request&, httplib::Response& res) {
    if (!ready()) return reply_error(res, 503, "model is not loaded");
    reply_json(res, 200, model_->meta());
  });

  server_->Post("/synthesize", [this](const httplib::Request& req, httplib::Response& res) {
    if (!ready()) return reply_error(res, 503, "model is not loaded");
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      return reply_error(res, 400, std::string("request body is not valid JSON: ") + e.what());
    }
    try {
      const auto request = SynthesisRequest::from_json(body);
      const auto geo =
          resolve_geometry(request, model_->input_height(), model_->input_width(), options_.max_output_side);
      res.status = 200;
      res.set_content(encode_png(model_->synthesize(geo)), "image/png");
    } catch (const Error& e) {
      reply_error(res, status_for(e), e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });
}

void Service::load() {
  try {
    if (options_.before_load) options_.before_load();
    model_ = std::make_shared<const Model>(Model::load(checkpoint_));
    state_.store(State::Ready);
  } catch (const std::exception& e) {
    load_error_ = e.what();
    state_.store(State::Failed);
  }
  state_.notify_all();
}

bool Service::wait_until_loaded() const {
  state_.wait(State::Loading);
  return ready();
}

int Service::start(const std::string& host, int port) {
  std::lock_guard lock(stop_mutex_);
  if (started_) throw InvalidArgument("service already started");
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  started_ = true;
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  loader_ = std::thread([this] { load(); });
  return bound;
}

void Service::wait() {
  if (listener_.joinable()) listener_.join();
}

void Service::stop() {
  std::lock_guard lock(stop_mutex_);
  if (!started_) return;
  server_->stop();
  if (listener_.joinable() && listener_.get_id() != std::this_thread::get_id()) listener_.join();
}

}  // namespace retarget

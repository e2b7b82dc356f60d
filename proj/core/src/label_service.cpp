#include "iada/label_service.hpp"

#include <thread>

#include <httplib.h>

#include "iada/datasets.hpp"

namespace iada {

namespace {

nlohmann::json wrists(const std::vector<double>& x) {
  nlohmann::json right = nlohmann::json::array(), left = nlohmann::json::array();
  for (std::size_t s = 0; s < kTrajectorySteps && (s + 1) * 6 <= x.size(); ++s) {
    right.push_back({x[s * 6], x[s * 6 + 1], x[s * 6 + 2]});
    left.push_back({x[s * 6 + 3], x[s * 6 + 4], x[s * 6 + 5]});
  }
  return {{"right", std::move(right)}, {"left", std::move(left)}};
}

std::int64_t unix_millis(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"error", message}});
}

void reply_resolution(httplib::Response& res, ResolveResult r, std::uint64_t id) {
  switch (r) {
    case ResolveResult::kOk: reply(res, 200, {{"ok", true}, {"id", id}}); return;
    case ResolveResult::kUnknownId: reply_error(res, 404, "unknown request id " + std::to_string(id)); return;
    case ResolveResult::kOutOfRange: reply_error(res, 400, "class out of range"); return;
    case ResolveResult::kConflict: reply_error(res, 409, "request already resolved"); return;
  }
}

}  // namespace

nlohmann::json pending_view(const LabelRequest& r) {
  nlohmann::json payload;
  switch (r.hint) {
    case RenderHint::kPoint2D:
    case RenderHint::kDigitImage:
      payload = {{"adversary", r.adversary}, {"root", r.root.x}};
      if (r.hint == RenderHint::kDigitImage) {
        payload["width"] = 28;
        payload["height"] = 28;
      }
      break;
    case RenderHint::kTrajectory:
      payload = {{"adversary", wrists(r.adversary)}, {"root", wrists(r.root.x)}};
      break;
  }
  return {{"id", r.id},
          {"hint", std::string(to_string(r.hint))},
          {"payload", std::move(payload)},
          {"root_label", r.root.y},
          {"class_count", r.class_count},
          {"delta", r.delta},
          {"enqueued_at", unix_millis(r.enqueued_at)}};
}

nlohmann::json status_view(const StatusSnapshot& s, std::size_t queue_depth) {
  return {{"epoch", s.epoch},
          {"round", s.round},
          {"queue_depth", queue_depth},
          {"d0_size", s.d0_size},
          {"d_adv_size", s.d_adv_size},
          {"found", s.found},
          {"human_labeled", s.human_labeled},
          {"assumed", s.assumed},
          {"true_adversary_fraction",
           s.true_adversary_fraction ? nlohmann::json(*s.true_adversary_fraction) : nlohmann::json()},
          {"running", s.running}};
}

struct LabelService::Impl {
  LabelQueue& queue;
  const StatusBoard& status;
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;
  int port = -1;

  Impl(LabelQueue& q, const StatusBoard& s, ServiceOptions o) : queue(q), status(s), options(std::move(o)) {}

  // Parses {"id": n, ...}; replies 400 itself on malformed input.
  static std::optional<nlohmann::json> body(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json doc = nlohmann::json::parse(req.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("id") || !doc["id"].is_number_unsigned()) {
      reply_error(res, 400, "expected a JSON object with a non-negative integer id");
      return std::nullopt;
    }
    return doc;
  }

  void routes() {
    server.Get("/api/pending", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& r : queue.pending()) list.push_back(pending_view(r));
      reply(res, 200, list);
    });
    server.Post("/api/label", [this](const httplib::Request& req, httplib::Response& res) {
      auto doc = body(req, res);
      if (!doc) return;
      if (!doc->contains("class") || !(*doc)["class"].is_number_integer()) {
        reply_error(res, 400, "expected an integer class");
        return;
      }
      const auto id = (*doc)["id"].get<std::uint64_t>();
      reply_resolution(res, queue.label(id, (*doc)["class"].get<int>()), id);
    });
    server.Post("/api/decline", [this](const httplib::Request& req, httplib::Response& res) {
      auto doc = body(req, res);
      if (!doc) return;
      const auto id = (*doc)["id"].get<std::uint64_t>();
      reply_resolution(res, queue.decline(id), id);
    });
    server.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, status_view(status.read(), queue.pending_count()));
    });
    if (!options.static_dir.empty()) server.set_mount_point("/", options.static_dir.string());
  }
};

LabelService::LabelService(LabelQueue& queue, const StatusBoard& status, ServiceOptions options)
    : impl_(std::make_unique<Impl>(queue, status, std::move(options))) {
  impl_->routes();
}

LabelService::~LabelService() { stop(); }

int LabelService::start() {
  if (impl_->thread.joinable()) return impl_->port;
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else {
    impl_->port = impl_->server.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1;
  }
  if (impl_->port < 0) {
    throw std::runtime_error("cannot bind label service to " + impl_->options.host + ":" +
                             std::to_string(impl_->options.port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void LabelService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int LabelService::port() const { return impl_->port; }

}  // namespace iada

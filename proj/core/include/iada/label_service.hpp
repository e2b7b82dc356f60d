#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "iada/engine.hpp"
#include "iada/label_queue.hpp"

namespace iada {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8643;  // 0 picks a free port
  std::filesystem::path static_dir;  // served at / when set
};

// JSON shapes shared by the HTTP endpoints.
nlohmann::json pending_view(const LabelRequest& request);
nlohmann::json status_view(const StatusSnapshot& status, std::size_t queue_depth);

// GET /api/pending, POST /api/label, POST /api/decline, GET /api/status.
class LabelService {
 public:
  LabelService(LabelQueue& queue, const StatusBoard& status, ServiceOptions options = {});
  ~LabelService();
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  // Binds and starts serving on a background thread; returns the bound port.
  int start();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iada

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "handpass/gatekeeper.hpp"

namespace handpass {

/// Line-delimited JSON authentication service. Each request line yields
/// exactly one response line; errors are reported in-band.
class Service {
 public:
  explicit Service(AuditLog* audit = nullptr) : audit_(audit) {}

  void set_store(std::shared_ptr<const EnrollmentStore> store);
  bool ready() const;

  /// Handles one request document and returns the response document.
  std::string handle_line(const std::string& line) const;

  /// Listens on 127.0.0.1:port (0 picks a free port) until `stop` becomes
  /// true. `on_listening` receives the bound port.
  void serve(std::uint16_t port, const std::atomic<bool>& stop,
             const std::function<void(std::uint16_t)>& on_listening = {}) const;

 private:
  std::shared_ptr<const EnrollmentStore> store() const;

  AuditLog* audit_;
  mutable std::mutex store_mutex_;
  std::shared_ptr<const EnrollmentStore> store_;
};

/// Minimal blocking client: sends one line, returns the response line.
std::string request_once(std::uint16_t port, const std::string& line);

}  // namespace handpass

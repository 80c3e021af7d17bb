#include "handpass/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <thread>
#include <vector>

#include <json.hpp>

#include "handpass/error.hpp"

namespace handpass {
namespace {

using nlohmann::json;

std::string error_document(const std::string& code, const std::string& message) {
  return json{{"ok", false}, {"error", {{"code", code}, {"message", message}}}}.dump();
}

class Socket {
 public:
  explicit Socket(int fd = -1) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  int fd() const { return fd_; }

 private:
  int fd_;
};

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

void serve_connection(const Service& service, Socket conn, const std::atomic<bool>& stop) {
  std::string buffer;
  char chunk[4096];
  while (!stop.load()) {
    pollfd pfd{conn.fd(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    if (ready < 0) return;
    if (ready == 0) continue;
    const ssize_t n = ::recv(conn.fd(), chunk, sizeof(chunk), 0);
    if (n <= 0) return;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t newline;
    while ((newline = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, newline);
      buffer.erase(0, newline + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (!send_all(conn.fd(), service.handle_line(line) + "\n")) return;
    }
  }
}

}  // namespace

void Service::set_store(std::shared_ptr<const EnrollmentStore> store) {
  std::lock_guard lock(store_mutex_);
  store_ = std::move(store);
}

bool Service::ready() const { return store() != nullptr; }

std::shared_ptr<const EnrollmentStore> Service::store() const {
  std::lock_guard lock(store_mutex_);
  return store_;
}

std::string Service::handle_line(const std::string& line) const {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::exception& ex) {
    return error_document("bad-request", std::string("request is not valid JSON: ") + ex.what());
  }
  if (!request.is_object() || !request.contains("authenticate") || !request["authenticate"].is_object()) {
    return error_document("bad-request", "request must be an object with an 'authenticate' member");
  }
  const auto current = store();
  if (!current) return error_document("not-ready", "no enrollment store is loaded");

  try {
    AuthRequest auth;
    auth.window_seconds = request.value("window", kDefaultWindowSeconds);
    auth.threshold = request.value("threshold", kDefaultThreshold);
    auth.required_permission = request.value("permission", std::string());
    const json& target = request["authenticate"];
    std::vector<CsiFrame> frames;
    if (target.contains("capture")) {
      frames = read_capture(target["capture"].get<std::string>()).frames;
    } else if (target.contains("frames")) {
      for (const auto& hex : target["frames"]) frames.push_back(decode_payload(from_hex(hex.get<std::string>())));
    } else {
      return error_document("bad-request", "'authenticate' needs 'capture' or 'frames'");
    }
    const AuthDecision decision = authenticate(*current, frames, auth, audit_);
    json response = {{"ok", true}, {"decision", json::parse(decision_to_json(decision))}};
    if (request.contains("id")) response["id"] = request["id"];
    return response.dump();
  } catch (const json::exception& ex) {
    return error_document("bad-request", ex.what());
  } catch (const Error& ex) {
    return error_document(ex.code(), ex.what());
  } catch (const std::exception& ex) {
    return error_document("internal", ex.what());
  }
}

void Service::serve(std::uint16_t port, const std::atomic<bool>& stop,
                    const std::function<void(std::uint16_t)>& on_listening) const {
  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.fd() < 0) throw IoFailure(std::string("socket: ") + std::strerror(errno));
  const int yes = 1;
  ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listener.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    throw IoFailure("bind to port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (::listen(listener.fd(), 16) < 0) throw IoFailure(std::string("listen: ") + std::strerror(errno));
  socklen_t len = sizeof(addr);
  ::getsockname(listener.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));

  std::vector<std::thread> connections;
  while (!stop.load()) {
    pollfd pfd{listener.fd(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listener.fd(), nullptr, nullptr);
    if (fd < 0) continue;
    connections.emplace_back(serve_connection, std::cref(*this), Socket(fd), std::cref(stop));
  }
  for (auto& t : connections) t.join();
  if (audit_) audit_->flush();
}

std::string request_once(std::uint16_t port, const std::string& line) {
  Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (sock.fd() < 0) throw IoFailure(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    throw IoFailure("connect to port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (!send_all(sock.fd(), line + "\n")) throw IoFailure("send failed");
  std::string response;
  char c;
  while (::recv(sock.fd(), &c, 1, 0) == 1) {
    if (c == '\n') return response;
    response.push_back(c);
  }
  throw IoFailure("connection closed before a response arrived");
}

}  // namespace handpass

#pragma once

// HTTP classifier endpoint. Request: POST {"shape":[H,W,C],"data":[...]} with
// the image row-major HWC; response: {"logits":[...]}. Anything but a 200 with
// that body is a failed attempt.

#include <httplib.h>

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "salattack/errors.hpp"
#include "salattack/model.hpp"

namespace salattack {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::string path;  // request path, "/" when absent
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InvalidInput("endpoint URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string encode_request(const Image& x) {
  nlohmann::json j;
  j["shape"] = {x.height(), x.width(), x.channels()};
  j["data"] = std::vector<float>(x.data().begin(), x.data().end());
  return j.dump();
}

inline Image decode_request(const std::string& body) {
  const auto j = nlohmann::json::parse(body);
  const auto shape = j.at("shape").get<std::vector<int>>();
  if (shape.size() != 3) throw FormatError("request shape must be [H,W,C]");
  return Image(shape[0], shape[1], shape[2], j.at("data").get<std::vector<float>>());
}

inline std::string encode_logits(const Logits& z) { return nlohmann::json{{"logits", z.values()}}.dump(); }

inline Logits decode_logits(const std::string& body) {
  return Logits(nlohmann::json::parse(body).at("logits").get<std::vector<float>>());
}

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds first_backoff{50};  // doubled after every failed attempt
  std::chrono::seconds timeout{30};
};

/// Classifier behind an HTTP endpoint. Each evaluate() opens its own client, so
/// concurrent calls from independent attack runs do not share connection state.
class RemoteBackend final : public ClassifierBackend {
 public:
  RemoteBackend(const std::string& url, InputSpec spec, int num_classes, RetryPolicy retry = {})
      : endpoint_(parse_endpoint(url)), spec_(spec), classes_(num_classes), retry_(retry) {
    if (retry_.attempts < 1) throw InvalidInput("RemoteBackend: attempts must be >= 1");
  }

  InputSpec input_spec() const override { return spec_; }
  int num_classes() const override { return classes_; }

  Logits evaluate(const Image& x) const override {
    const std::string body = encode_request(x);
    std::string last_error;
    auto backoff = retry_.first_backoff;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
      httplib::Client client(endpoint_.base);
      client.set_connection_timeout(retry_.timeout);
      client.set_read_timeout(retry_.timeout);
      client.set_write_timeout(retry_.timeout);
      if (auto res = client.Post(endpoint_.path, body, "application/json")) {
        if (res->status == 200) {
          try {
            Logits z = decode_logits(res->body);
            if (static_cast<int>(z.size()) != classes_)
              throw FormatError("expected " + std::to_string(classes_) + " logits, got " + std::to_string(z.size()));
            return z;
          } catch (const std::exception& e) {
            last_error = std::string("bad response body: ") + e.what();
          }
        } else {
          last_error = "HTTP status " + std::to_string(res->status);
        }
      } else {
        last_error = httplib::to_string(res.error());
      }
      if (attempt < retry_.attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw TransportError("remote classifier failed after " + std::to_string(retry_.attempts) +
                         " attempts: " + last_error);
  }

 private:
  Endpoint endpoint_;
  InputSpec spec_;
  int classes_;
  RetryPolicy retry_;
};

/// Serves a backend over the protocol above on a background thread until destroyed.
class LogitsServer {
 public:
  LogitsServer(const ClassifierBackend& backend, const std::string& host = "127.0.0.1", int port = 0,
               std::string path = "/predict")
      : backend_(backend), path_(std::move(path)), server_(std::make_unique<httplib::Server>()) {
    server_->Post(path_, [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw TransportError("cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }

  ~LogitsServer() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  LogitsServer(const LogitsServer&) = delete;
  LogitsServer& operator=(const LogitsServer&) = delete;

  int port() const { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_) + path_; }

  /// Blocks the calling thread (for a foreground server process).
  void wait() {
    if (thread_.joinable()) thread_.join();
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    try {
      const Image x = decode_request(req.body);
      res.set_content(encode_logits(backend_.evaluate(x)), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  const ClassifierBackend& backend_;
  std::string path_;
  std::string host_;
  int port_ = -1;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace salattack

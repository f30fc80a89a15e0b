#pragma once

// HTTP+JSON client for an external generation service:
//
//   POST /generate   {"prompt", "max_new_tokens", "temperature", "top_p", "request_id"} -> {"text"}
//   POST /perplexity {"prompt", "response"}                                          -> {"perplexity"}
//   POST /embed      {"texts": [str]}                                                -> {"vectors": [[float]]}
//   GET  /health                                                                     -> {"status", "model"}
//
// Retries reuse the same request_id so the server can deduplicate.

#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>

#include "fashrec/embedcore.hpp"
#include "fashrec/generator.hpp"

namespace fashrec {

struct RemoteOptions {
  std::string endpoint;  // scheme://host:port
  double timeout_s = 60.0;
  int retries = 2;  // additional attempts after the first
};

class RemoteClient {
 public:
  explicit RemoteClient(RemoteOptions opts) : opts_(std::move(opts)) {
    require(!opts_.endpoint.empty(), ErrorKind::Config, "remote generator: empty endpoint");
    require(opts_.retries >= 0 && opts_.timeout_s > 0, ErrorKind::Config,
            "remote generator: invalid timeout or retries");
  }

  const RemoteOptions& options() const { return opts_; }

  json post(const std::string& path, const json& body) const {
    return call(path, [&](httplib::Client& c) {
      return c.Post(path, body.dump(), "application/json");
    });
  }

  json get(const std::string& path) const {
    return call(path, [&](httplib::Client& c) { return c.Get(path); });
  }

 private:
  template <typename Fn>
  json call(const std::string& path, Fn&& send) const {
    std::string last_error;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      // One client per call keeps concurrent requests independent.
      httplib::Client client(opts_.endpoint);
      const auto secs = std::chrono::duration<double>(opts_.timeout_s);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(secs);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = send(client);
      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status >= 400 && res->status < 500) {
        fail(ErrorKind::Transport, opts_.endpoint + path + ": HTTP " +
                                       std::to_string(res->status) + ": " + res->body);
      } else if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
      } else {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          fail(ErrorKind::Transport, opts_.endpoint + path + ": malformed response: " + e.what());
        }
      }
      if (attempt < opts_.retries)
        std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
    fail(ErrorKind::Transport, opts_.endpoint + path + ": " + last_error + " after " +
                                   std::to_string(opts_.retries + 1) + " attempts");
  }

  RemoteOptions opts_;
};

class RemoteGenerator final : public TextGenerator, public PerplexityScorer {
 public:
  explicit RemoteGenerator(RemoteOptions opts) : client_(std::move(opts)) {}

  std::string name() const override { return "remote:" + client_.options().endpoint; }

  // Stable across retries and across runs for the same prompt.
  static std::string request_id(const Prompt& p) {
    return p.id + "-" + hex64(fnv1a64(p.text()));
  }

  std::string generate(const Prompt& p, const GenerationParams& params) const override {
    params.validate();
    const json body = {{"prompt", p.text()},
                       {"max_new_tokens", params.max_new_tokens},
                       {"temperature", params.temperature},
                       {"top_p", params.top_p},
                       {"request_id", request_id(p)}};
    return field<std::string>(client_.post("/generate", body), "text", "/generate");
  }

  double perplexity(const Prompt& p) const override {
    require(p.response.has_value(), ErrorKind::Config, "perplexity requires a response");
    const json body = {{"prompt", p.text()}, {"response", *p.response}};
    return field<double>(client_.post("/perplexity", body), "perplexity", "/perplexity");
  }

  json health() const { return client_.get("/health"); }

 private:
  template <typename T>
  static T field(const json& j, const char* key, const char* path) {
    try {
      return j.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Transport, std::string(path) + ": response lacks '" + key + "': " + e.what());
    }
  }

  RemoteClient client_;
};

// Query encoder backed by POST /embed. The dimension is probed once at
// construction.
class RemoteEncoder final : public TextEncoder {
 public:
  explicit RemoteEncoder(RemoteOptions opts) : client_(std::move(opts)) {
    dim_ = static_cast<int>(embed_one("dimension probe").size());
    require(dim_ > 0, ErrorKind::Transport, "/embed returned an empty vector");
  }

  std::string id() const override {
    return "remote:" + client_.options().endpoint + "/d" + std::to_string(dim_);
  }
  int dim() const override { return dim_; }
  Vector encode(std::string_view text) const override {
    Vector v = embed_one(text);
    require(v.size() == dim_, ErrorKind::Transport, "/embed changed dimension");
    return v;
  }

 private:
  Vector embed_one(std::string_view text) const {
    const json res = client_.post("/embed", {{"texts", json::array({std::string(text)})}});
    try {
      const auto rows = res.at("vectors").get<std::vector<std::vector<double>>>();
      require(rows.size() == 1, ErrorKind::Transport, "/embed: expected one vector");
      return Eigen::Map<const Vector>(rows[0].data(), static_cast<Eigen::Index>(rows[0].size()));
    } catch (const json::exception& e) {
      fail(ErrorKind::Transport, std::string("/embed: malformed response: ") + e.what());
    }
  }

  RemoteClient client_;
  int dim_ = 0;
};

}  // namespace fashrec

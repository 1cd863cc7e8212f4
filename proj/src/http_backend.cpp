#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#ifdef SPP_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "spp/backend.hpp"

namespace spp {

namespace {

// Client-side rate limiter: refills requests_per_minute tokens per minute,
// capacity one burst-minute. acquire() blocks until a token is available.
class TokenBucket {
 public:
  explicit TokenBucket(double per_minute)
      : capacity_(per_minute > 0 ? per_minute : 1.0),
        tokens_(capacity_),
        last_(clock::now()) {}

  void acquire() {
    for (;;) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        refill();
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
  }

 private:
  using clock = std::chrono::steady_clock;

  void refill() {
    auto now = clock::now();
    double minutes = std::chrono::duration<double>(now - last_).count() / 60.0;
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + minutes * capacity_);
  }

  double capacity_;
  double tokens_;
  clock::time_point last_;
  std::mutex mu_;
};

}  // namespace

struct HttpBackend::Impl {
  HttpBackendConfig config;
  TokenCounter counter = TokenCounter::whitespace();
  TokenBucket bucket;
  std::atomic<bool> missing_usage{false};

  explicit Impl(HttpBackendConfig c)
      : config(std::move(c)), bucket(config.requests_per_minute) {
    counter = make_token_counter(config.counter);
  }
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))),
      id_("http:" + impl_->config.model) {}

HttpBackend::~HttpBackend() = default;

bool HttpBackend::saw_missing_usage() const { return impl_->missing_usage; }

Completion HttpBackend::complete(const std::string& prompt,
                                 const GenerationParams& params) {
  const char* base = std::getenv(impl_->config.base_url_env.c_str());
  if (!base || !*base) {
    // Names only; never log environment variable values.
    throw BackendError(BackendFault::Configuration,
                       "endpoint env var not set: " + impl_->config.base_url_env);
  }
  const char* key = std::getenv(impl_->config.api_key_env.c_str());

  std::string base_url(base);
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();

  nlohmann::json body{
      {"model", impl_->config.model},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", params.temperature},
      {"max_tokens", params.max_output_tokens},
  };

  impl_->bucket.acquire();

  httplib::Client client(base_url);
#ifndef SPP_HAVE_OPENSSL
  if (base_url.rfind("https://", 0) == 0) {
    throw BackendError(BackendFault::Configuration,
                       "built without TLS support; use an http:// endpoint");
  }
#endif
  client.set_connection_timeout(impl_->config.timeout_seconds, 0);
  client.set_read_timeout(impl_->config.timeout_seconds, 0);
  httplib::Headers headers;
  if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);

  auto res = client.Post("/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) {
    throw BackendError(BackendFault::Transport,
                       "transport failure: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw BackendError(BackendFault::Transport,
                       "server returned status " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw BackendError(BackendFault::ProviderRefusal,
                       "provider refused with status " + std::to_string(res->status));
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw BackendError(BackendFault::MalformedResponse,
                       std::string("response is not JSON: ") + e.what());
  }

  Completion out;
  try {
    out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError(BackendFault::MalformedResponse,
                       "response lacks choices[0].message.content");
  }

  if (doc.contains("usage") && doc["usage"].is_object() &&
      doc["usage"].contains("prompt_tokens") &&
      doc["usage"].contains("completion_tokens")) {
    out.input_tokens = doc["usage"]["prompt_tokens"].get<std::int64_t>();
    out.output_tokens = doc["usage"]["completion_tokens"].get<std::int64_t>();
  } else {
    out.input_tokens = impl_->counter.count(prompt);
    out.output_tokens = impl_->counter.count(out.text);
    out.counted_locally = true;
    impl_->missing_usage = true;
  }
  return out;
}

}  // namespace spp

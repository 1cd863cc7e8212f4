#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spp/program.hpp"

// Text-generation backends. Access is black-box: a prompt goes in, response
// text and token counts come out. Determinism contract: the mock backend is
// a pure function of the prompt bytes and generation parameters.

namespace spp {

enum class BackendFault {
  Transport,        // connect/timeout/5xx/429; retryable
  ProviderRefusal,  // 4xx or provider-side rejection; never retried
  Configuration,    // missing endpoint/credentials; never retried
  MalformedResponse,
};

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendFault fault, const std::string& message)
      : std::runtime_error(message), fault_(fault) {}
  BackendFault fault() const { return fault_; }
  bool retryable() const { return fault_ == BackendFault::Transport; }

 private:
  BackendFault fault_;
};

class VocabLoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Token counting. Kinds: whitespace (maximal non-whitespace runs),
/// chars-div-4 (ceil(bytes/4)), external-vocab (greedy longest match over a
/// newline-separated vocabulary file; unmatched bytes count one each).
class TokenCounter {
 public:
  static TokenCounter whitespace();
  static TokenCounter chars_div_4();
  static TokenCounter external_vocab(const std::string& vocab_path);

  std::int64_t count(std::string_view text) const;
  const std::string& kind_name() const { return kind_; }

 private:
  TokenCounter() = default;
  std::string kind_ = "whitespace";
  std::shared_ptr<const std::set<std::string>> vocab_;
  std::size_t vocab_max_len_ = 0;
};

struct TokenCounterSpec {
  std::string kind = "whitespace";
  std::string vocab_source;  // external-vocab only
};

TokenCounter make_token_counter(const TokenCounterSpec& spec);

struct Completion {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  bool counted_locally = false;  // true when usage came from a local counter
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Stable identifier; part of every cache key.
  virtual const std::string& id() const = 0;
  virtual Completion complete(const std::string& prompt,
                              const GenerationParams& params) = 0;
};

/// Test backend wrapping a response function; token counts are local.
class CallbackBackend : public Backend {
 public:
  using Fn = std::function<std::string(const std::string&, const GenerationParams&)>;
  CallbackBackend(std::string id, Fn fn,
                  TokenCounter counter = TokenCounter::whitespace())
      : id_(std::move(id)), fn_(std::move(fn)), counter_(std::move(counter)) {}

  const std::string& id() const override { return id_; }
  Completion complete(const std::string& prompt,
                      const GenerationParams& params) override;

 private:
  std::string id_;
  Fn fn_;
  TokenCounter counter_;
};

// Scripted mock backend. Script file format:
//   {"rules": [{"match": "...", "regex": false, "min-example-answers": 0,
//               "respond": "...", "answers": {"question": "label", ...}}, ...],
//    "default": "...", "latency-ms": 0}
// The first matching rule wins. A rule matches when `match` is found in the
// prompt (substring, or ECMAScript regex when `regex` is true) and the prompt
// contains at least `min-example-answers` lines starting "A[<i>]:".
// Response forms:
//   literal text            sent back as-is
//   "@aligned:<text>"       one "A[i]: <text>" line per live question
//   "@lookup"               per live question, "A[i]: <answers[question]>";
//                           unmapped questions answer "?"
// Live questions are the "Q[i]: ..." lines after the last "A[j]:" line.
struct MockRule {
  std::string match;
  bool regex = false;
  std::int64_t min_example_answers = 0;
  std::string respond;
  std::map<std::string, std::string> answers;
};

struct MockScript {
  std::vector<MockRule> rules;
  std::string default_response;
  std::int64_t latency_ms = 0;

  static MockScript from_json_text(std::string_view text);
  static MockScript load(const std::string& path);
};

class MockBackend : public Backend {
 public:
  explicit MockBackend(MockScript script, std::string id = "mock",
                       TokenCounter counter = TokenCounter::whitespace())
      : script_(std::move(script)),
        id_(std::move(id)),
        counter_(std::move(counter)) {}

  const std::string& id() const override { return id_; }
  Completion complete(const std::string& prompt,
                      const GenerationParams& params) override;

 private:
  MockScript script_;
  std::string id_;
  TokenCounter counter_;
};

// Prompt helpers shared by the mock backend and tests.
struct QaLine {
  std::int64_t index = 0;
  std::string text;
};
/// All "Q[i]: ..." lines in order of appearance.
std::vector<QaLine> qa_question_lines(std::string_view prompt);
/// Count of lines starting "A[<digits>]:".
std::int64_t qa_answer_line_count(std::string_view prompt);
/// Questions after the last answer line (the live block).
std::vector<QaLine> qa_live_questions(std::string_view prompt);

// HTTP backend speaking the chat-completions wire shape:
//   POST {base}/chat/completions
//   {"model": ..., "messages": [{"role": "user", "content": ...}],
//    "temperature": ..., "max_tokens": ...}
// Endpoint and credentials come from environment variables whose NAMES are
// configured here; their values are never logged.
struct HttpBackendConfig {
  std::string model;
  std::string base_url_env = "SPP_BACKEND_BASE_URL";
  std::string api_key_env = "SPP_BACKEND_API_KEY";
  double requests_per_minute = 60.0;  // client-side token bucket
  TokenCounterSpec counter;           // fallback when usage is missing
  int timeout_seconds = 120;
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  const std::string& id() const override { return id_; }
  Completion complete(const std::string& prompt,
                      const GenerationParams& params) override;

  /// True once at least one response lacked provider usage fields.
  bool saw_missing_usage() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string id_;
};

}  // namespace spp

#include "spp/runtime.hpp"

#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <regex>
#include <thread>

#include <nlohmann/json.hpp>

namespace spp {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void append_joined(std::string& out, const std::string& piece, bool first,
                   const char* sep) {
  if (!first) out += sep;
  out += piece;
}

}  // namespace

std::int64_t ExecutionResult::charged_input_tokens() const {
  std::int64_t total = 0;
  for (const auto& c : calls)
    if (!c.cache_hit) total += c.input_tokens;
  return total;
}

std::int64_t ExecutionResult::charged_output_tokens() const {
  std::int64_t total = 0;
  for (const auto& c : calls)
    if (!c.cache_hit) total += c.output_tokens;
  return total;
}

// ---------------------------------------------------------------------------
// Format grammars
// ---------------------------------------------------------------------------

std::string render_examples(const ExampleList& examples, std::size_t count,
                            const std::string& data_format) {
  count = std::min(count, examples.size());
  std::string out;
  if (data_format == formats::kQaBatch) {
    char head[32];
    for (std::size_t i = 0; i < count; ++i) {
      std::snprintf(head, sizeof(head), "Q[%zu]: ", i);
      append_joined(out, head + examples[i].input, i == 0, "\n");
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::snprintf(head, sizeof(head), "A[%zu]: ", i);
      append_joined(out, head + examples[i].output, out.empty(), "\n");
    }
    return out;
  }
  if (data_format == formats::kPlaintext) {
    for (std::size_t i = 0; i < count; ++i) {
      append_joined(out, "Input: " + examples[i].input + "\nOutput: " + examples[i].output,
                    i == 0, "\n\n");
    }
    return out;
  }
  if (data_format == formats::kJson) {
    for (std::size_t i = 0; i < count; ++i) {
      nlohmann::json obj{{"input", examples[i].input}, {"output", examples[i].output}};
      append_joined(out, obj.dump(), i == 0, "\n");
    }
    return out;
  }
  if (data_format == formats::kXml) {
    for (std::size_t i = 0; i < count; ++i) {
      append_joined(out,
                    "<example><input>" + examples[i].input + "</input><output>" +
                        examples[i].output + "</output></example>",
                    i == 0, "\n");
    }
    return out;
  }
  return out;  // unknown formats render empty; validation rejects them upstream
}

std::string render_live(const std::vector<DataRow>& rows,
                        const std::string& data_format) {
  std::string out;
  if (data_format == formats::kQaBatch) {
    char head[32];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::snprintf(head, sizeof(head), "Q[%zu]: ", i);
      append_joined(out, head + rows[i].input, i == 0, "\n");
    }
    return out;
  }
  if (data_format == formats::kPlaintext) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      append_joined(out, "Input: " + rows[i].input, i == 0, "\n\n");
    return out;
  }
  if (data_format == formats::kJson) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      nlohmann::json obj{{"input", rows[i].input}};
      append_joined(out, obj.dump(), i == 0, "\n");
    }
    return out;
  }
  if (data_format == formats::kXml) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      append_joined(out, "<example><input>" + rows[i].input + "</input></example>",
                    i == 0, "\n");
    return out;
  }
  return out;
}

std::string render_section(const std::string& title,
                           const std::string& section_format,
                           const std::string& content) {
  if (section_format == formats::kXml) {
    std::string tag = ascii_lower(title);
    return "<" + tag + ">" + content + "</" + tag + ">";
  }
  return "# " + title + "\n" + content + "\n";
}

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

namespace {

// Collects "A[i]: value" lines into index → value (first occurrence wins).
std::unordered_map<std::size_t, std::string> answer_lines(const std::string& text) {
  std::unordered_map<std::size_t, std::string> found;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos
                                                                 : eol - pos);
    if (line.size() >= 4 && line[0] == 'A' && line[1] == '[') {
      std::size_t digits = 2;
      while (digits < line.size() &&
             std::isdigit(static_cast<unsigned char>(line[digits])))
        ++digits;
      if (digits > 2 && digits + 1 < line.size() && line[digits] == ']' &&
          line[digits + 1] == ':') {
        std::size_t index = std::stoul(line.substr(2, digits - 2));
        found.emplace(index, trim(line.substr(digits + 2)));
      }
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return found;
}

void note_error(std::vector<ExecError>* errors, std::size_t row, std::string message) {
  if (errors) errors->push_back(ExecError{row, std::move(message)});
}

}  // namespace

std::vector<Answer> parse_output(const std::string& response,
                                 const std::string& parser_kind,
                                 const std::string& parser_pattern,
                                 std::size_t expected_count,
                                 std::vector<ExecError>* errors) {
  std::vector<Answer> out(expected_count);

  if (parser_kind == formats::kBatchAnswers) {
    auto found = answer_lines(response);
    for (std::size_t i = 0; i < expected_count; ++i) {
      auto it = found.find(i);
      if (it != found.end()) {
        out[i] = it->second;
      } else {
        note_error(errors, i, "no answer line for index " + std::to_string(i));
      }
    }
    return out;
  }

  if (parser_kind == formats::kRegexExtract) {
    std::vector<std::string> captures;
    try {
      std::regex re(parser_pattern);
      auto begin = std::sregex_iterator(response.begin(), response.end(), re);
      for (auto it = begin; it != std::sregex_iterator(); ++it) {
        if (it->size() > 1) captures.push_back((*it)[1].str());
      }
    } catch (const std::regex_error& e) {
      note_error(errors, 0, std::string("invalid extraction pattern: ") + e.what());
      return out;
    }
    for (std::size_t i = 0; i < expected_count; ++i) {
      if (i < captures.size()) {
        out[i] = captures[i];
      } else {
        note_error(errors, i, "no match for answer " + std::to_string(i));
      }
    }
    return out;
  }

  if (parser_kind == formats::kJsonField) {
    nlohmann::json doc = nlohmann::json::parse(response, nullptr, false);
    if (doc.is_object() && doc.contains(parser_pattern)) {
      const auto& field = doc[parser_pattern];
      out[0] = field.is_string() ? field.get<std::string>() : field.dump();
      for (std::size_t i = 1; i < expected_count; ++i)
        note_error(errors, i, "json-field parser yields a single answer");
    } else {
      for (std::size_t i = 0; i < expected_count; ++i)
        note_error(errors, i,
                   doc.is_discarded() ? "response is not a JSON object"
                                      : "field '" + parser_pattern + "' absent");
    }
    return out;
  }

  // identity (and the default for programs without a parser node)
  out[0] = trim(response);
  for (std::size_t i = 1; i < expected_count; ++i)
    note_error(errors, i, "identity parser yields a single answer");
  return out;
}

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

struct EvalCache::Impl {
  mutable std::mutex mu;
  std::condition_variable cv;

  std::unordered_map<std::string, Entry> committed;
  std::map<std::string, Entry> pending;  // sorted: deterministic persist order

  struct Inflight {
    bool done = false;
    bool failed = false;
    BackendFault fault = BackendFault::Transport;
    std::string error;
    Entry entry;
  };
  std::unordered_map<std::string, std::shared_ptr<Inflight>> inflight;

  std::string persist_path;
  bool persist = false;
  bool persist_ok = true;
};

EvalCache::EvalCache() : impl_(std::make_unique<Impl>()) {}
EvalCache::~EvalCache() = default;

EvalCache::EvalCache(std::string persist_path) : impl_(std::make_unique<Impl>()) {
  impl_->persist = true;
  impl_->persist_path = std::move(persist_path);
  std::ifstream in(impl_->persist_path);
  if (!in.is_open()) return;  // created on first commit
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("key-hash") ||
        !doc.contains("response")) {
      std::fprintf(stderr, "warning: skipping malformed cache line %zu in %s\n",
                   lineno, impl_->persist_path.c_str());
      continue;
    }
    Entry e;
    e.response = doc["response"].get<std::string>();
    e.input_tokens = doc.value("input-tokens", std::int64_t{0});
    e.output_tokens = doc.value("output-tokens", std::int64_t{0});
    impl_->committed[doc["key-hash"].get<std::string>()] = std::move(e);
  }
}

std::optional<EvalCache::Entry> EvalCache::committed_lookup(
    const std::string& key) const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  auto it = impl_->committed.find(key);
  if (it == impl_->committed.end()) return std::nullopt;
  return it->second;
}

EvalCache::Entry EvalCache::fetch_or_call(const std::string& key,
                                          const std::function<Entry()>& fn) {
  std::shared_ptr<Impl::Inflight> flight;
  {
    std::unique_lock<std::mutex> lock(impl_->mu);
    if (auto it = impl_->committed.find(key); it != impl_->committed.end())
      return it->second;
    if (auto it = impl_->pending.find(key); it != impl_->pending.end())
      return it->second;
    auto it = impl_->inflight.find(key);
    if (it != impl_->inflight.end()) {
      flight = it->second;
      impl_->cv.wait(lock, [&] { return flight->done; });
      if (flight->failed) throw BackendError(flight->fault, flight->error);
      return flight->entry;
    }
    flight = std::make_shared<Impl::Inflight>();
    impl_->inflight.emplace(key, flight);
  }

  try {
    Entry e = fn();
    {
      std::lock_guard<std::mutex> lock(impl_->mu);
      impl_->pending[key] = e;
      impl_->inflight.erase(key);
      flight->done = true;
      flight->entry = e;
    }
    impl_->cv.notify_all();
    return e;
  } catch (const BackendError& err) {
    {
      std::lock_guard<std::mutex> lock(impl_->mu);
      impl_->inflight.erase(key);
      flight->done = true;
      flight->failed = true;
      flight->fault = err.fault();
      flight->error = err.what();
    }
    impl_->cv.notify_all();
    throw;
  } catch (...) {
    {
      std::lock_guard<std::mutex> lock(impl_->mu);
      impl_->inflight.erase(key);
      flight->done = true;
      flight->failed = true;
      flight->fault = BackendFault::Transport;
      flight->error = "backend call failed";
    }
    impl_->cv.notify_all();
    throw;
  }
}

void EvalCache::commit() {
  std::lock_guard<std::mutex> lock(impl_->mu);
  if (impl_->pending.empty()) return;
  if (impl_->persist && impl_->persist_ok) {
    std::ofstream out(impl_->persist_path, std::ios::app);
    if (!out.is_open()) {
      std::fprintf(stderr, "warning: cannot append to cache file %s; continuing in memory\n",
                   impl_->persist_path.c_str());
      impl_->persist_ok = false;
    } else {
      for (const auto& [key, e] : impl_->pending) {
        nlohmann::ordered_json doc{{"key-hash", key},
                                   {"response", e.response},
                                   {"input-tokens", e.input_tokens},
                                   {"output-tokens", e.output_tokens}};
        out << doc.dump() << "\n";
      }
    }
  }
  for (auto& [key, e] : impl_->pending) impl_->committed[key] = std::move(e);
  impl_->pending.clear();
}

std::size_t EvalCache::committed_size() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->committed.size();
}

std::size_t EvalCache::pending_size() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->pending.size();
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string cache_key(const std::string& backend_id, const std::string& prompt,
                      const GenerationParams& params) {
  char tail[64];
  std::snprintf(tail, sizeof(tail), "\x1f%.17g\x1f%lld", params.temperature,
                static_cast<long long>(params.max_output_tokens));
  std::string canonical = backend_id + '\x1f' + prompt + tail;
  // Two independent 64-bit streams; collisions are negligible at cache scale.
  std::uint64_t a = fnv1a(canonical, 14695981039346656037ull);
  std::uint64_t b = fnv1a(canonical, 0x9e3779b97f4a7c15ull);
  char out[33];
  std::snprintf(out, sizeof(out), "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return out;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

BackendCall ExecutionContext::cached_call(const std::string& prompt,
                                          const GenerationParams& params) {
  const std::string key = cache_key(backend->id(), prompt, params);

  auto call_with_retries = [&]() -> EvalCache::Entry {
    int attempt = 0;
    for (;;) {
      try {
        Completion c = backend->complete(prompt, params);
        return EvalCache::Entry{c.text, c.input_tokens, c.output_tokens};
      } catch (const BackendError& e) {
        if (!e.retryable() || attempt >= max_retries) throw;
        int delay = backoff_ms << attempt;
        if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        ++attempt;
      }
    }
  };

  bool hit = false;
  EvalCache::Entry entry;
  if (auto it = seen.find(key); it != seen.end()) {
    hit = true;
    entry = it->second;
  } else if (cache) {
    if (auto committed = cache->committed_lookup(key)) {
      hit = true;
      entry = *committed;
    } else {
      // Charged even if a sibling candidate already issued the same call this
      // generation: accounting must not depend on evaluation order.
      entry = cache->fetch_or_call(key, call_with_retries);
    }
    seen.emplace(key, entry);
  } else {
    entry = call_with_retries();
    seen.emplace(key, entry);
  }

  BackendCall call;
  call.prompt = prompt;
  call.response = entry.response;
  call.input_tokens = entry.input_tokens;
  call.output_tokens = entry.output_tokens;
  call.cache_hit = hit;
  return call;
}

namespace {

// Depth-first two-phase evaluation: the top-down phase passes the input rows
// (the only binding in v1), children evaluate in order, and the bottom-up
// phase aggregates child texts per node kind.
struct Evaluator {
  const PromptProgram& program;
  const std::vector<DataRow>& rows;
  ExecutionContext* ctx;      // nullptr = render mode (no backend)
  ExecutionResult* result;    // nullptr in render mode
  bool have_outputs = false;

  std::string join_children(const Node& n) {
    std::string out;
    for (std::size_t i = 0; i < n.children.size(); ++i)
      append_joined(out, eval(n.children[i]), i == 0, "\n");
    return out;
  }

  std::string format_of(const Node& n) {
    const std::string* f = attr_string(n, attr::kDataFormat);
    return f ? *f : std::string(formats::kQaBatch);
  }

  std::string eval(NodeId id) {
    const Node& n = program.at(id);
    switch (n.kind) {
      case NodeKind::Text: {
        const std::string* content = attr_string(n, attr::kContent);
        return content ? *content : std::string();
      }
      case NodeKind::Concat:
        return join_children(n);
      case NodeKind::Section: {
        const std::string* title = attr_string(n, attr::kTitle);
        const std::string* fmt = attr_string(n, attr::kSectionFormat);
        return render_section(title ? *title : std::string(),
                              fmt ? *fmt : std::string(formats::kMarkdown),
                              join_children(n));
      }
      case NodeKind::FewShotExamples: {
        const ExampleList* stored = attr_example_list(n);
        static const ExampleList kEmpty;
        return render_examples(stored ? *stored : kEmpty,
                               effective_example_count(n), format_of(n));
      }
      case NodeKind::InputData:
        return render_live(rows, format_of(n));
      case NodeKind::GenerateText: {
        std::string prompt = eval(n.children.at(0));
        if (!ctx) return prompt;
        GenerationParams params =
            attr_generation_params(n).value_or(GenerationParams{});
        BackendCall call = ctx->cached_call(prompt, params);
        result->calls.push_back(call);
        return call.response;
      }
      case NodeKind::OutputParser: {
        std::string text = eval(n.children.at(0));
        if (result && !have_outputs) {
          have_outputs = true;
          const std::string* kind = attr_string(n, attr::kParserKind);
          const std::string* pattern = attr_string(n, attr::kParserPattern);
          result->outputs = parse_output(
              text, kind ? *kind : std::string(formats::kIdentity),
              pattern ? *pattern : std::string(), rows.size(), &result->errors);
        }
        return text;
      }
    }
    return {};
  }
};

}  // namespace

std::string render(const PromptProgram& program,
                   const std::vector<DataRow>& rows) {
  NodeId target = program.root();
  for (NodeId id : program.preorder()) {
    if (program.at(id).kind == NodeKind::GenerateText) {
      target = program.at(id).children.at(0);
      break;
    }
  }
  Evaluator ev{program, rows, nullptr, nullptr};
  return ev.eval(target);
}

ExecutionResult execute(const PromptProgram& program,
                        const std::vector<DataRow>& rows,
                        ExecutionContext& ctx) {
  ExecutionResult result;
  Evaluator ev{program, rows, &ctx, &result};
  result.raw_response = ev.eval(program.root());
  if (!ev.have_outputs) {
    result.outputs = parse_output(result.raw_response, formats::kIdentity, "",
                                  rows.size(), &result.errors);
  }
  return result;
}

}  // namespace spp

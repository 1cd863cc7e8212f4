#include "spp/backend.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace spp {

// ─── token counters ─────────────────────────────────────────────────────────

TokenCounter TokenCounter::whitespace() {
  TokenCounter c;
  c.kind_ = "whitespace";
  return c;
}

TokenCounter TokenCounter::chars_div_4() {
  TokenCounter c;
  c.kind_ = "chars-div-4";
  return c;
}

TokenCounter TokenCounter::external_vocab(const std::string& vocab_path) {
  std::ifstream in(vocab_path, std::ios::binary);
  if (!in) throw VocabLoadError("cannot open vocabulary file: " + vocab_path);
  auto vocab = std::make_shared<std::set<std::string>>();
  std::size_t max_len = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    max_len = std::max(max_len, line.size());
    vocab->insert(line);
  }
  if (vocab->empty()) {
    throw VocabLoadError("vocabulary file has no entries: " + vocab_path);
  }
  TokenCounter c;
  c.kind_ = "external-vocab";
  c.vocab_ = std::move(vocab);
  c.vocab_max_len_ = max_len;
  return c;
}

std::int64_t TokenCounter::count(std::string_view text) const {
  if (kind_ == "whitespace") {
    std::int64_t tokens = 0;
    bool in_run = false;
    for (unsigned char ch : text) {
      bool ws = std::isspace(ch) != 0;
      if (!ws && !in_run) ++tokens;
      in_run = !ws;
    }
    return tokens;
  }
  if (kind_ == "chars-div-4") {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
  }
  // external-vocab: greedy longest match; unmatched bytes count one each
  std::int64_t tokens = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t longest = 0;
    std::size_t limit = std::min(vocab_max_len_, text.size() - pos);
    for (std::size_t len = limit; len >= 1; --len) {
      if (vocab_->count(std::string(text.substr(pos, len)))) {
        longest = len;
        break;
      }
    }
    pos += longest ? longest : 1;
    ++tokens;
  }
  return tokens;
}

TokenCounter make_token_counter(const TokenCounterSpec& spec) {
  if (spec.kind == "whitespace") return TokenCounter::whitespace();
  if (spec.kind == "chars-div-4") return TokenCounter::chars_div_4();
  if (spec.kind == "external-vocab") {
    return TokenCounter::external_vocab(spec.vocab_source);
  }
  throw std::invalid_argument("unknown token counter kind: " + spec.kind);
}

// ─── qa prompt helpers ──────────────────────────────────────────────────────

namespace {

// Lines starting "Q[<digits>]: " or "A[<digits>]: "; returns (offset, index,
// is_answer, content-begin) tuples in order.
struct TagLine {
  std::size_t offset;
  std::int64_t index;
  bool answer;
  std::size_t content;
};

std::vector<TagLine> tag_lines(std::string_view prompt) {
  std::vector<TagLine> out;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    std::size_t eol = prompt.find('\n', pos);
    std::string_view line = prompt.substr(
        pos, eol == std::string_view::npos ? prompt.size() - pos : eol - pos);
    if (line.size() >= 5 && (line[0] == 'Q' || line[0] == 'A') && line[1] == '[') {
      std::size_t close = line.find(']', 2);
      if (close != std::string_view::npos && close + 1 < line.size() &&
          line[close + 1] == ':') {
        bool digits = close > 2;
        for (std::size_t i = 2; i < close && digits; ++i) {
          digits = std::isdigit(static_cast<unsigned char>(line[i])) != 0;
        }
        if (digits) {
          std::int64_t idx = 0;
          for (std::size_t i = 2; i < close; ++i) idx = idx * 10 + (line[i] - '0');
          std::size_t content = close + 2;
          if (content < line.size() && line[content] == ' ') ++content;
          out.push_back({pos, idx, line[0] == 'A', pos + content});
        }
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return out;
}

// Question content runs from its tag to the next tagged line (or text end),
// excluding the final newline; embedded newlines belong to the question.
std::vector<QaLine> questions_from(std::string_view prompt,
                                   const std::vector<TagLine>& tags,
                                   std::size_t first) {
  std::vector<QaLine> out;
  for (std::size_t i = first; i < tags.size(); ++i) {
    if (tags[i].answer) continue;
    std::size_t end =
        i + 1 < tags.size() ? tags[i + 1].offset : prompt.size();
    std::string_view body = prompt.substr(tags[i].content, end - tags[i].content);
    while (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    out.push_back({tags[i].index, std::string(body)});
  }
  return out;
}

}  // namespace

std::vector<QaLine> qa_question_lines(std::string_view prompt) {
  return questions_from(prompt, tag_lines(prompt), 0);
}

std::int64_t qa_answer_line_count(std::string_view prompt) {
  std::int64_t n = 0;
  for (const auto& t : tag_lines(prompt)) n += t.answer ? 1 : 0;
  return n;
}

std::vector<QaLine> qa_live_questions(std::string_view prompt) {
  auto tags = tag_lines(prompt);
  std::size_t first = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].answer) first = i + 1;
  }
  return questions_from(prompt, tags, first);
}

// ─── callback backend ───────────────────────────────────────────────────────

Completion CallbackBackend::complete(const std::string& prompt,
                                     const GenerationParams& params) {
  Completion c;
  c.text = fn_(prompt, params);
  c.input_tokens = counter_.count(prompt);
  c.output_tokens = counter_.count(c.text);
  c.counted_locally = true;
  return c;
}

// ─── mock backend ───────────────────────────────────────────────────────────

MockScript MockScript::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("mock script: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("mock script must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "rules" && it.key() != "default" && it.key() != "latency-ms") {
      throw std::invalid_argument("mock script: unknown field '" + it.key() + "'");
    }
  }
  MockScript s;
  if (doc.contains("default")) s.default_response = doc["default"].get<std::string>();
  if (doc.contains("latency-ms")) s.latency_ms = doc["latency-ms"].get<std::int64_t>();
  if (doc.contains("rules")) {
    for (const auto& rj : doc["rules"]) {
      for (auto it = rj.begin(); it != rj.end(); ++it) {
        if (it.key() != "match" && it.key() != "regex" &&
            it.key() != "min-example-answers" && it.key() != "respond" &&
            it.key() != "answers") {
          throw std::invalid_argument("mock rule: unknown field '" + it.key() + "'");
        }
      }
      MockRule r;
      if (rj.contains("match")) r.match = rj["match"].get<std::string>();
      if (rj.contains("regex")) r.regex = rj["regex"].get<bool>();
      if (rj.contains("min-example-answers")) {
        r.min_example_answers = rj["min-example-answers"].get<std::int64_t>();
      }
      if (rj.contains("respond")) r.respond = rj["respond"].get<std::string>();
      if (rj.contains("answers")) {
        for (auto it = rj["answers"].begin(); it != rj["answers"].end(); ++it) {
          r.answers[it.key()] = it.value().get<std::string>();
        }
      }
      s.rules.push_back(std::move(r));
    }
  }
  return s;
}

MockScript MockScript::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open mock script: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

namespace {

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string expand_response(const std::string& form, const MockRule* rule,
                            const std::string& prompt) {
  constexpr std::string_view kAligned = "@aligned:";
  if (form.rfind(kAligned, 0) == 0) {
    std::string fill = form.substr(kAligned.size());
    std::string out;
    for (const auto& q : qa_live_questions(prompt)) {
      if (!out.empty()) out += "\n";
      out += "A[" + std::to_string(q.index) + "]: " + fill;
    }
    return out;
  }
  if (form == "@lookup") {
    std::string out;
    for (const auto& q : qa_live_questions(prompt)) {
      std::string key = trim_copy(q.text);
      std::string ans = "?";
      if (rule) {
        auto it = rule->answers.find(key);
        if (it != rule->answers.end()) ans = it->second;
      }
      if (!out.empty()) out += "\n";
      out += "A[" + std::to_string(q.index) + "]: " + ans;
    }
    return out;
  }
  return form;
}

}  // namespace

Completion MockBackend::complete(const std::string& prompt,
                                 const GenerationParams& params) {
  (void)params;
  if (script_.latency_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(script_.latency_ms));
  }
  std::string text;
  bool matched = false;
  std::int64_t answer_lines = qa_answer_line_count(prompt);
  for (const auto& rule : script_.rules) {
    if (answer_lines < rule.min_example_answers) continue;
    bool hit;
    if (rule.regex) {
      hit = std::regex_search(prompt, std::regex(rule.match));
    } else {
      hit = rule.match.empty() || prompt.find(rule.match) != std::string::npos;
    }
    if (hit) {
      text = expand_response(rule.respond, &rule, prompt);
      matched = true;
      break;
    }
  }
  if (!matched) text = expand_response(script_.default_response, nullptr, prompt);

  Completion c;
  c.text = std::move(text);
  c.input_tokens = counter_.count(prompt);
  c.output_tokens = counter_.count(c.text);
  c.counted_locally = true;
  return c;
}

}  // namespace spp

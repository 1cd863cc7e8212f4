#pragma once

// Execution engine: renders programs to prompt text, invokes the backend at
// GenerateText nodes, parses responses into per-row answers, and deduplicates
// backend calls through a generation-barrier response cache.
//
// Evaluation of a program over a minibatch is a two-phase recursion: state
// (the input rows) flows top-down, each node evaluates its children in order,
// and text values aggregate bottom-up.  With a deterministic backend the
// whole pipeline is a pure function of (program, rows) — byte-identical
// across runs and across worker counts.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spp/backend.hpp"
#include "spp/program.hpp"

namespace spp {

// Per-row parsed answer.  nullopt is the distinguished "no usable answer"
// marker — distinct from an answer that happens to be the empty string.
using Answer = std::optional<std::string>;

struct DataRow {
  std::string id;
  std::string input;
  std::string label;
};

// One backend invocation as seen by cost accounting.  cache_hit calls are
// charged zero tokens by the budget/cost views.
struct BackendCall {
  std::string prompt;
  std::string response;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  bool cache_hit = false;
};

// A per-row parse failure.  Recorded, never thrown: a misformatted response
// scores as wrong answers instead of aborting the evaluation.
struct ExecError {
  std::size_t row = 0;
  std::string message;
};

struct ExecutionResult {
  std::vector<Answer> outputs;    // always aligned: outputs.size() == rows.size()
  std::string raw_response;       // text value of the root after evaluation
  std::vector<BackendCall> calls;
  std::vector<ExecError> errors;

  std::int64_t charged_input_tokens() const;
  std::int64_t charged_output_tokens() const;
};

// ---------------------------------------------------------------------------
// Format grammars.  These renderings are frozen byte-for-byte (golden-file
// tested); mutators flip formats, so equality between two renderings must be
// a meaningful comparison.  Values are embedded verbatim — no escaping.
//
//   qa-batch  examples: "Q[0]: <in>" lines for every pair, then "A[0]: <out>"
//             lines; zero-based, single space after the colon, "\n" between
//             lines, no trailing newline.  live: the question lines only.
//   plaintext examples: "Input: <in>\nOutput: <out>" blocks separated by a
//             blank line.  live: "Input: <in>" blocks.
//   json      one compact object per line: {"input":..,"output":..}; live
//             objects carry only "input".
//   xml       "<example><input>..</input><output>..</output></example>" per
//             line; live examples omit the <output> element.
//   sections  markdown: "# <Title>\n<content>\n"
//             xml:      "<lowercased-title><content></lowercased-title>"
// ---------------------------------------------------------------------------
std::string render_examples(const ExampleList& examples, std::size_t count,
                            const std::string& data_format);
std::string render_live(const std::vector<DataRow>& rows,
                        const std::string& data_format);
std::string render_section(const std::string& title,
                           const std::string& section_format,
                           const std::string& content);

// Parses a backend response into exactly `expected_count` answers.
//   identity      → whole trimmed response as the single answer
//   batch-answers → per index i, the trimmed text after "A[i]:" on its line
//   regex-extract → first capture group of the i-th match of `pattern`
//   json-field    → field `pattern` of a JSON object response
// Missing slots become nullopt markers; if `errors` is non-null a record is
// appended per missing slot.
std::vector<Answer> parse_output(const std::string& response,
                                 const std::string& parser_kind,
                                 const std::string& parser_pattern,
                                 std::size_t expected_count,
                                 std::vector<ExecError>* errors = nullptr);

// ---------------------------------------------------------------------------
// Response cache.
//
// Keys cover (backend-id, prompt, generation-params) exactly.  The cache has
// two layers: a committed set, and a pending set absorbed into it only at
// commit() barriers.  Searches call commit() between generations, so whether
// a call is *accounted* as a hit depends only on completed generations plus
// the caller's own history — never on scheduling order within a generation.
// Physically, identical in-flight calls are coalesced so the backend sees
// each distinct prompt at most once.
// ---------------------------------------------------------------------------
class EvalCache {
 public:
  struct Entry {
    std::string response;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
  };

  EvalCache();
  ~EvalCache();
  EvalCache(const EvalCache&) = delete;
  EvalCache& operator=(const EvalCache&) = delete;

  // Loads previously persisted entries from `path` (created if absent) into
  // the committed set; commit() appends new entries to the same file, one
  // JSON object per line: {"key-hash","response","input-tokens","output-tokens"}.
  // A missing directory or unreadable line degrades to in-memory operation
  // with a warning on stderr.
  explicit EvalCache(std::string persist_path);

  std::optional<Entry> committed_lookup(const std::string& key) const;

  // Returns the entry for `key`, invoking `fn` at most once per key across
  // all threads; concurrent callers for the same key wait for the first.
  // A failed call is not stored, and the failure is rethrown to waiters.
  Entry fetch_or_call(const std::string& key, const std::function<Entry()>& fn);

  // Generation barrier: publish pending entries to the committed set (and
  // the persistence file, in sorted key order).
  void commit();

  std::size_t committed_size() const;
  std::size_t pending_size() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Stable 128-bit content key, hex-encoded.
std::string cache_key(const std::string& backend_id, const std::string& prompt,
                      const GenerationParams& params);

// ---------------------------------------------------------------------------
// Per-candidate execution environment.  `seen` is the candidate's private
// call history: repeats within one candidate are hits no matter what the
// shared cache holds, which keeps accounting independent of both worker
// count and sibling evaluation order.  Not safe to share across threads;
// each worker owns the contexts of the candidates it evaluates.
// ---------------------------------------------------------------------------
struct ExecutionContext {
  Backend* backend = nullptr;
  EvalCache* cache = nullptr;  // optional; without it only `seen` deduplicates

  // Transport errors are retried up to max_retries times with exponential
  // backoff starting at backoff_ms; refusals and malformed responses are not.
  int max_retries = 3;
  int backoff_ms = 100;

  std::unordered_map<std::string, EvalCache::Entry> seen;

  BackendCall cached_call(const std::string& prompt,
                          const GenerationParams& params);
};

// Renders the prompt the first (pre-order) GenerateText node would send:
// its child subtree evaluated bottom-up against `rows`.  Programs without a
// GenerateText node render from the root.  Nested GenerateText nodes inside
// the rendered subtree contribute their child's text.
std::string render(const PromptProgram& program,
                   const std::vector<DataRow>& rows);

// Evaluates `program` on `rows`: depth-first two-phase recursion; the first
// (pre-order) OutputParser defines `outputs` (programs without one fall back
// to the identity parse of the root text).  Backend failures surviving the
// retry policy propagate as BackendError; parse failures are recorded.
ExecutionResult execute(const PromptProgram& program,
                        const std::vector<DataRow>& rows,
                        ExecutionContext& ctx);

}  // namespace spp

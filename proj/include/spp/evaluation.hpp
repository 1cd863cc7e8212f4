#pragma once

// Datasets, metrics, and objectives: normalized exact-match accuracy, the
// weighted token-cost measure, feasibility against an accuracy floor, and
// minibatched candidate evaluation under a shared evaluation budget.

#include <atomic>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "spp/backend.hpp"
#include "spp/program.hpp"
#include "spp/runtime.hpp"

namespace spp {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LengthMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataTable {
  std::vector<DataRow> rows;
  std::string split_name = "train";

  /// Strict JSONL loader: one {"id","input","label"} object per line, all
  /// three fields strings, ids unique. Anything else raises DatasetError.
  static DataTable load_jsonl(const std::string& path,
                              std::string split_name = "train");

  /// n rows sampled without replacement, original order preserved.
  DataTable sample(std::uint64_t seed, std::size_t n) const;

  /// Row-order minibatches of size b (last one may be smaller).
  std::vector<std::vector<DataRow>> batches(std::size_t b) const;

  std::vector<std::string> labels() const;
};

/// Fraction of rows whose normalized output equals the normalized label;
/// normalize = trim + ASCII casefold. nullopt answers never match. Zero rows
/// is defined as 1.0 (with a warning on stderr). Throws LengthMismatch.
double accuracy(const std::vector<Answer>& outputs,
                const std::vector<std::string>& labels);

enum class ObjectiveKind { MaximizeAccuracy, MinCostWithAccuracyFloor };

const char* objective_kind_name(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(const std::string& name);

// Objective-value encoding groups candidates into three strictly ordered
// bands under ascending sort: feasible (weighted cost), infeasible
// (kInfeasibleBand + (1 - accuracy), so higher accuracy sorts first), and
// errored (kErroredValue). Accuracy objectives negate so one ascending
// comparator serves everywhere.
inline constexpr double kInfeasibleBand = 1e15;
inline constexpr double kErroredValue = 1e18;

struct Objective {
  ObjectiveKind kind = ObjectiveKind::MaximizeAccuracy;
  double input_weight = 1.0;
  double output_weight = 2.0;
  double epsilon = 0.02;
  // Floor kind only. NaN = "fix from the first evaluated candidate" — the
  // search resolves it after the seed program's evaluation.
  double baseline_accuracy = std::numeric_limits<double>::quiet_NaN();
  TokenCounterSpec counter;

  bool has_baseline() const { return baseline_accuracy == baseline_accuracy; }
  bool feasible(double train_accuracy) const;
  /// Encoded value for a finished (non-errored) evaluation.
  double value(double train_accuracy, double weighted_cost) const;
};

double weighted_cost(std::int64_t input_tokens, std::int64_t output_tokens,
                     const Objective& objective);

struct CandidateRecord {
  std::int64_t candidate_id = 0;
  std::int64_t generation = 0;
  std::int64_t parent_id = -1;  // -1 = seed / no parent
  std::string mutator;          // creation operator, or grid assignment text
  PromptProgram program;

  double train_accuracy = 0.0;
  std::int64_t charged_input_tokens = 0;
  std::int64_t charged_output_tokens = 0;
  double weighted_cost = 0.0;
  bool feasible = true;
  bool errored = false;
  std::string error;
  double objective_value = 0.0;
  std::int64_t eval_index = -1;  // admission order against the budget
};

/// Evaluates program over the whole table in ⌈n/b⌉ row-order minibatches,
/// sequentially, through one fresh ExecutionContext on `cache`. Fills the
/// measurement fields of the record (identity/lineage fields are the
/// caller's). A BackendError that survives the retry policy yields an
/// errored record instead of propagating.
CandidateRecord evaluate_candidate(const PromptProgram& program,
                                   const DataTable& table, Backend& backend,
                                   EvalCache* cache, std::size_t batch_size,
                                   const Objective& objective,
                                   int retry_backoff_ms = 100);

/// Serialized admission point for candidate evaluations. Cache hits do not
/// refund budget: the unit is one candidate evaluation, not one call.
class BudgetTracker {
 public:
  explicit BudgetTracker(std::int64_t limit) : limit_(limit) {}

  bool try_consume() {
    std::int64_t seen = used_.load();
    while (seen < limit_) {
      if (used_.compare_exchange_weak(seen, seen + 1)) return true;
    }
    return false;
  }

  std::int64_t limit() const { return limit_; }
  std::int64_t used() const { return used_.load(); }
  std::int64_t remaining() const { return limit_ - used_.load(); }

 private:
  std::int64_t limit_;
  std::atomic<std::int64_t> used_{0};
};

}  // namespace spp

#pragma once

// Search over program space. One iterative loop — init, sample, mutate,
// evaluate, prune — is shared by beam search, regularized evolution, and
// breadth-first search; each strategy only supplies the candidate-sampling
// and pruning bindings. Grid and random search enumerate an explicit choice
// space instead. Every strategy is deterministic given (seed, backend) and
// independent of the worker count.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spp/evaluation.hpp"
#include "spp/mutation.hpp"
#include "spp/program.hpp"

namespace spp {

class EmptySpace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid search over a space larger than the budget requires explicit
/// consent (SearchConfig::allow_truncation).
class TruncationRequired : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownPreset : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Strategy { Beam, RegularizedEvolution, Bfs, Grid, Random };
enum class InitMode {
  Baseline,  // start from the seed program
  Induce,    // start from instruction texts induced from stored examples
};

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct SearchConfig {
  Strategy strategy = Strategy::Beam;
  std::int64_t budget = 48;
  std::size_t beam_width = 4;
  std::size_t population_size = 16;
  std::size_t tournament_size = 4;
  std::size_t mutators_per_candidate = 2;
  std::size_t mutation_arity = 1;
  // 0 derives a default: budget/(beam_width·mutators_per_candidate) for
  // beam; unbounded (budget-stopped) for the other strategies.
  std::size_t depth_limit = 0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 10;
  std::size_t workers = 1;
  InitMode init = InitMode::Baseline;
  std::size_t init_candidates = 0;  // Induce mode; 0 = beam_width
  bool allow_truncation = false;
  int retry_backoff_ms = 100;
};

/// One phase of the shared loop, recorded for skeleton introspection:
/// "init", then per generation "sample", "mutate", "evaluate", "prune".
struct LoopEvent {
  std::string phase;
  std::int64_t generation = 0;
  std::size_t count = 0;  // items handled in the phase
};

struct SearchTrace {
  std::vector<CandidateRecord> records;              // in evaluation-admission order
  std::vector<std::vector<std::int64_t>> frontiers;  // active set after each prune
  std::vector<LoopEvent> loop_events;
  std::int64_t selected = -1;       // candidate id, best-ever by objective
  std::int64_t evaluations = 0;     // budget actually consumed
  double baseline_accuracy = 0.0;   // resolved floor (floor objectives)
  std::int64_t mutation_input_tokens = 0;   // charged by LLM-backed operators
  std::int64_t mutation_output_tokens = 0;

  const CandidateRecord* selected_record() const;
  const CandidateRecord* record_by_id(std::int64_t candidate_id) const;
  /// Candidate-id chain from the seed generation to `candidate_id`.
  std::vector<std::int64_t> lineage(std::int64_t candidate_id) const;
};

struct SearchEnv {
  Backend* backend = nullptr;
  EvalCache* cache = nullptr;  // optional
  const DataTable* table = nullptr;
  Objective objective;
};

/// The shared-loop search. Strategy bindings:
///   beam   — sample = current frontier; prune keeps the best beam_width of
///            frontier ∪ children; stops at the depth limit.
///   regularized evolution — the pool is a FIFO population; sample = winner
///            of a uniform tournament of tournament_size; prune appends
///            children and evicts oldest beyond population_size.
///   bfs    — sample = whole frontier; prune replaces it with all children.
/// Returns the best candidate ever evaluated, not merely the final frontier;
/// ties break toward the earlier-generated candidate.
SearchTrace iterative_search(const PromptProgram& seed_program,
                             const MutatorCatalog& catalog, SearchEnv& env,
                             const SearchConfig& config);

struct ChoiceAxis {
  std::string name;
  std::vector<std::string> values;
};

struct ChoiceSpace {
  std::vector<ChoiceAxis> axes;
  /// Maps one assignment (a value per axis, in axis order) to edits on the
  /// seed program. Must produce a valid program for every assignment.
  std::function<std::vector<Edit>(const PromptProgram&,
                                  const std::vector<std::string>&)>
      binder;

  std::size_t total_assignments() const;
};

/// Declarative axis: set `attribute` to the assigned value on every node
/// matched by `selector`. Integer-typed attributes are parsed from the
/// value text.
struct AttributeAxis {
  std::string name;  // defaults to attribute when empty
  std::string attribute;
  NodeSelector selector;
  std::vector<std::string> values;
};

ChoiceSpace attribute_grid(std::vector<AttributeAxis> axes);

/// Grid: every assignment in lexicographic order (first axis most
/// significant), up to the budget. Random: budget-many uniform assignments,
/// distinct while possible. Throws EmptySpace / TruncationRequired.
SearchTrace enumerative_search(const PromptProgram& seed_program,
                               const ChoiceSpace& space, SearchEnv& env,
                               const SearchConfig& config);

struct Preset {
  std::string name;
  MutatorCatalog catalog;
  SearchConfig config;
  Objective objective;
};

/// Named search recipes:
///   "ape"            — instruction induction init + whole-text paraphrase
///                      mutations, beam, maximize accuracy.
///   "grips"          — sentence-level add/delete/swap/paraphrase, beam,
///                      maximize accuracy.
///   "sammo-compress" — the full rewrite catalog, beam, minimize weighted
///                      cost subject to the accuracy floor (ε = 0.02,
///                      weights 1/2).
Preset make_preset(const std::string& name);

}  // namespace spp

#pragma once

// Mutation operator catalog: probabilistic rewrites over text attributes,
// other attributes, and program structure.  Every operator carries an
// applicability predicate and a generator that yields `arity` valid children
// per application, deterministic given (seed, recorded backend responses).
//
// Nodes whose subtree contains InputData, GenerateText, or OutputParser are
// protected: no operator drops or duplicates them, so every child keeps a
// complete input → generation → parse path.

#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "spp/program.hpp"
#include "spp/runtime.hpp"

namespace spp {

class NotApplicable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoApplicableMutators : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MutationOutcome {
  PromptProgram parent;
  PromptProgram child;
  std::string mutator;
  // Replaying these edits on `parent` reproduces `child` exactly; for
  // LLM-backed operators the produced text is embedded in the edit, so the
  // invariant holds given the recorded responses in `calls`.
  std::vector<Edit> edits;
  std::vector<BackendCall> calls;
};

class Mutator {
 public:
  virtual ~Mutator() = default;

  virtual const std::string& name() const = 0;
  virtual bool needs_backend() const = 0;
  virtual const NodeSelector& selector() const = 0;

  /// True iff the selector matches at least one node satisfying the
  /// operator's precondition (e.g. a Text node that actually contains a
  /// stopword, a FewShotExamples node above the example floor).
  virtual bool applicable(const PromptProgram& program) const = 0;

  /// Generates `arity` children.  `ctx` is required iff needs_backend();
  /// candidate i draws from an rng stream derived from (seed, i).
  /// Throws NotApplicable when applicable(program) is false.
  virtual std::vector<MutationOutcome> mutate(const PromptProgram& program,
                                              std::uint64_t seed,
                                              std::size_t arity,
                                              ExecutionContext* ctx) const = 0;
};

using MutatorPtr = std::shared_ptr<const Mutator>;
using MutatorCatalog = std::vector<MutatorPtr>;

// --- operator factories -----------------------------------------------------
// Text rewrites (LLM-backed).  `sentence_granularity` paraphrases one
// sentence of the target instead of the whole text.
MutatorPtr make_paraphrase(bool sentence_granularity = false);
// Synthesizes replacement instruction text from up to `k` stored examples of
// the program's first FewShotExamples node.
MutatorPtr make_induce_instructions(std::size_t k = 5);
MutatorPtr make_shorten_text(std::size_t max_words = 50);
MutatorPtr make_text_to_bullet_points();

// Deterministic rewrites.
MutatorPtr make_remove_stopwords();
// Flips every Section to the opposite of the first section's current format
// (markdown ↔ xml); all sections end up aligned.
MutatorPtr make_change_section_format();
// Samples a different format from {json, xml, plaintext, qa-batch} and sets
// it on every FewShotExamples and InputData node, keeping stored examples
// and the live block mutually consistent.
MutatorPtr make_change_data_format();
// Samples a smaller count in [minimum, current-1] and a subset of the stored
// examples of that size, without replacement, preserving stored order.
MutatorPtr make_decrease_examples(std::size_t minimum = 0);
MutatorPtr make_drop_section();
// Duplicates one section verbatim to a sampled position under its parent.
MutatorPtr make_repeat_section();

// Sentence-level phrase edits on Text nodes.
MutatorPtr make_add_sentence();     // reinsert a copy of one sentence elsewhere
MutatorPtr make_delete_sentence();  // remove one sentence (needs ≥ 2)
MutatorPtr make_swap_sentences();   // exchange two sentences (needs ≥ 2)

/// The ten rewrite operators above (paraphrase … repeat-section).
MutatorCatalog full_catalog(std::size_t shorten_max_words = 50);
/// {add, delete, swap, paraphrase-at-sentence-granularity}.
MutatorCatalog phrase_catalog();
/// Default-configured operator by its registered name; throws
/// std::invalid_argument for unknown names.
MutatorPtr make_mutator(const std::string& name);

/// `k` draws uniform over the applicable subset of `catalog`, without
/// replacement while possible (draws beyond the applicable count repeat).
/// Throws NoApplicableMutators when nothing applies.
std::vector<MutatorPtr> sample_mutators(const MutatorCatalog& catalog,
                                        const PromptProgram& program,
                                        std::uint64_t seed, std::size_t k);

// --- building blocks (exposed for testing) ----------------------------------
/// The versioned English stopword list shipped with the library, lowercased.
const std::set<std::string>& stopword_set();

/// Deletes each stopword token (case-insensitive; a token is a run of
/// alphanumerics with internal apostrophes) together with the whitespace run
/// that follows it.  All other characters — punctuation included — survive
/// in place.
std::string remove_stopwords(const std::string& text);

/// Splits on runs of [.?!] followed by whitespace; each sentence keeps its
/// terminal punctuation, surrounding whitespace is trimmed.
std::vector<std::string> split_sentences(const std::string& text);

/// Fixed prompt templates for the LLM-backed operators, keyed by
/// "paraphrase", "induce-instructions", "shorten", "bullet-points".
const std::string& mutation_template(const std::string& name);

/// True when dropping/duplicating `id`'s subtree would remove or double a
/// protected node kind.
bool protected_subtree(const PromptProgram& program, NodeId id);

}  // namespace spp

#include "spp/mutation.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "spp/backend.hpp"
#include "spp/rng.hpp"

namespace spp {

namespace {

const std::string kStopwordsData =
#include "spp/embedded/stopwords_en_v1.inc"
    ;
const std::string kTemplateParaphrase =
#include "spp/embedded/template_paraphrase.inc"
    ;
const std::string kTemplateInduceInstructions =
#include "spp/embedded/template_induce_instructions.inc"
    ;
const std::string kTemplateShorten =
#include "spp/embedded/template_shorten.inc"
    ;
const std::string kTemplateBulletPoints =
#include "spp/embedded/template_bullet_points.inc"
    ;

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string ascii_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string substitute(std::string text, const std::string& key,
                       const std::string& value) {
  const std::string needle = "{" + key + "}";
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

std::int64_t whitespace_tokens(const std::string& text) {
  static const TokenCounter counter = TokenCounter::whitespace();
  return counter.count(text);
}

std::string section_format_of(const Node& n) {
  const std::string* f = attr_string(n, attr::kSectionFormat);
  return f ? *f : std::string(formats::kMarkdown);
}

std::string data_format_of(const Node& n) {
  const std::string* f = attr_string(n, attr::kDataFormat);
  return f ? *f : std::string(formats::kQaBatch);
}

const std::string& text_content(const Node& n) {
  static const std::string kEmpty;
  const std::string* c = attr_string(n, attr::kContent);
  return c ? *c : kEmpty;
}

std::string join_sentences(const std::vector<std::string>& sentences) {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += ' ';
    out += sentences[i];
  }
  return out;
}

// Shared operator plumbing: sample an eligible target per candidate, let the
// concrete operator emit edits, replay them to build the child.
class OpBase : public Mutator {
 public:
  OpBase(std::string name, bool needs_backend, NodeSelector selector)
      : name_(std::move(name)),
        needs_backend_(needs_backend),
        selector_(std::move(selector)) {}

  const std::string& name() const override { return name_; }
  bool needs_backend() const override { return needs_backend_; }
  const NodeSelector& selector() const override { return selector_; }

  bool applicable(const PromptProgram& program) const override {
    return !eligible_targets(program).empty();
  }

  std::vector<MutationOutcome> mutate(const PromptProgram& program,
                                      std::uint64_t seed, std::size_t arity,
                                      ExecutionContext* ctx) const override {
    std::vector<NodeId> targets = eligible_targets(program);
    if (targets.empty()) throw NotApplicable(name_ + ": no eligible target");
    if (needs_backend_ && ctx == nullptr)
      throw std::logic_error(name_ + ": backend context required");

    std::vector<MutationOutcome> out;
    out.reserve(arity);
    for (std::size_t i = 0; i < arity; ++i) {
      rng::Engine engine(rng::mix(seed, i));
      MutationOutcome o;
      o.parent = program;
      o.mutator = name_;
      NodeId target = targets[rng::below(engine, targets.size())];
      generate(program, target, engine, ctx, o);
      PromptProgram child = program;
      for (const Edit& e : o.edits) child = child.apply_edit(e);
      o.child = std::move(child);
      out.push_back(std::move(o));
    }
    return out;
  }

 protected:
  /// Targets passing the operator's precondition, in pre-order.
  virtual std::vector<NodeId> eligible_targets(const PromptProgram&) const = 0;
  /// Fills outcome.edits (and outcome.calls for LLM-backed operators).
  virtual void generate(const PromptProgram& program, NodeId target,
                        rng::Engine& engine, ExecutionContext* ctx,
                        MutationOutcome& outcome) const = 0;

  std::string rewrite(ExecutionContext* ctx, const std::string& prompt,
                      MutationOutcome& outcome) const {
    BackendCall call = ctx->cached_call(prompt, GenerationParams{});
    outcome.calls.push_back(call);
    return trim(call.response);
  }

  std::string name_;
  bool needs_backend_;
  NodeSelector selector_;
};

// --- LLM-backed text rewrites ------------------------------------------------

class ParaphraseOp : public OpBase {
 public:
  explicit ParaphraseOp(bool sentence_granularity)
      : OpBase("paraphrase", true, NodeSelector::by_kind(NodeKind::Text)),
        sentence_(sentence_granularity) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_)) {
      const std::string& content = text_content(p.at(id));
      if (sentence_ ? !split_sentences(content).empty() : !trim(content).empty())
        out.push_back(id);
    }
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine& engine,
                ExecutionContext* ctx, MutationOutcome& o) const override {
    const std::string& content = text_content(p.at(target));
    std::string replacement;
    if (sentence_) {
      std::vector<std::string> sentences = split_sentences(content);
      std::size_t idx = rng::below(engine, sentences.size());
      std::string rewritten =
          rewrite(ctx, substitute(kTemplateParaphrase, "text", sentences[idx]), o);
      if (!rewritten.empty()) sentences[idx] = std::move(rewritten);
      replacement = join_sentences(sentences);
    } else {
      replacement = rewrite(ctx, substitute(kTemplateParaphrase, "text", content), o);
      if (replacement.empty()) replacement = content;
    }
    o.edits.push_back(ReplaceAttribute{target, attr::kContent, replacement});
  }

 private:
  bool sentence_;
};

class InduceInstructionsOp : public OpBase {
 public:
  explicit InduceInstructionsOp(std::size_t k)
      : OpBase("induce-instructions", true, NodeSelector::by_kind(NodeKind::Text)),
        k_(k) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    if (stored_examples(p) == nullptr) return {};
    return p.select(selector_);
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine&,
                ExecutionContext* ctx, MutationOutcome& o) const override {
    const ExampleList* stored = stored_examples(p);
    std::string examples =
        render_examples(*stored, std::min(k_, stored->size()), formats::kPlaintext);
    std::string induced =
        rewrite(ctx, substitute(kTemplateInduceInstructions, "examples", examples), o);
    if (induced.empty()) induced = text_content(p.at(target));
    o.edits.push_back(ReplaceAttribute{target, attr::kContent, induced});
  }

 private:
  const ExampleList* stored_examples(const PromptProgram& p) const {
    for (NodeId id : p.select(NodeSelector::by_kind(NodeKind::FewShotExamples))) {
      const ExampleList* e = attr_example_list(p.at(id));
      if (e && !e->empty()) return e;
    }
    return nullptr;
  }

  std::size_t k_;
};

class ShortenTextOp : public OpBase {
 public:
  explicit ShortenTextOp(std::size_t max_words)
      : OpBase("shorten-text", true, NodeSelector::by_kind(NodeKind::Text)),
        max_words_(max_words) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_))
      if (!trim(text_content(p.at(id))).empty()) out.push_back(id);
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine&,
                ExecutionContext* ctx, MutationOutcome& o) const override {
    const std::string& content = text_content(p.at(target));
    std::string prompt = substitute(kTemplateShorten, "text", content);
    prompt = substitute(prompt, "max_words", std::to_string(max_words_));
    std::string shortened = rewrite(ctx, prompt, o);

    // The backend is untrusted: enforce the word cap locally, and never let
    // this operator grow the text (rendered prompts must not gain tokens).
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < shortened.size()) {
      while (i < shortened.size() &&
             std::isspace(static_cast<unsigned char>(shortened[i])))
        ++i;
      std::size_t j = i;
      while (j < shortened.size() &&
             !std::isspace(static_cast<unsigned char>(shortened[j])))
        ++j;
      if (j > i) words.push_back(shortened.substr(i, j - i));
      i = j;
    }
    if (words.size() > max_words_) {
      words.resize(max_words_);
      shortened = join_sentences(words);
    }
    if (shortened.empty() ||
        whitespace_tokens(shortened) > whitespace_tokens(content))
      shortened = content;
    o.edits.push_back(ReplaceAttribute{target, attr::kContent, shortened});
  }

 private:
  std::size_t max_words_;
};

class BulletPointsOp : public OpBase {
 public:
  BulletPointsOp()
      : OpBase("text-to-bullet-points", true,
               NodeSelector::by_kind(NodeKind::Text)) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_))
      if (!trim(text_content(p.at(id))).empty()) out.push_back(id);
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine&,
                ExecutionContext* ctx, MutationOutcome& o) const override {
    const std::string& content = text_content(p.at(target));
    std::string bulleted =
        rewrite(ctx, substitute(kTemplateBulletPoints, "text", content), o);
    if (bulleted.empty()) bulleted = content;
    o.edits.push_back(ReplaceAttribute{target, attr::kContent, bulleted});
  }
};

// --- deterministic rewrites --------------------------------------------------

class RemoveStopwordsOp : public OpBase {
 public:
  RemoveStopwordsOp()
      : OpBase("remove-stopwords", false, NodeSelector::by_kind(NodeKind::Text)) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_)) {
      const std::string& content = text_content(p.at(id));
      if (remove_stopwords(content) != content) out.push_back(id);
    }
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine&,
                ExecutionContext*, MutationOutcome& o) const override {
    o.edits.push_back(ReplaceAttribute{target, attr::kContent,
                                       remove_stopwords(text_content(p.at(target)))});
  }
};

class ChangeSectionFormatOp : public OpBase {
 public:
  ChangeSectionFormatOp()
      : OpBase("change-section-format", false,
               NodeSelector::by_kind(NodeKind::Section)) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    return p.select(selector_);
  }

  void generate(const PromptProgram& p, NodeId, rng::Engine&, ExecutionContext*,
                MutationOutcome& o) const override {
    std::vector<NodeId> sections = p.select(selector_);
    std::string current = section_format_of(p.at(sections.front()));
    std::string flipped =
        current == formats::kXml ? formats::kMarkdown : formats::kXml;
    for (NodeId id : sections)
      o.edits.push_back(ReplaceAttribute{id, attr::kSectionFormat, flipped});
  }
};

class ChangeDataFormatOp : public OpBase {
 public:
  ChangeDataFormatOp()
      : OpBase("change-data-format", false, data_carrier_selector()) {}

  static NodeSelector data_carrier_selector() {
    NodeSelector s;
    s.kinds = {NodeKind::FewShotExamples, NodeKind::InputData};
    return s;
  }

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    return p.select(selector_);
  }

  void generate(const PromptProgram& p, NodeId, rng::Engine& engine,
                ExecutionContext*, MutationOutcome& o) const override {
    std::vector<NodeId> carriers = p.select(selector_);
    std::string current = data_format_of(p.at(carriers.front()));
    std::vector<std::string> choices;
    for (const std::string& f : formats::data_formats())
      if (f != current) choices.push_back(f);
    const std::string& picked = choices[rng::below(engine, choices.size())];
    for (NodeId id : carriers)
      o.edits.push_back(ReplaceAttribute{id, attr::kDataFormat, picked});
  }
};

class DecreaseExamplesOp : public OpBase {
 public:
  explicit DecreaseExamplesOp(std::size_t minimum)
      : OpBase("decrease-in-context-examples", false,
               NodeSelector::by_kind(NodeKind::FewShotExamples)),
        minimum_(minimum) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_)) {
      const Node& n = p.at(id);
      const ExampleList* stored = attr_example_list(n);
      if (stored && !stored->empty() && effective_example_count(n) > minimum_)
        out.push_back(id);
    }
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine& engine,
                ExecutionContext*, MutationOutcome& o) const override {
    const Node& n = p.at(target);
    const ExampleList& stored = *attr_example_list(n);
    std::size_t current = effective_example_count(n);
    std::size_t new_count = minimum_ + rng::below(engine, current - minimum_);

    std::vector<std::size_t> picked =
        rng::sample_indices(engine, stored.size(), new_count);
    std::sort(picked.begin(), picked.end());
    ExampleList subset;
    subset.reserve(new_count);
    for (std::size_t idx : picked) subset.push_back(stored[idx]);

    // Count first: the count must stay ≤ the stored list size at every
    // intermediate step of the replay.
    o.edits.push_back(ReplaceAttribute{target, attr::kExampleCount,
                                       static_cast<std::int64_t>(new_count)});
    o.edits.push_back(ReplaceAttribute{target, attr::kExamples, std::move(subset)});
  }

 private:
  std::size_t minimum_;
};

class DropSectionOp : public OpBase {
 public:
  DropSectionOp()
      : OpBase("drop-section", false, NodeSelector::by_kind(NodeKind::Section)) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_))
      if (p.parent_of(id) != kNoNode && !protected_subtree(p, id))
        out.push_back(id);
    return out;
  }

  void generate(const PromptProgram&, NodeId target, rng::Engine&,
                ExecutionContext*, MutationOutcome& o) const override {
    o.edits.push_back(DeleteNode{target});
  }
};

class RepeatSectionOp : public OpBase {
 public:
  RepeatSectionOp()
      : OpBase("repeat-section", false, NodeSelector::by_kind(NodeKind::Section)) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_))
      if (p.parent_of(id) != kNoNode && !protected_subtree(p, id))
        out.push_back(id);
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine& engine,
                ExecutionContext*, MutationOutcome& o) const override {
    NodeId parent = p.parent_of(target);
    std::size_t slots = p.at(parent).children.size() + 1;
    o.edits.push_back(
        DuplicateSubtree{target, parent, rng::below(engine, slots)});
  }
};

// --- sentence-level phrase edits ----------------------------------------------

class SentenceOpBase : public OpBase {
 public:
  SentenceOpBase(std::string name, std::size_t min_sentences)
      : OpBase(std::move(name), false, NodeSelector::by_kind(NodeKind::Text)),
        min_sentences_(min_sentences) {}

 protected:
  std::vector<NodeId> eligible_targets(const PromptProgram& p) const override {
    std::vector<NodeId> out;
    for (NodeId id : p.select(selector_))
      if (split_sentences(text_content(p.at(id))).size() >= min_sentences_)
        out.push_back(id);
    return out;
  }

  void generate(const PromptProgram& p, NodeId target, rng::Engine& engine,
                ExecutionContext*, MutationOutcome& o) const override {
    std::vector<std::string> sentences = split_sentences(text_content(p.at(target)));
    edit_sentences(sentences, engine);
    o.edits.push_back(
        ReplaceAttribute{target, attr::kContent, join_sentences(sentences)});
  }

  virtual void edit_sentences(std::vector<std::string>& sentences,
                              rng::Engine& engine) const = 0;

 private:
  std::size_t min_sentences_;
};

class AddSentenceOp : public SentenceOpBase {
 public:
  AddSentenceOp() : SentenceOpBase("add", 1) {}

 protected:
  void edit_sentences(std::vector<std::string>& s, rng::Engine& e) const override {
    std::size_t src = rng::below(e, s.size());
    std::size_t pos = rng::below(e, s.size() + 1);
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), s[src]);
  }
};

class DeleteSentenceOp : public SentenceOpBase {
 public:
  DeleteSentenceOp() : SentenceOpBase("delete", 2) {}

 protected:
  void edit_sentences(std::vector<std::string>& s, rng::Engine& e) const override {
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(rng::below(e, s.size())));
  }
};

class SwapSentencesOp : public SentenceOpBase {
 public:
  SwapSentencesOp() : SentenceOpBase("swap", 2) {}

 protected:
  void edit_sentences(std::vector<std::string>& s, rng::Engine& e) const override {
    std::size_t i = rng::below(e, s.size());
    std::size_t j = rng::below(e, s.size() - 1);
    if (j >= i) ++j;
    std::swap(s[i], s[j]);
  }
};

}  // namespace

// --- factories ----------------------------------------------------------------

MutatorPtr make_paraphrase(bool sentence_granularity) {
  return std::make_shared<ParaphraseOp>(sentence_granularity);
}
MutatorPtr make_induce_instructions(std::size_t k) {
  return std::make_shared<InduceInstructionsOp>(k);
}
MutatorPtr make_shorten_text(std::size_t max_words) {
  return std::make_shared<ShortenTextOp>(max_words);
}
MutatorPtr make_text_to_bullet_points() {
  return std::make_shared<BulletPointsOp>();
}
MutatorPtr make_remove_stopwords() { return std::make_shared<RemoveStopwordsOp>(); }
MutatorPtr make_change_section_format() {
  return std::make_shared<ChangeSectionFormatOp>();
}
MutatorPtr make_change_data_format() {
  return std::make_shared<ChangeDataFormatOp>();
}
MutatorPtr make_decrease_examples(std::size_t minimum) {
  return std::make_shared<DecreaseExamplesOp>(minimum);
}
MutatorPtr make_drop_section() { return std::make_shared<DropSectionOp>(); }
MutatorPtr make_repeat_section() { return std::make_shared<RepeatSectionOp>(); }
MutatorPtr make_add_sentence() { return std::make_shared<AddSentenceOp>(); }
MutatorPtr make_delete_sentence() { return std::make_shared<DeleteSentenceOp>(); }
MutatorPtr make_swap_sentences() { return std::make_shared<SwapSentencesOp>(); }

MutatorCatalog full_catalog(std::size_t shorten_max_words) {
  return {make_paraphrase(),         make_induce_instructions(),
          make_shorten_text(shorten_max_words), make_text_to_bullet_points(),
          make_remove_stopwords(),   make_change_section_format(),
          make_change_data_format(), make_decrease_examples(),
          make_drop_section(),       make_repeat_section()};
}

MutatorCatalog phrase_catalog() {
  return {make_add_sentence(), make_delete_sentence(), make_swap_sentences(),
          make_paraphrase(/*sentence_granularity=*/true)};
}

MutatorPtr make_mutator(const std::string& name) {
  if (name == "paraphrase") return make_paraphrase();
  if (name == "paraphrase-sentence") return make_paraphrase(true);
  if (name == "induce-instructions") return make_induce_instructions();
  if (name == "shorten-text") return make_shorten_text();
  if (name == "text-to-bullet-points") return make_text_to_bullet_points();
  if (name == "remove-stopwords") return make_remove_stopwords();
  if (name == "change-section-format") return make_change_section_format();
  if (name == "change-data-format") return make_change_data_format();
  if (name == "decrease-in-context-examples") return make_decrease_examples();
  if (name == "drop-section") return make_drop_section();
  if (name == "repeat-section") return make_repeat_section();
  if (name == "add") return make_add_sentence();
  if (name == "delete") return make_delete_sentence();
  if (name == "swap") return make_swap_sentences();
  throw std::invalid_argument("unknown mutator: " + name);
}

std::vector<MutatorPtr> sample_mutators(const MutatorCatalog& catalog,
                                        const PromptProgram& program,
                                        std::uint64_t seed, std::size_t k) {
  std::vector<MutatorPtr> applicable;
  for (const MutatorPtr& m : catalog)
    if (m->applicable(program)) applicable.push_back(m);
  if (applicable.empty())
    throw NoApplicableMutators("no mutator in the catalog applies");

  rng::Engine engine(seed);
  std::vector<MutatorPtr> out;
  out.reserve(k);
  for (std::size_t idx :
       rng::sample_indices(engine, applicable.size(), std::min(k, applicable.size())))
    out.push_back(applicable[idx]);
  while (out.size() < k)
    out.push_back(applicable[rng::below(engine, applicable.size())]);
  return out;
}

// --- building blocks ------------------------------------------------------------

const std::set<std::string>& stopword_set() {
  static const std::set<std::string> words = [] {
    std::set<std::string> out;
    std::size_t pos = 0;
    while (pos <= kStopwordsData.size()) {
      std::size_t eol = kStopwordsData.find('\n', pos);
      std::string line = kStopwordsData.substr(
          pos, eol == std::string::npos ? std::string::npos : eol - pos);
      std::string word = trim(line);
      if (!word.empty() && word[0] != '#') out.insert(ascii_lower(word));
      if (eol == std::string::npos) break;
      pos = eol + 1;
    }
    return out;
  }();
  return words;
}

std::string remove_stopwords(const std::string& text) {
  const std::set<std::string>& stop = stopword_set();
  std::string out;
  out.reserve(text.size());
  const std::size_t n = text.size();
  auto alnum = [&](std::size_t p) {
    return p < n && std::isalnum(static_cast<unsigned char>(text[p]));
  };
  std::size_t i = 0;
  while (i < n) {
    if (!alnum(i)) {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n) {
      if (alnum(j)) {
        ++j;
      } else if (text[j] == '\'' && alnum(j + 1)) {
        j += 2;
      } else {
        break;
      }
    }
    if (stop.count(ascii_lower(text.substr(i, j - i)))) {
      while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    } else {
      out.append(text, i, j - i);
    }
    i = j;
  }
  return out;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  auto flush = [&](std::size_t begin, std::size_t end) {
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin])))
      ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1])))
      --end;
    if (end > begin) out.push_back(text.substr(begin, end - begin));
  };
  std::size_t start = 0, i = 0;
  while (i < n) {
    if (text[i] == '.' || text[i] == '?' || text[i] == '!') {
      std::size_t j = i;
      while (j < n && (text[j] == '.' || text[j] == '?' || text[j] == '!')) ++j;
      if (j >= n || std::isspace(static_cast<unsigned char>(text[j]))) {
        flush(start, j);
        while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        start = j;
      }
      i = j;
    } else {
      ++i;
    }
  }
  if (start < n) flush(start, n);
  return out;
}

const std::string& mutation_template(const std::string& name) {
  static const std::map<std::string, const std::string*> table{
      {"paraphrase", &kTemplateParaphrase},
      {"induce-instructions", &kTemplateInduceInstructions},
      {"shorten", &kTemplateShorten},
      {"bullet-points", &kTemplateBulletPoints},
  };
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown template: " + name);
  return *it->second;
}

bool protected_subtree(const PromptProgram& program, NodeId id) {
  for (NodeId member : program.subtree_ids(id)) {
    NodeKind kind = program.at(member).kind;
    if (kind == NodeKind::InputData || kind == NodeKind::GenerateText ||
        kind == NodeKind::OutputParser)
      return true;
  }
  return false;
}

}  // namespace spp

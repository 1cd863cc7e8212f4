#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "spp/mutation.hpp"
#include "spp/serialize.hpp"
#include "test_util.hpp"

using namespace spp;

namespace {

// Instructions section + examples section + notes section + live input.
PromptProgram rich_program() {
  ExampleList examples = {{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}};
  NodeTemplate spec{
      NodeKind::OutputParser,
      {{attr::kParserKind, std::string(formats::kBatchAnswers)}},
      {NodeTemplate{
          NodeKind::GenerateText,
          {},
          {NodeTemplate{
              NodeKind::Concat,
              {},
              {NodeTemplate{NodeKind::Section,
                            {{attr::kTitle, std::string("Task")}},
                            {NodeTemplate{
                                NodeKind::Text,
                                {{attr::kContent,
                                  std::string("Answer with the POS tag. "
                                              "Reply True or False. "
                                              "Use one line per item.")}},
                                {}}}},
               NodeTemplate{NodeKind::Section,
                            {{attr::kTitle, std::string("Examples")}},
                            {NodeTemplate{NodeKind::FewShotExamples,
                                          {{attr::kExamples, examples},
                                           {attr::kExampleCount,
                                            std::int64_t{3}}},
                                          {}}}},
               NodeTemplate{NodeKind::Section,
                            {{attr::kTitle, std::string("Notes")}},
                            {NodeTemplate{
                                NodeKind::Text,
                                {{attr::kContent,
                                  std::string("Check twice. Be brief.")}},
                                {}}}},
               NodeTemplate{NodeKind::InputData, {}, {}}}}}}}};
  return PromptProgram::build(spec);
}

// Replays outcome.edits on the parent and demands byte-identical children.
void check_replay(const MutationOutcome& o) {
  PromptProgram replayed = o.parent;
  for (const Edit& e : o.edits) replayed = replayed.apply_edit(e);
  CHECK(serialize(replayed) == serialize(o.child));
}

std::vector<NodeId> sections_of(const PromptProgram& p) {
  return p.select(NodeSelector::by_kind(NodeKind::Section));
}

int count_words(const std::string& s) {
  int n = 0;
  bool in = false;
  for (char c : s) {
    bool ws = c == ' ' || c == '\n' || c == '\t';
    if (!ws && !in) ++n;
    in = !ws;
  }
  return n;
}

}  // namespace

TEST_CASE("stopword removal deletes tokens with their trailing whitespace") {
  CHECK(remove_stopwords(
            "In this task, you will be presented with a question, a word, "
            "and a POS tag.") == "task, presented question, word, POS tag.");
  CHECK(remove_stopwords("The cat sat on the mat.") == "cat sat mat.");
  CHECK(remove_stopwords("part-of-speech") == "--speech");
  CHECK(remove_stopwords("or not.") == ".");
  CHECK(remove_stopwords("THE AND OR") == "");
  CHECK(remove_stopwords("") == "");
  // Unaffected text comes back byte-identical, punctuation and all.
  CHECK(remove_stopwords("POS: tag? True!") == "POS: tag? True!");
}

TEST_CASE("stopword removal of the instruction fixture matches its golden") {
  std::string text =
      testutil::read_file(testutil::fixture_path("pos_tag_instructions.txt"));
  std::string want = testutil::read_file(
      testutil::golden_path("stopwords_instructions.golden.txt"));
  CHECK(remove_stopwords(text) == want);
}

TEST_CASE("stopword set is lowercased and versioned content") {
  const std::set<std::string>& words = stopword_set();
  CHECK(words.count("the") == 1);
  CHECK(words.count("The") == 0);
  CHECK(words.count("verbatim") == 0);
  CHECK(words.size() > 100);
}

TEST_CASE("sentence splitting keeps terminal punctuation") {
  auto s = split_sentences("One here. Two there!  Three?   ");
  REQUIRE(s.size() == 3);
  CHECK(s[0] == "One here.");
  CHECK(s[1] == "Two there!");
  CHECK(s[2] == "Three?");
  CHECK(split_sentences("no terminator").size() == 1);
  CHECK(split_sentences("").empty());
  // "e.g. x" style abbreviations split — the rule is purely lexical.
  CHECK(split_sentences("A. B.").size() == 2);
}

TEST_CASE("templates match their committed goldens") {
  CHECK(mutation_template("paraphrase") ==
        testutil::read_file(
            testutil::golden_path("template_paraphrase.golden.txt")));
  CHECK(mutation_template("induce-instructions") ==
        testutil::read_file(
            testutil::golden_path("template_induce_instructions.golden.txt")));
  CHECK(mutation_template("shorten") ==
        testutil::read_file(
            testutil::golden_path("template_shorten.golden.txt")));
  CHECK(mutation_template("bullet-points") ==
        testutil::read_file(
            testutil::golden_path("template_bullet_points.golden.txt")));
  CHECK_THROWS(mutation_template("no-such-template"));
}

TEST_CASE("protected subtrees cover the input-generate-parse path") {
  PromptProgram p = rich_program();
  CHECK(protected_subtree(p, 0));  // root OutputParser
  std::vector<NodeId> sections = sections_of(p);
  REQUIRE(sections.size() == 3);
  for (NodeId id : sections) CHECK_FALSE(protected_subtree(p, id));
  std::vector<NodeId> inputs = p.select(NodeSelector::by_kind(NodeKind::InputData));
  REQUIRE(inputs.size() == 1);
  CHECK(protected_subtree(p, inputs[0]));
}

TEST_CASE("deterministic operators produce identical children per seed") {
  PromptProgram p = rich_program();
  for (const char* name :
       {"remove-stopwords", "change-section-format", "change-data-format",
        "decrease-in-context-examples", "drop-section", "repeat-section",
        "add", "delete", "swap"}) {
    CAPTURE(name);
    MutatorPtr m = make_mutator(name);
    CHECK(m->name() == name);
    CHECK_FALSE(m->needs_backend());
    REQUIRE(m->applicable(p));
    auto a = m->mutate(p, 0xABCD, 3, nullptr);
    auto b = m->mutate(p, 0xABCD, 3, nullptr);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(serialize(a[i].child) == serialize(b[i].child));
      CHECK(a[i].child.validate().ok());
      CHECK(a[i].mutator == name);
      CHECK(a[i].calls.empty());
      check_replay(a[i]);
    }
  }
}

TEST_CASE("remove-stopwords rewrites one text node in place") {
  PromptProgram p = rich_program();
  MutatorPtr m = make_remove_stopwords();
  auto outs = m->mutate(p, 1, 1, nullptr);
  REQUIRE(outs.size() == 1);
  const PromptProgram& child = outs[0].child;
  // The two Text contents, after the mutation, are each either untouched or
  // exactly the stopword-removed original; exactly one changed.
  auto texts = p.select(NodeSelector::by_kind(NodeKind::Text));
  int changed = 0;
  for (NodeId id : texts) {
    const std::string& before = *attr_string(p.at(id), attr::kContent);
    const std::string& after = *attr_string(child.at(id), attr::kContent);
    if (after != before) {
      ++changed;
      CHECK(after == remove_stopwords(before));
    }
  }
  CHECK(changed == 1);
}

TEST_CASE("remove-stopwords is inapplicable without stopwords") {
  NodeTemplate spec{NodeKind::Text,
                    {{attr::kContent, std::string("POS tag True False")}},
                    {}};
  PromptProgram p = PromptProgram::build(spec);
  MutatorPtr m = make_remove_stopwords();
  CHECK_FALSE(m->applicable(p));
  CHECK_THROWS_AS(m->mutate(p, 1, 1, nullptr), NotApplicable);
}

TEST_CASE("change-section-format aligns every section to the flipped format") {
  PromptProgram p = rich_program();
  MutatorPtr m = make_change_section_format();
  PromptProgram child = m->mutate(p, 2, 1, nullptr)[0].child;
  for (NodeId id : sections_of(child)) {
    REQUIRE(attr_string(child.at(id), attr::kSectionFormat) != nullptr);
    CHECK(*attr_string(child.at(id), attr::kSectionFormat) == formats::kXml);
  }
  // Flipping again returns to markdown.
  PromptProgram back = m->mutate(child, 3, 1, nullptr)[0].child;
  for (NodeId id : sections_of(back)) {
    CHECK(*attr_string(back.at(id), attr::kSectionFormat) ==
          formats::kMarkdown);
  }
}

TEST_CASE("change-data-format keeps examples and live input consistent") {
  PromptProgram p = rich_program();
  MutatorPtr m = make_change_data_format();
  NodeSelector carriers;
  carriers.kinds = {NodeKind::FewShotExamples, NodeKind::InputData};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    PromptProgram child = m->mutate(p, seed, 1, nullptr)[0].child;
    std::set<std::string> formats_seen;
    for (NodeId id : child.select(carriers)) {
      REQUIRE(attr_string(child.at(id), attr::kDataFormat) != nullptr);
      formats_seen.insert(*attr_string(child.at(id), attr::kDataFormat));
    }
    REQUIRE(formats_seen.size() == 1);
    CHECK(*formats_seen.begin() != formats::kQaBatch);  // current is excluded
    const auto& menu = formats::data_formats();
    CHECK(std::find(menu.begin(), menu.end(), *formats_seen.begin()) !=
          menu.end());
  }
}

TEST_CASE("decrease-examples shrinks count and subsets stored pairs in order") {
  PromptProgram p = rich_program();
  MutatorPtr m = make_decrease_examples();
  NodeId few = p.select(NodeSelector::by_kind(NodeKind::FewShotExamples))[0];
  const ExampleList& parent_stored = *attr_example_list(p.at(few));

  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto outs = m->mutate(p, seed, 1, nullptr);
    const Node& node = outs[0].child.at(few);
    std::size_t new_count = effective_example_count(node);
    CHECK(new_count < 3);
    const ExampleList& stored = *attr_example_list(node);
    CHECK(stored.size() == new_count);
    // Subset, order preserved.
    std::size_t cursor = 0;
    for (const ExamplePair& pair : stored) {
      while (cursor < parent_stored.size() &&
             !(parent_stored[cursor] == pair))
        ++cursor;
      REQUIRE(cursor < parent_stored.size());
      ++cursor;
    }
    check_replay(outs[0]);
  }

  // Floor: a node already at the minimum is not a target.
  MutatorPtr floored = make_decrease_examples(3);
  CHECK_FALSE(floored->applicable(p));
}

TEST_CASE("drop-section removes one unprotected section") {
  PromptProgram p = rich_program();
  MutatorPtr m = make_drop_section();
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    PromptProgram child = m->mutate(p, seed, 1, nullptr)[0].child;
    CHECK(sections_of(child).size() == 2);
    CHECK(child.select(NodeSelector::by_kind(NodeKind::InputData)).size() == 1);
    CHECK(child.validate().ok());
  }
}

TEST_CASE("repeat-section duplicates a section verbatim") {
  PromptProgram p = rich_program();
  MutatorPtr m = make_repeat_section();
  auto outs = m->mutate(p, 5, 1, nullptr);
  const PromptProgram& child = outs[0].child;
  std::vector<NodeId> sections = sections_of(child);
  CHECK(sections.size() == 4);
  // Some title now appears twice.
  std::map<std::string, int> titles;
  for (NodeId id : sections) ++titles[*attr_string(child.at(id), attr::kTitle)];
  bool doubled = false;
  for (const auto& [t, n] : titles) doubled = doubled || n == 2;
  CHECK(doubled);
  check_replay(outs[0]);
}

TEST_CASE("sentence ops preserve the sentence multiset contract") {
  PromptProgram p = rich_program();
  NodeId task_text = sections_of(p)[0] + 1;  // Text under the Task section
  std::string original = *attr_string(p.at(task_text), attr::kContent);
  std::vector<std::string> base = split_sentences(original);
  REQUIRE(base.size() == 3);

  auto sentences_of = [&](const PromptProgram& prog, NodeId id) {
    return split_sentences(*attr_string(prog.at(id), attr::kContent));
  };

  MutatorPtr del = make_delete_sentence();
  MutatorPtr add = make_add_sentence();
  MutatorPtr swp = make_swap_sentences();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = sentences_of(del->mutate(p, seed, 1, nullptr)[0].child, task_text);
    if (d.size() == base.size()) {
      // The mutated node was the two-sentence Notes text instead.
      CHECK(d == base);
    } else {
      CHECK(d.size() == base.size() - 1);
      for (const std::string& s : d)
        CHECK(std::count(base.begin(), base.end(), s) >= 1);
    }

    auto a = sentences_of(add->mutate(p, seed, 1, nullptr)[0].child, task_text);
    if (a.size() != base.size()) {
      CHECK(a.size() == base.size() + 1);
      for (const std::string& s : a)
        CHECK(std::count(base.begin(), base.end(), s) >= 1);
    }

    auto w = sentences_of(swp->mutate(p, seed, 1, nullptr)[0].child, task_text);
    if (w != base) {
      auto sorted_w = w;
      auto sorted_b = base;
      std::sort(sorted_w.begin(), sorted_w.end());
      std::sort(sorted_b.begin(), sorted_b.end());
      CHECK(sorted_w == sorted_b);
    }
  }
}

TEST_CASE("deletion-style rewrites never grow the rendered token count") {
  PromptProgram p = rich_program();
  auto tokens = [](const std::string& s) { return count_words(s); };
  for (const char* name : {"remove-stopwords", "delete", "drop-section",
                           "decrease-in-context-examples"}) {
    CAPTURE(name);
    MutatorPtr m = make_mutator(name);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      PromptProgram child = m->mutate(p, seed, 1, nullptr)[0].child;
      CHECK(tokens(render(child, {})) <= tokens(render(p, {})));
    }
  }
}

TEST_CASE("llm-backed rewrites embed the response into replayable edits") {
  PromptProgram p = rich_program();
  CallbackBackend backend("cb:fixed", [](const std::string& prompt,
                                         const GenerationParams&) {
    if (prompt.find("Rewrite the text below so") != std::string::npos)
      return std::string("Completely new instructions.");
    if (prompt.find("Below are input-output pairs") != std::string::npos)
      return std::string("Induced task description.");
    if (prompt.find("Shorten the text below") != std::string::npos)
      return std::string("Short text.");
    if (prompt.find("bullet list") != std::string::npos)
      return std::string("- one\n- two");
    return std::string("unexpected");
  });
  EvalCache cache;
  ExecutionContext ctx;
  ctx.backend = &backend;
  ctx.cache = &cache;

  for (const char* name : {"paraphrase", "induce-instructions", "shorten-text",
                           "text-to-bullet-points"}) {
    CAPTURE(name);
    MutatorPtr m = make_mutator(name);
    CHECK(m->needs_backend());
    REQUIRE(m->applicable(p));
    auto outs = m->mutate(p, 7, 2, &ctx);
    REQUIRE(outs.size() == 2);
    for (const MutationOutcome& o : outs) {
      CHECK(o.child.validate().ok());
      CHECK_FALSE(o.calls.empty());
      check_replay(o);  // edits carry the produced text
      CHECK(serialize(o.child) != serialize(p));
    }
  }
}

TEST_CASE("paraphrase rewrites exactly the targeted text") {
  PromptProgram p = rich_program();
  CallbackBackend backend("cb:para", [](const std::string&,
                                        const GenerationParams&) {
    return std::string("Rephrased entirely.");
  });
  ExecutionContext ctx;
  ctx.backend = &backend;
  PromptProgram child = make_paraphrase()->mutate(p, 3, 1, &ctx)[0].child;
  auto texts = child.select(NodeSelector::by_kind(NodeKind::Text));
  int rewritten = 0;
  for (NodeId id : texts)
    if (*attr_string(child.at(id), attr::kContent) == "Rephrased entirely.")
      ++rewritten;
  CHECK(rewritten == 1);
}

TEST_CASE("sentence-granularity paraphrase touches one sentence only") {
  PromptProgram p = rich_program();
  CallbackBackend backend("cb:sent", [](const std::string&,
                                        const GenerationParams&) {
    return std::string("SWAPPED-IN SENTENCE.");
  });
  ExecutionContext ctx;
  ctx.backend = &backend;
  MutatorPtr m = make_mutator("paraphrase-sentence");
  PromptProgram child = m->mutate(p, 11, 1, &ctx)[0].child;
  auto texts = p.select(NodeSelector::by_kind(NodeKind::Text));
  for (NodeId id : texts) {
    std::string before = *attr_string(p.at(id), attr::kContent);
    std::string after = *attr_string(child.at(id), attr::kContent);
    if (before == after) continue;
    auto sb = split_sentences(before);
    auto sa = split_sentences(after);
    REQUIRE(sb.size() == sa.size());
    int diff = 0;
    for (std::size_t i = 0; i < sb.size(); ++i) {
      if (sb[i] != sa[i]) {
        ++diff;
        CHECK(sa[i] == "SWAPPED-IN SENTENCE.");
      }
    }
    CHECK(diff == 1);
  }
}

TEST_CASE("shorten-text enforces its word cap locally") {
  NodeTemplate spec{
      NodeKind::Text,
      {{attr::kContent,
        std::string("one two three four five six seven eight nine ten.")}},
      {}};
  PromptProgram p = PromptProgram::build(spec);
  CallbackBackend verbose("cb:verbose", [](const std::string&,
                                           const GenerationParams&) {
    return std::string(
        "this reply rambles on and on with far too many words to count as "
        "shortened output in any reasonable sense of the word");
  });
  ExecutionContext ctx;
  ctx.backend = &verbose;
  MutatorPtr m = make_shorten_text(4);
  PromptProgram child = m->mutate(p, 1, 1, &ctx)[0].child;
  std::string content = *attr_string(child.at(0), attr::kContent);
  CHECK(count_words(content) <= 10);  // never grows past the original
  CHECK(count_words(content) <= 4);   // and the cap is applied
}

TEST_CASE("induce-instructions requires stored examples") {
  NodeTemplate no_examples{
      NodeKind::Text, {{attr::kContent, std::string("Do the thing.")}}, {}};
  PromptProgram p = PromptProgram::build(no_examples);
  CHECK_FALSE(make_induce_instructions()->applicable(p));
}

TEST_CASE("backend-needing mutators refuse to run without a context") {
  PromptProgram p = rich_program();
  CHECK_THROWS(make_paraphrase()->mutate(p, 1, 1, nullptr));
}

TEST_CASE("mutator catalogs expose the documented names") {
  MutatorCatalog all = full_catalog();
  CHECK(all.size() == 10);
  std::set<std::string> names;
  for (const MutatorPtr& m : all) names.insert(m->name());
  for (const char* expect :
       {"paraphrase", "induce-instructions", "shorten-text",
        "text-to-bullet-points", "remove-stopwords", "change-section-format",
        "change-data-format", "decrease-in-context-examples", "drop-section",
        "repeat-section"}) {
    CAPTURE(expect);
    CHECK(names.count(expect) == 1);
  }

  MutatorCatalog phrases = phrase_catalog();
  CHECK(phrases.size() == 4);
  std::set<std::string> pnames;
  for (const MutatorPtr& m : phrases) pnames.insert(m->name());
  CHECK(pnames == std::set<std::string>{"add", "delete", "swap", "paraphrase"});

  CHECK_THROWS_AS(make_mutator("definitely-not-real"), std::invalid_argument);
}

TEST_CASE("mutator sampling is uniform over the applicable subset") {
  PromptProgram p = rich_program();
  MutatorCatalog catalog = {make_remove_stopwords(), make_drop_section(),
                            make_change_section_format()};
  auto picks = sample_mutators(catalog, p, 99, 3);
  REQUIRE(picks.size() == 3);
  std::set<std::string> distinct;
  for (const auto& m : picks) distinct.insert(m->name());
  CHECK(distinct.size() == 3);  // without replacement while possible

  auto more = sample_mutators(catalog, p, 99, 5);
  CHECK(more.size() == 5);  // draws beyond the applicable count repeat

  auto again = sample_mutators(catalog, p, 99, 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again[i]->name() == picks[i]->name());

  // Inapplicable operators never appear.
  NodeTemplate bare{NodeKind::Text,
                    {{attr::kContent, std::string("POS tag")}}, {}};
  PromptProgram no_sections = PromptProgram::build(bare);
  MutatorCatalog mixed = {make_drop_section(), make_swap_sentences()};
  CHECK_THROWS_AS(sample_mutators(mixed, no_sections, 1, 2),
                  NoApplicableMutators);
}

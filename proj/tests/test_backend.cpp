#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "spp/backend.hpp"
#include "test_util.hpp"

using namespace spp;

TEST_CASE("whitespace counter counts maximal non-whitespace runs") {
  TokenCounter c = TokenCounter::whitespace();
  CHECK(c.count("") == 0);
  CHECK(c.count("   \n\t ") == 0);
  CHECK(c.count("one") == 1);
  CHECK(c.count("one two  three\nfour\t five") == 5);
  CHECK(c.count(" leading and trailing ") == 3);
}

TEST_CASE("chars-div-4 counter rounds up") {
  TokenCounter c = TokenCounter::chars_div_4();
  CHECK(c.count("") == 0);
  CHECK(c.count("a") == 1);
  CHECK(c.count("abcd") == 1);
  CHECK(c.count("abcde") == 2);
}

TEST_CASE("external vocabulary counter uses greedy longest match") {
  std::string vocab_file = std::string(SPP_FIXTURE_DIR) + "/tmp_vocab.txt";
  testutil::write_file(vocab_file, "ab\nabc\nc\nxyz\n");
  TokenCounter c = TokenCounter::external_vocab(vocab_file);
  // "abc" matches as one token (longest), "d" is an unmatched byte.
  CHECK(c.count("abcd") == 2);
  CHECK(c.count("ababc") == 2);   // "ab" + "abc"
  CHECK(c.count("zzz") == 3);     // three unmatched bytes
  CHECK(c.count("") == 0);
  std::remove(vocab_file.c_str());

  CHECK_THROWS_AS(TokenCounter::external_vocab("/no/such/vocab.txt"),
                  VocabLoadError);
}

TEST_CASE("token counter factory maps kinds") {
  CHECK(make_token_counter({"whitespace", ""}).count("a b") == 2);
  CHECK(make_token_counter({"chars-div-4", ""}).count("abcdefgh") == 2);
  CHECK_THROWS(make_token_counter({"no-such-kind", ""}));
}

TEST_CASE("callback backend counts locally and is deterministic") {
  auto b = testutil::echo_backend();
  Completion one = b->complete("hello world", {});
  Completion two = b->complete("hello world", {});
  CHECK(one.text == two.text);
  CHECK(one.counted_locally);
  CHECK(one.input_tokens == 2);
  CHECK(one.output_tokens > 0);
}

TEST_CASE("qa helpers parse indexed question/answer lines") {
  std::string prompt =
      "Q[0]: first question\nQ[1]: second\nwith continuation\n"
      "A[0]: yes\nA[1]: no\nQ[2]: live one\nQ[3]: live two";
  std::vector<QaLine> all = qa_question_lines(prompt);
  REQUIRE(all.size() == 4);
  CHECK(all[1].text == "second\nwith continuation");
  CHECK(qa_answer_line_count(prompt) == 2);
  std::vector<QaLine> live = qa_live_questions(prompt);
  REQUIRE(live.size() == 2);
  CHECK(live[0].index == 2);
  CHECK(live[0].text == "live one");
  CHECK(live[1].text == "live two");
}

TEST_CASE("mock script parses, matches in order, and expands responses") {
  MockScript script = MockScript::from_json_text(R"({
    "rules": [
      {"match": "special", "respond": "special response"},
      {"match": "lookup me", "respond": "@lookup",
       "answers": {"what color": "blue"}},
      {"match": "Q[", "respond": "@aligned:True"}
    ],
    "default": "fallback"
  })");
  MockBackend backend(script, "mock:test");

  CHECK(backend.complete("a special prompt", {}).text == "special response");
  CHECK(backend.complete("nothing matches here", {}).text == "fallback");

  Completion aligned = backend.complete("Q[0]: one\nQ[1]: two", {});
  CHECK(aligned.text == "A[0]: True\nA[1]: True");

  Completion looked =
      backend.complete("lookup me\nQ[0]: what color\nQ[1]: unknown", {});
  CHECK(looked.text == "A[0]: blue\nA[1]: ?");
}

TEST_CASE("mock rules can require a minimum number of example answers") {
  MockScript script = MockScript::from_json_text(R"({
    "rules": [
      {"match": "", "min-example-answers": 2, "respond": "@aligned:right"},
      {"match": "", "respond": "@aligned:wrong"}
    ],
    "default": "none"
  })");
  MockBackend backend(script, "mock:gate");

  std::string with_examples =
      "Q[0]: a\nA[0]: 1\nQ[1]: b\nA[1]: 2\nQ[2]: live";
  CHECK(backend.complete(with_examples, {}).text == "A[2]: right");

  std::string one_example = "Q[0]: a\nA[0]: 1\nQ[1]: live";
  CHECK(backend.complete(one_example, {}).text == "A[1]: wrong");
}

TEST_CASE("mock backend is bit-deterministic for identical inputs") {
  MockScript script = MockScript::from_json_text(
      R"({"rules": [], "default": "@aligned:X"})");
  MockBackend backend(script, "mock:det");
  std::string prompt = "Q[0]: alpha\nQ[1]: beta";
  Completion a = backend.complete(prompt, {});
  Completion b = backend.complete(prompt, {});
  CHECK(a.text == b.text);
  CHECK(a.input_tokens == b.input_tokens);
  CHECK(a.output_tokens == b.output_tokens);
}

TEST_CASE("mock script loader rejects malformed documents") {
  CHECK_THROWS(MockScript::from_json_text("not json"));
  CHECK_THROWS(MockScript::from_json_text("[]"));
  CHECK_THROWS(MockScript::load("/no/such/script.json"));
}

TEST_CASE("http backend fails fast when the endpoint variable is unset") {
  HttpBackendConfig config;
  config.model = "test-model";
  config.base_url_env = "SPP_TEST_SURELY_UNSET_URL";
  config.api_key_env = "SPP_TEST_SURELY_UNSET_KEY";
  unsetenv(config.base_url_env.c_str());
  HttpBackend backend(config);
  CHECK(backend.id() == "http:test-model");
  try {
    backend.complete("hello", {});
    FAIL("expected a configuration error");
  } catch (const BackendError& e) {
    CHECK(e.fault() == BackendFault::Configuration);
    CHECK_FALSE(e.retryable());
    // The variable NAME may appear in diagnostics; a value never can, and
    // no URL-looking text should leak either.
    CHECK(std::string(e.what()).find("SPP_TEST_SURELY_UNSET_URL") !=
          std::string::npos);
  }
}

TEST_CASE("backend error retryability follows the fault taxonomy") {
  CHECK(BackendError(BackendFault::Transport, "x").retryable());
  CHECK_FALSE(BackendError(BackendFault::ProviderRefusal, "x").retryable());
  CHECK_FALSE(BackendError(BackendFault::Configuration, "x").retryable());
  CHECK_FALSE(BackendError(BackendFault::MalformedResponse, "x").retryable());
}

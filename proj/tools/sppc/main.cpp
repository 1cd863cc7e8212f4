#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spp/backend.hpp"
#include "spp/evaluation.hpp"
#include "spp/mutation.hpp"
#include "spp/program.hpp"
#include "spp/report.hpp"
#include "spp/runtime.hpp"
#include "spp/search.hpp"
#include "spp/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitBackend = 4;
constexpr int kExitBaselineFailed = 5;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config handling
// ---------------------------------------------------------------------------

json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  json cfg = json::parse(text, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object())
    throw ConfigError("config is not a JSON object: " + path);
  return cfg;
}

// --set a.b.c=value ; the value is parsed as JSON when possible, else kept
// as a plain string.
void apply_override(json& cfg, const std::string& kv) {
  std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got: " + kv);
  std::string path = kv.substr(0, eq);
  std::string raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &cfg;
  std::size_t start = 0;
  for (;;) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("--set has an empty path segment: " + kv);
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object())
      throw ConfigError("--set path crosses a non-object: " + key);
    node = &next;
    start = dot + 1;
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key()))
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

std::string want_string(const json& obj, const std::string& key,
                        const std::string& where) {
  if (!obj.at(key).is_string())
    throw ConfigError(where + "." + key + " must be a string");
  return obj.at(key).get<std::string>();
}

std::string resolve_path(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base_dir / path).lexically_normal().string();
}

TokenCounterSpec parse_counter(const json& obj, const fs::path& base_dir,
                               const std::string& where) {
  TokenCounterSpec spec;
  if (obj.is_null()) return spec;
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  check_keys(obj, {"kind", "vocab"}, where);
  if (obj.contains("kind")) spec.kind = want_string(obj, "kind", where);
  if (obj.contains("vocab"))
    spec.vocab_source = resolve_path(base_dir, want_string(obj, "vocab", where));
  return spec;
}

// ---------------------------------------------------------------------------
// Setup assembled from config + flags
// ---------------------------------------------------------------------------

struct Setup {
  PromptProgram program;
  std::optional<DataTable> train;
  std::optional<DataTable> test;
  std::unique_ptr<Backend> backend;
  SearchConfig search;
  Objective objective;
  MutatorCatalog catalog;
  std::optional<ChoiceSpace> space;
  std::string preset_name;
  std::int64_t shorten_max_words = 50;
};

std::unique_ptr<Backend> build_backend(const json& cfg, const fs::path& base_dir,
                                       const std::string& flag) {
  std::string kind;
  std::string arg;
  json bcfg = cfg.value("backend", json::object());
  if (!bcfg.is_object()) throw ConfigError("backend must be an object");
  check_keys(bcfg,
             {"kind", "script", "model", "counter", "requests-per-minute",
              "timeout-seconds", "base-url-env", "api-key-env"},
             "backend");
  if (!flag.empty()) {
    std::size_t colon = flag.find(':');
    if (colon == std::string::npos)
      throw ConfigError("--backend expects mock:<script> or http:<model>");
    kind = flag.substr(0, colon);
    arg = flag.substr(colon + 1);
  } else if (bcfg.contains("kind")) {
    kind = want_string(bcfg, "kind", "backend");
  }
  if (kind.empty())
    throw ConfigError("a backend is required (config backend.kind or --backend)");

  TokenCounterSpec counter =
      parse_counter(bcfg.value("counter", json()), base_dir, "backend.counter");

  if (kind == "mock") {
    std::string script = !arg.empty() ? arg
                         : bcfg.contains("script")
                             ? want_string(bcfg, "script", "backend")
                             : "";
    if (script.empty()) throw ConfigError("mock backend needs a script path");
    script = resolve_path(base_dir, script);
    std::string id = "mock:" + fs::path(script).filename().string();
    return std::make_unique<MockBackend>(MockScript::load(script), id,
                                         make_token_counter(counter));
  }
  if (kind == "http") {
    HttpBackendConfig hc;
    hc.model = !arg.empty() ? arg
               : bcfg.contains("model") ? want_string(bcfg, "model", "backend")
                                        : "";
    if (hc.model.empty()) throw ConfigError("http backend needs a model name");
    if (bcfg.contains("base-url-env"))
      hc.base_url_env = want_string(bcfg, "base-url-env", "backend");
    if (bcfg.contains("api-key-env"))
      hc.api_key_env = want_string(bcfg, "api-key-env", "backend");
    if (bcfg.contains("requests-per-minute"))
      hc.requests_per_minute = bcfg.at("requests-per-minute").get<double>();
    if (bcfg.contains("timeout-seconds"))
      hc.timeout_seconds = bcfg.at("timeout-seconds").get<int>();
    hc.counter = counter;
    return std::make_unique<HttpBackend>(std::move(hc));
  }
  throw ConfigError("unknown backend kind: " + kind);
}

void apply_search_json(SearchConfig& sc, const json& obj) {
  if (obj.is_null()) return;
  if (!obj.is_object()) throw ConfigError("search must be an object");
  check_keys(obj,
             {"strategy", "budget", "beam-width", "population-size",
              "tournament-size", "mutators-per-candidate", "mutation-arity",
              "depth-limit", "batch-size", "workers", "init",
              "init-candidates", "allow-truncation", "retry-backoff-ms"},
             "search");
  if (obj.contains("strategy"))
    sc.strategy = parse_strategy(want_string(obj, "strategy", "search"));
  if (obj.contains("budget")) sc.budget = obj.at("budget").get<std::int64_t>();
  if (obj.contains("beam-width"))
    sc.beam_width = obj.at("beam-width").get<std::size_t>();
  if (obj.contains("population-size"))
    sc.population_size = obj.at("population-size").get<std::size_t>();
  if (obj.contains("tournament-size"))
    sc.tournament_size = obj.at("tournament-size").get<std::size_t>();
  if (obj.contains("mutators-per-candidate"))
    sc.mutators_per_candidate =
        obj.at("mutators-per-candidate").get<std::size_t>();
  if (obj.contains("mutation-arity"))
    sc.mutation_arity = obj.at("mutation-arity").get<std::size_t>();
  if (obj.contains("depth-limit"))
    sc.depth_limit = obj.at("depth-limit").get<std::size_t>();
  if (obj.contains("batch-size"))
    sc.batch_size = obj.at("batch-size").get<std::size_t>();
  if (obj.contains("workers")) sc.workers = obj.at("workers").get<std::size_t>();
  if (obj.contains("init")) {
    std::string mode = want_string(obj, "init", "search");
    if (mode == "baseline") sc.init = InitMode::Baseline;
    else if (mode == "induce") sc.init = InitMode::Induce;
    else throw ConfigError("search.init must be baseline or induce");
  }
  if (obj.contains("init-candidates"))
    sc.init_candidates = obj.at("init-candidates").get<std::size_t>();
  if (obj.contains("allow-truncation"))
    sc.allow_truncation = obj.at("allow-truncation").get<bool>();
  if (obj.contains("retry-backoff-ms"))
    sc.retry_backoff_ms = obj.at("retry-backoff-ms").get<int>();
}

void apply_objective_json(Objective& obj, const json& j, const fs::path& base_dir) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("objective must be an object");
  check_keys(j,
             {"kind", "input-weight", "output-weight", "epsilon",
              "baseline-accuracy", "counter"},
             "objective");
  if (j.contains("kind"))
    obj.kind = parse_objective_kind(want_string(j, "kind", "objective"));
  if (j.contains("input-weight"))
    obj.input_weight = j.at("input-weight").get<double>();
  if (j.contains("output-weight"))
    obj.output_weight = j.at("output-weight").get<double>();
  if (j.contains("epsilon")) obj.epsilon = j.at("epsilon").get<double>();
  if (j.contains("baseline-accuracy") && !j.at("baseline-accuracy").is_null())
    obj.baseline_accuracy = j.at("baseline-accuracy").get<double>();
  if (j.contains("counter"))
    obj.counter = parse_counter(j.at("counter"), base_dir, "objective.counter");
}

NodeSelector parse_selector(const json& j) {
  NodeSelector sel;
  if (j.is_null()) return sel;
  if (!j.is_object()) throw ConfigError("selector must be an object");
  check_keys(j, {"kinds", "reference-id", "has-attribute", "ancestor-kind"},
             "selector");
  if (j.contains("kinds")) {
    for (const json& k : j.at("kinds")) {
      std::optional<NodeKind> kind = node_kind_from(k.get<std::string>());
      if (!kind) throw ConfigError("unknown node kind: " + k.get<std::string>());
      sel.kinds.push_back(*kind);
    }
  }
  if (j.contains("reference-id"))
    sel.reference_id = j.at("reference-id").get<std::string>();
  if (j.contains("has-attribute"))
    sel.has_attribute = j.at("has-attribute").get<std::string>();
  if (j.contains("ancestor-kind")) {
    std::string name = j.at("ancestor-kind").get<std::string>();
    std::optional<NodeKind> kind = node_kind_from(name);
    if (!kind) throw ConfigError("unknown node kind: " + name);
    sel.ancestor_kind = *kind;
  }
  return sel;
}

ChoiceSpace parse_choice_space(const json& j) {
  if (!j.is_object()) throw ConfigError("choice-space must be an object");
  check_keys(j, {"axes"}, "choice-space");
  if (!j.contains("axes") || !j.at("axes").is_array())
    throw ConfigError("choice-space.axes must be an array");
  std::vector<AttributeAxis> axes;
  for (const json& a : j.at("axes")) {
    if (!a.is_object()) throw ConfigError("choice-space axis must be an object");
    check_keys(a, {"name", "attribute", "selector", "values"}, "choice-space axis");
    AttributeAxis axis;
    if (a.contains("name")) axis.name = a.at("name").get<std::string>();
    if (!a.contains("attribute"))
      throw ConfigError("choice-space axis needs an attribute");
    axis.attribute = a.at("attribute").get<std::string>();
    axis.selector = parse_selector(a.value("selector", json()));
    if (!a.contains("values") || !a.at("values").is_array())
      throw ConfigError("choice-space axis needs a values array");
    for (const json& v : a.at("values")) {
      if (v.is_string()) axis.values.push_back(v.get<std::string>());
      else axis.values.push_back(v.dump());
    }
    axes.push_back(std::move(axis));
  }
  return attribute_grid(std::move(axes));
}

MutatorPtr mutator_by_name(const std::string& name, std::int64_t shorten_max_words) {
  if (name == "shorten-text")
    return make_shorten_text(static_cast<std::size_t>(shorten_max_words));
  return make_mutator(name);
}

struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string backend;
  std::string out_dir = "sppc-out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::int64_t budget = 0;
  bool budget_given = false;
  std::size_t workers = 0;
  bool workers_given = false;
};

Setup build_setup(json cfg, const fs::path& base_dir, const Flags& flags,
                  const std::string& default_preset) {
  check_keys(cfg,
             {"program", "dataset", "backend", "search", "objective",
              "mutators", "preset", "choice-space", "seed",
              "shorten-max-words"},
             "config");

  Setup setup;
  if (!cfg.contains("program"))
    throw ConfigError("config needs a program path");
  setup.program =
      load_program_file(resolve_path(base_dir, want_string(cfg, "program", "config")));

  if (cfg.contains("dataset")) {
    const json& d = cfg.at("dataset");
    if (!d.is_object()) throw ConfigError("dataset must be an object");
    check_keys(d, {"train", "test"}, "dataset");
    if (d.contains("train"))
      setup.train = DataTable::load_jsonl(
          resolve_path(base_dir, want_string(d, "train", "dataset")), "train");
    if (d.contains("test"))
      setup.test = DataTable::load_jsonl(
          resolve_path(base_dir, want_string(d, "test", "dataset")), "test");
    if (setup.train && setup.test) {
      std::set<std::string> train_ids;
      for (const DataRow& r : setup.train->rows) train_ids.insert(r.id);
      for (const DataRow& r : setup.test->rows) {
        if (train_ids.count(r.id))
          throw DatasetError("train and test splits share row id: " + r.id);
      }
    }
  }

  if (cfg.contains("shorten-max-words"))
    setup.shorten_max_words = cfg.at("shorten-max-words").get<std::int64_t>();

  // Preset first, then explicit search/objective/mutators refine it.
  if (cfg.contains("preset")) {
    setup.preset_name = want_string(cfg, "preset", "config");
    Preset preset = make_preset(setup.preset_name);
    setup.catalog = std::move(preset.catalog);
    setup.search = preset.config;
    setup.objective = preset.objective;
  } else if (!default_preset.empty() && !cfg.contains("mutators") &&
             !cfg.contains("choice-space")) {
    setup.preset_name = default_preset;
    Preset preset = make_preset(default_preset);
    setup.catalog = std::move(preset.catalog);
    setup.search = preset.config;
    setup.objective = preset.objective;
  }

  apply_search_json(setup.search, cfg.value("search", json()));
  apply_objective_json(setup.objective, cfg.value("objective", json()), base_dir);

  if (cfg.contains("mutators")) {
    if (!cfg.at("mutators").is_array())
      throw ConfigError("mutators must be an array of names");
    setup.catalog.clear();
    for (const json& m : cfg.at("mutators"))
      setup.catalog.push_back(
          mutator_by_name(m.get<std::string>(), setup.shorten_max_words));
  }
  if (cfg.contains("choice-space"))
    setup.space = parse_choice_space(cfg.at("choice-space"));

  if (cfg.contains("seed")) setup.search.seed = cfg.at("seed").get<std::uint64_t>();
  if (flags.seed_given) setup.search.seed = flags.seed;
  if (flags.budget_given) setup.search.budget = flags.budget;
  if (flags.workers_given) setup.search.workers = flags.workers;

  setup.backend = build_backend(cfg, base_dir, flags.backend);
  return setup;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void write_artifacts(const std::string& out_dir, const SearchTrace& trace,
                     const SummaryInputs& summary_in,
                     const std::string& command_line,
                     const std::string& config_path) {
  const CandidateRecord* selected = trace.selected_record();
  if (selected)
    save_program_file(selected->program, out_dir + "/selected.spp.json");
  write_text_file(out_dir + "/trace.csv", trace_csv(trace));
  write_text_file(out_dir + "/summary.json", summary_json(summary_in));
  write_text_file(out_dir + "/manifest.json",
                  manifest_json(command_line, out_dir, config_path));
}

void print_ok(const std::vector<std::pair<std::string, std::string>>& kvs) {
  std::string line = "ok";
  for (const auto& [k, v] : kvs) line += " " + k + "=" + v;
  line += "\n";
  std::fwrite(line.data(), 1, line.size(), stdout);
}

int run_search_command(const std::string& command, Setup& setup,
                       const Flags& flags, const std::string& command_line) {
  if (!setup.train) throw DatasetError("a train dataset is required");
  if (!setup.space && setup.catalog.empty())
    throw ConfigError("one of mutators, preset, or choice-space is required");

  fs::create_directories(flags.out_dir);
  EvalCache cache(flags.out_dir + "/cache.jsonl");

  if (command == "compress") {
    // Pre-flight: a compression run is meaningless when the seed program
    // cannot be evaluated. Pending cache entries carry over to the search,
    // so no extra calls are charged.
    CandidateRecord probe =
        evaluate_candidate(setup.program, *setup.train, *setup.backend, &cache,
                           setup.search.batch_size, setup.objective,
                           setup.search.retry_backoff_ms);
    if (probe.errored) {
      std::fprintf(stderr,
                   "error command=compress reason=baseline-evaluation-failed "
                   "detail=\"%s\"\n",
                   probe.error.c_str());
      return kExitBaselineFailed;
    }
    if (!setup.objective.has_baseline())
      setup.objective.baseline_accuracy = probe.train_accuracy;
  }

  SearchEnv env;
  env.backend = setup.backend.get();
  env.cache = &cache;
  env.table = &*setup.train;
  env.objective = setup.objective;

  SearchTrace trace =
      setup.space
          ? enumerative_search(setup.program, *setup.space, env, setup.search)
          : iterative_search(setup.program, setup.catalog, env, setup.search);

  const CandidateRecord* selected = trace.selected_record();
  std::optional<double> test_accuracy;
  if (selected && setup.test && !setup.test->rows.empty()) {
    // The held-out split is consulted exactly once, on the final candidate.
    CandidateRecord test_rec = evaluate_candidate(
        selected->program, *setup.test, *setup.backend, &cache,
        setup.search.batch_size, setup.objective, setup.search.retry_backoff_ms);
    cache.commit();
    if (test_rec.errored) {
      std::fprintf(stderr, "warning: test-split evaluation failed: %s\n",
                   test_rec.error.c_str());
    } else {
      test_accuracy = test_rec.train_accuracy;
    }
  }

  SummaryInputs summary_in;
  summary_in.command = command;
  summary_in.preset = setup.preset_name;
  summary_in.config = &setup.search;
  summary_in.objective = &setup.objective;
  summary_in.trace = &trace;
  summary_in.test_accuracy = test_accuracy;
  write_artifacts(flags.out_dir, trace, summary_in, command_line,
                  flags.config_path);

  std::vector<std::pair<std::string, std::string>> kvs;
  kvs.emplace_back("command", command);
  kvs.emplace_back("strategy", strategy_name(setup.search.strategy));
  kvs.emplace_back("seed", std::to_string(setup.search.seed));
  kvs.emplace_back("budget-limit", std::to_string(setup.search.budget));
  kvs.emplace_back("budget-used", std::to_string(trace.evaluations));
  kvs.emplace_back("candidates", std::to_string(trace.records.size()));
  if (selected) {
    kvs.emplace_back("selected", std::to_string(selected->candidate_id));
    kvs.emplace_back("train-accuracy", fmt_double(selected->train_accuracy));
    kvs.emplace_back("objective-value", fmt_double(selected->objective_value));
    if (command == "compress" && !trace.records.empty()) {
      const CandidateRecord& baseline = trace.records.front();
      kvs.emplace_back("baseline-accuracy", fmt_double(baseline.train_accuracy));
      kvs.emplace_back("baseline-cost", fmt_double(baseline.weighted_cost));
      kvs.emplace_back("selected-cost", fmt_double(selected->weighted_cost));
      if (baseline.weighted_cost > 0) {
        kvs.emplace_back(
            "cost-reduction-percent",
            fmt_double(100.0 *
                       (baseline.weighted_cost - selected->weighted_cost) /
                       baseline.weighted_cost));
      }
      kvs.emplace_back("accuracy-delta",
                       fmt_double(selected->train_accuracy -
                                  baseline.train_accuracy));
      kvs.emplace_back("feasible", selected->feasible ? "1" : "0");
    }
  }
  if (test_accuracy)
    kvs.emplace_back("test-accuracy", fmt_double(*test_accuracy));
  kvs.emplace_back("out", flags.out_dir);
  print_ok(kvs);
  return kExitOk;
}

int run_evaluate(Setup& setup, const Flags& flags, const std::string& split) {
  const std::optional<DataTable>& table =
      split == "test" ? setup.test : setup.train;
  if (!table) throw DatasetError("no " + split + " dataset configured");

  fs::create_directories(flags.out_dir);
  EvalCache cache(flags.out_dir + "/cache.jsonl");
  CandidateRecord rec = evaluate_candidate(
      setup.program, *table, *setup.backend, &cache, setup.search.batch_size,
      setup.objective, setup.search.retry_backoff_ms);
  cache.commit();
  if (rec.errored) {
    std::fprintf(stderr, "error command=evaluate reason=backend detail=\"%s\"\n",
                 rec.error.c_str());
    return kExitBackend;
  }

  nlohmann::ordered_json record;
  record["split"] = split;
  record["rows"] = table->rows.size();
  record["accuracy"] = rec.train_accuracy;
  record["charged-input-tokens"] = rec.charged_input_tokens;
  record["charged-output-tokens"] = rec.charged_output_tokens;
  record["weighted-cost"] = rec.weighted_cost;
  write_text_file(flags.out_dir + "/evaluation.json", record.dump(2) + "\n");

  print_ok({{"command", "evaluate"},
            {"split", split},
            {"rows", std::to_string(table->rows.size())},
            {"accuracy", fmt_double(rec.train_accuracy)},
            {"input-tokens", std::to_string(rec.charged_input_tokens)},
            {"output-tokens", std::to_string(rec.charged_output_tokens)},
            {"weighted-cost", fmt_double(rec.weighted_cost)}});
  return kExitOk;
}

int run_render(Setup& setup, std::optional<std::size_t> row_count) {
  std::vector<DataRow> rows;
  if (setup.train && !setup.train->rows.empty()) {
    std::size_t n = row_count.value_or(setup.search.batch_size);
    n = std::min(n, setup.train->rows.size());
    rows.assign(setup.train->rows.begin(), setup.train->rows.begin() + n);
  }
  std::string prompt = render(setup.program, rows);
  std::fwrite(prompt.data(), 1, prompt.size(), stdout);
  return kExitOk;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// Minimal LCS line diff; programs are small so quadratic cost is fine.
void print_line_diff(const std::string& before, const std::string& after) {
  std::vector<std::string> a = split_lines(before);
  std::vector<std::string> b = split_lines(after);
  std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> lcs(n + 1,
                                            std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1
                               : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  std::size_t i = 0, j = 0;
  std::string out;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      out += "  " + a[i] + "\n";
      ++i, ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      out += "- " + a[i] + "\n";
      ++i;
    } else {
      out += "+ " + b[j] + "\n";
      ++j;
    }
  }
  for (; i < n; ++i) out += "- " + a[i] + "\n";
  for (; j < m; ++j) out += "+ " + b[j] + "\n";
  std::fwrite(out.data(), 1, out.size(), stdout);
}

int run_mutate(Setup& setup, const Flags& flags, const std::string& mutator_name,
               bool out_given) {
  MutatorPtr op = mutator_by_name(mutator_name, setup.shorten_max_words);
  EvalCache cache;  // memory-only
  ExecutionContext ctx;
  ctx.backend = setup.backend.get();
  ctx.cache = &cache;
  ctx.backoff_ms = setup.search.retry_backoff_ms;
  std::vector<MutationOutcome> outcomes =
      op->mutate(setup.program, setup.search.seed, 1, &ctx);
  const PromptProgram& child = outcomes.front().child;
  if (out_given) {
    fs::create_directories(flags.out_dir);
    save_program_file(child, flags.out_dir + "/mutated.spp.json");
  }
  print_line_diff(serialize(setup.program), serialize(child));
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"search-based optimizer for symbolic prompt programs"};
  app.fallthrough();
  app.require_subcommand(1);

  Flags flags;
  std::string split = "train";
  std::string mutator_name;
  std::size_t render_rows = 0;

  app.add_option("--config", flags.config_path, "JSON run configuration")
      ->required();
  app.add_option("--set", flags.sets,
                 "override a config value: dotted.path=json-value");
  app.add_option("--backend", flags.backend,
                 "backend override: mock:<script> or http:<model>");
  auto* opt_seed = app.add_option("--seed", flags.seed, "random seed");
  auto* opt_budget =
      app.add_option("--budget", flags.budget, "evaluation budget");
  auto* opt_workers =
      app.add_option("--workers", flags.workers, "parallel evaluation workers");
  auto* opt_out = app.add_option("--out", flags.out_dir, "artifact directory");

  CLI::App* cmd_optimize = app.add_subcommand(
      "optimize", "search for a program with better objective value");
  CLI::App* cmd_compress = app.add_subcommand(
      "compress", "minimize prompt cost under an accuracy floor");
  CLI::App* cmd_evaluate =
      app.add_subcommand("evaluate", "evaluate the program once on a split");
  cmd_evaluate->add_option("--split", split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  CLI::App* cmd_render = app.add_subcommand(
      "render", "print the exact prompt for the first minibatch");
  auto* opt_rows = cmd_render->add_option(
      "--rows", render_rows, "live rows to render (default: batch size)");
  CLI::App* cmd_mutate =
      app.add_subcommand("mutate", "apply one mutator and print a line diff");
  cmd_mutate->add_option("--mutator", mutator_name, "mutator name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  flags.seed_given = opt_seed->count() > 0;
  flags.budget_given = opt_budget->count() > 0;
  flags.workers_given = opt_workers->count() > 0;

  json cfg = load_config_file(flags.config_path);
  for (const std::string& kv : flags.sets) apply_override(cfg, kv);
  fs::path base_dir = fs::path(flags.config_path).parent_path();

  std::string command_line;
  for (int i = 0; i < argc; ++i) {
    if (i) command_line += ' ';
    command_line += argv[i];
  }

  std::string default_preset = cmd_compress->parsed() ? "sammo-compress" : "";
  Setup setup = build_setup(std::move(cfg), base_dir, flags, default_preset);

  if (cmd_optimize->parsed())
    return run_search_command("optimize", setup, flags, command_line);
  if (cmd_compress->parsed())
    return run_search_command("compress", setup, flags, command_line);
  if (cmd_evaluate->parsed()) return run_evaluate(setup, flags, split);
  if (cmd_render->parsed()) {
    return run_render(setup, opt_rows->count() > 0
                                 ? std::optional<std::size_t>(render_rows)
                                 : std::nullopt);
  }
  if (cmd_mutate->parsed())
    return run_mutate(setup, flags, mutator_name, opt_out->count() > 0);
  return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error reason=config detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error reason=program-parse detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error reason=program-invalid detail=\"%s\"\n",
                 e.what());
    return kExitConfig;
  } catch (const UnknownPreset& e) {
    std::fprintf(stderr, "error reason=preset detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const EmptySpace& e) {
    std::fprintf(stderr, "error reason=choice-space detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const TruncationRequired& e) {
    std::fprintf(stderr, "error reason=truncation detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const NotApplicable& e) {
    std::fprintf(stderr, "error reason=not-applicable detail=\"%s\"\n",
                 e.what());
    return kExitConfig;
  } catch (const NoApplicableMutators& e) {
    std::fprintf(stderr, "error reason=no-applicable-mutators detail=\"%s\"\n",
                 e.what());
    return kExitConfig;
  } catch (const VocabLoadError& e) {
    std::fprintf(stderr, "error reason=vocab detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error reason=config detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "error reason=dataset detail=\"%s\"\n", e.what());
    return kExitDataset;
  } catch (const LengthMismatch& e) {
    std::fprintf(stderr, "error reason=dataset detail=\"%s\"\n", e.what());
    return kExitDataset;
  } catch (const BackendError& e) {
    std::fprintf(stderr, "error reason=backend detail=\"%s\"\n", e.what());
    return kExitBackend;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error reason=config detail=\"%s\"\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error reason=internal detail=\"%s\"\n", e.what());
    return kExitInternal;
  }
}

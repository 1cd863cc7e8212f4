#include "spp/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "spp/rng.hpp"

namespace spp {

namespace {

std::string normalize(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

DataTable DataTable::load_jsonl(const std::string& path, std::string split_name) {
  std::ifstream in(path);
  if (!in.is_open()) throw DatasetError("cannot open dataset file: " + path);

  DataTable table;
  table.split_name = std::move(split_name);
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      throw DatasetError(where + ": not a JSON object");
    if (doc.size() != 3 || !doc.contains("id") || !doc.contains("input") ||
        !doc.contains("label"))
      throw DatasetError(where + ": expected exactly {\"id\",\"input\",\"label\"}");
    if (!doc["id"].is_string() || !doc["input"].is_string() ||
        !doc["label"].is_string())
      throw DatasetError(where + ": id, input, and label must be strings");
    DataRow row{doc["id"].get<std::string>(), doc["input"].get<std::string>(),
                doc["label"].get<std::string>()};
    if (!ids.insert(row.id).second)
      throw DatasetError(where + ": duplicate row id '" + row.id + "'");
    table.rows.push_back(std::move(row));
  }
  return table;
}

DataTable DataTable::sample(std::uint64_t seed, std::size_t n) const {
  DataTable out;
  out.split_name = split_name;
  if (n >= rows.size()) {
    out.rows = rows;
    return out;
  }
  rng::Engine engine(seed);
  std::vector<std::size_t> picked = rng::sample_indices(engine, rows.size(), n);
  std::sort(picked.begin(), picked.end());
  out.rows.reserve(n);
  for (std::size_t idx : picked) out.rows.push_back(rows[idx]);
  return out;
}

std::vector<std::vector<DataRow>> DataTable::batches(std::size_t b) const {
  if (b == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::vector<DataRow>> out;
  for (std::size_t begin = 0; begin < rows.size(); begin += b) {
    std::size_t end = std::min(begin + b, rows.size());
    out.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                     rows.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::string> DataTable::labels() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const DataRow& r : rows) out.push_back(r.label);
  return out;
}

double accuracy(const std::vector<Answer>& outputs,
                const std::vector<std::string>& labels) {
  if (outputs.size() != labels.size())
    throw LengthMismatch("accuracy: " + std::to_string(outputs.size()) +
                         " outputs vs " + std::to_string(labels.size()) +
                         " labels");
  if (outputs.empty()) {
    std::fprintf(stderr, "warning: accuracy over zero rows is defined as 1.0\n");
    return 1.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].has_value() && normalize(*outputs[i]) == normalize(labels[i]))
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(outputs.size());
}

const char* objective_kind_name(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::MaximizeAccuracy: return "maximize-accuracy";
    case ObjectiveKind::MinCostWithAccuracyFloor:
      return "min-cost-with-accuracy-floor";
  }
  return "maximize-accuracy";
}

ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "maximize-accuracy") return ObjectiveKind::MaximizeAccuracy;
  if (name == "min-cost-with-accuracy-floor")
    return ObjectiveKind::MinCostWithAccuracyFloor;
  throw std::invalid_argument("unknown objective kind: " + name);
}

bool Objective::feasible(double train_accuracy) const {
  if (kind != ObjectiveKind::MinCostWithAccuracyFloor) return true;
  if (!has_baseline()) return true;  // floor not fixed yet (seed evaluation)
  return train_accuracy >= baseline_accuracy - epsilon;
}

double Objective::value(double train_accuracy, double cost) const {
  if (kind == ObjectiveKind::MaximizeAccuracy) return -train_accuracy;
  if (!feasible(train_accuracy)) return kInfeasibleBand + (1.0 - train_accuracy);
  return cost;
}

double weighted_cost(std::int64_t input_tokens, std::int64_t output_tokens,
                     const Objective& objective) {
  return objective.input_weight * static_cast<double>(input_tokens) +
         objective.output_weight * static_cast<double>(output_tokens);
}

CandidateRecord evaluate_candidate(const PromptProgram& program,
                                   const DataTable& table, Backend& backend,
                                   EvalCache* cache, std::size_t batch_size,
                                   const Objective& objective,
                                   int retry_backoff_ms) {
  CandidateRecord record;
  record.program = program;

  ExecutionContext ctx;
  ctx.backend = &backend;
  ctx.cache = cache;
  ctx.backoff_ms = retry_backoff_ms;

  std::vector<Answer> outputs;
  outputs.reserve(table.rows.size());
  try {
    for (const std::vector<DataRow>& batch : table.batches(batch_size)) {
      ExecutionResult result = execute(program, batch, ctx);
      outputs.insert(outputs.end(), result.outputs.begin(), result.outputs.end());
      record.charged_input_tokens += result.charged_input_tokens();
      record.charged_output_tokens += result.charged_output_tokens();
    }
  } catch (const BackendError& e) {
    record.errored = true;
    record.error = e.what();
    record.train_accuracy = 0.0;
    record.feasible = false;
    record.weighted_cost = weighted_cost(record.charged_input_tokens,
                                         record.charged_output_tokens, objective);
    record.objective_value = kErroredValue;
    return record;
  }

  record.train_accuracy = accuracy(outputs, table.labels());
  record.weighted_cost = weighted_cost(record.charged_input_tokens,
                                       record.charged_output_tokens, objective);
  record.feasible = objective.feasible(record.train_accuracy);
  record.objective_value =
      objective.value(record.train_accuracy, record.weighted_cost);
  return record;
}

}  // namespace spp

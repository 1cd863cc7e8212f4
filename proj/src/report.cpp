#include "spp/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace spp {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  if (std::strtod(buf, nullptr) != v)
    std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

nlohmann::ordered_json record_json(const CandidateRecord& r) {
  nlohmann::ordered_json j;
  j["candidate-id"] = r.candidate_id;
  j["generation"] = r.generation;
  j["parent-id"] = r.parent_id;
  j["mutator"] = r.mutator;
  j["train-accuracy"] = r.train_accuracy;
  j["charged-input-tokens"] = r.charged_input_tokens;
  j["charged-output-tokens"] = r.charged_output_tokens;
  j["weighted-cost"] = r.weighted_cost;
  j["feasible"] = r.feasible;
  j["errored"] = r.errored;
  j["objective-value"] = r.objective_value;
  return j;
}

}  // namespace

std::string trace_csv(const SearchTrace& trace) {
  std::string out =
      "candidate-id,generation,parent-id,mutator,train-accuracy,"
      "charged-input-tokens,charged-output-tokens,weighted-cost,feasible,"
      "errored,objective-value,eval-index\n";
  char buf[160];
  for (const CandidateRecord& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%lld,",
                  static_cast<long long>(r.candidate_id),
                  static_cast<long long>(r.generation),
                  static_cast<long long>(r.parent_id));
    out += buf;
    out += csv_escape(r.mutator);
    std::snprintf(buf, sizeof buf, ",%s,%lld,%lld,%s,%d,%d,%s,%lld\n",
                  format_double(r.train_accuracy).c_str(),
                  static_cast<long long>(r.charged_input_tokens),
                  static_cast<long long>(r.charged_output_tokens),
                  format_double(r.weighted_cost).c_str(), r.feasible ? 1 : 0,
                  r.errored ? 1 : 0,
                  format_double(r.objective_value).c_str(),
                  static_cast<long long>(r.eval_index));
    out += buf;
  }
  return out;
}

std::string summary_json(const SummaryInputs& in) {
  const SearchTrace& trace = *in.trace;
  const Objective& objective = *in.objective;
  const SearchConfig& config = *in.config;

  nlohmann::ordered_json j;
  j["command"] = in.command;
  if (!in.preset.empty()) j["preset"] = in.preset;
  j["seed"] = config.seed;
  j["strategy"] = strategy_name(config.strategy);
  j["budget"] = {{"limit", config.budget}, {"used", trace.evaluations}};
  nlohmann::ordered_json obj;
  obj["kind"] = objective_kind_name(objective.kind);
  obj["input-weight"] = objective.input_weight;
  obj["output-weight"] = objective.output_weight;
  obj["epsilon"] = objective.epsilon;
  obj["baseline-accuracy"] = trace.baseline_accuracy;
  j["objective"] = std::move(obj);
  j["candidates"] = trace.records.size();

  const CandidateRecord* baseline =
      trace.records.empty() ? nullptr : &trace.records.front();
  const CandidateRecord* selected = trace.selected_record();
  j["baseline"] = baseline ? record_json(*baseline) : nlohmann::ordered_json();
  j["selected"] = selected ? record_json(*selected) : nlohmann::ordered_json();
  if (baseline && selected) {
    j["accuracy-delta"] = selected->train_accuracy - baseline->train_accuracy;
    if (baseline->weighted_cost > 0) {
      j["cost-reduction-percent"] =
          100.0 * (baseline->weighted_cost - selected->weighted_cost) /
          baseline->weighted_cost;
    }
    j["lineage"] = trace.lineage(selected->candidate_id);
  }
  j["mutation-tokens"] = {{"input", trace.mutation_input_tokens},
                          {"output", trace.mutation_output_tokens}};
  if (in.test_accuracy) j["test"] = {{"accuracy", *in.test_accuracy}};
  return j.dump(2) + "\n";
}

std::string manifest_json(const std::string& command_line,
                          const std::string& out_dir,
                          const std::string& config_path) {
  std::random_device rd;
  char run_id[17];
  std::snprintf(run_id, sizeof run_id, "%08x%08x", rd(), rd());

  std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);

  nlohmann::ordered_json j;
  j["run-id"] = run_id;
  j["created"] = stamp;
  j["command-line"] = command_line;
  j["out-dir"] = out_dir;
  j["config-path"] = config_path;
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out.flush()) throw std::runtime_error("failed writing file: " + path);
}

}  // namespace spp

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "spp/search.hpp"

namespace spp {

/// One CSV row per candidate in admission order:
///   candidate-id,generation,parent-id,mutator,train-accuracy,
///   charged-input-tokens,charged-output-tokens,weighted-cost,feasible,
///   errored,objective-value,eval-index
/// Floats print with shortest round-trip formatting so identical runs produce
/// identical bytes.
std::string trace_csv(const SearchTrace& trace);

struct SummaryInputs {
  std::string command;
  std::string preset;  // empty when mutators were listed explicitly
  const SearchConfig* config = nullptr;
  const Objective* objective = nullptr;
  const SearchTrace* trace = nullptr;
  // Measured exactly once, on the selected candidate only.
  std::optional<double> test_accuracy;
};

/// Deterministic run summary: same seed and inputs give byte-identical text.
/// Deliberately excludes timestamps, run ids, hostnames, and absolute paths —
/// those live in the manifest.
std::string summary_json(const SummaryInputs& in);

/// Run provenance: run id, UTC timestamp, command line, paths. The only
/// artifact expected to differ between replays of the same run.
std::string manifest_json(const std::string& command_line,
                          const std::string& out_dir,
                          const std::string& config_path);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace spp

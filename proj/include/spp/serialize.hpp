#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "spp/program.hpp"

// Program file format (extension .spp.json):
//   {"root": {"id": 0, "kind": "Text", "attrs": {...}, "children": [...]}}
// Unknown fields are rejected everywhere. serialize/deserialize are inverse
// on valid programs, with identical node ids on both sides.

namespace spp {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, std::size_t byte_offset, std::size_t line)
      : std::runtime_error(std::move(message)),
        byte_offset_(byte_offset),
        line_(line) {}
  std::size_t byte_offset() const { return byte_offset_; }
  std::size_t line() const { return line_; }

 private:
  std::size_t byte_offset_;
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(ValidationReport report)
      : std::runtime_error("program failed validation:\n" + report.to_string()),
        report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Canonical JSON text, 2-space indent, trailing newline.
std::string serialize(const PromptProgram& program);

/// Throws ParseError on malformed input, ValidationError on invariant breaks.
PromptProgram deserialize(std::string_view text);

PromptProgram load_program_file(const std::string& path);
void save_program_file(const PromptProgram& program, const std::string& path);

}  // namespace spp

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// ─── Prompt program IR ──────────────────────────────────────────────────────
//
// A prompt program is an immutable tree of typed nodes. Graph invariants:
//   1. single root, every node reachable from it, no cycles;
//   2. node ids are unique, non-negative, and monotonically assigned;
//   3. every non-root node has exactly one parent;
//   4. child counts and attributes are legal for each node kind.
// Edits never mutate in place; they return a fresh program whose copied
// subtrees carry freshly assigned ids.

namespace spp {

using NodeId = std::int64_t;
inline constexpr NodeId kNoNode = -1;

enum class NodeKind {
  Text,             // leaf; literal prompt text
  Section,          // titled block; renders markdown or xml
  FewShotExamples,  // leaf; stored input/output pairs rendered as examples
  InputData,        // leaf; live input rows rendered without labels
  GenerateText,     // one child = prompt source; produces a backend response
  OutputParser,     // one child; parses response text into per-row answers
  Concat,           // children joined in order
};

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from(std::string_view name);

// Attribute names. Legality per kind is a static table (see legal_attributes).
namespace attr {
inline constexpr char kContent[] = "content";
inline constexpr char kTitle[] = "title";
inline constexpr char kReferenceId[] = "reference-id";
inline constexpr char kDataFormat[] = "data-format";
inline constexpr char kSectionFormat[] = "section-format";
inline constexpr char kExampleCount[] = "example-count";
inline constexpr char kExamples[] = "examples";
inline constexpr char kParserKind[] = "parser-kind";
inline constexpr char kParserPattern[] = "parser-pattern";
inline constexpr char kGenerationParams[] = "generation-params";
}  // namespace attr

// Enumerated attribute domains.
namespace formats {
inline constexpr char kJson[] = "json";
inline constexpr char kXml[] = "xml";
inline constexpr char kPlaintext[] = "plaintext";
inline constexpr char kQaBatch[] = "qa-batch";
inline constexpr char kMarkdown[] = "markdown";
// parser kinds
inline constexpr char kIdentity[] = "identity";
inline constexpr char kRegexExtract[] = "regex-extract";
inline constexpr char kBatchAnswers[] = "batch-answers";
inline constexpr char kJsonField[] = "json-field";

const std::vector<std::string>& data_formats();
const std::vector<std::string>& section_formats();
const std::vector<std::string>& parser_kinds();
}  // namespace formats

struct ExamplePair {
  std::string input;
  std::string output;
  friend bool operator==(const ExamplePair&, const ExamplePair&) = default;
};
using ExampleList = std::vector<ExamplePair>;

struct GenerationParams {
  double temperature = 0.0;
  std::int64_t max_output_tokens = 256;
  friend bool operator==(const GenerationParams&,
                         const GenerationParams&) = default;
};

using AttrValue =
    std::variant<std::string, std::int64_t, ExampleList, GenerationParams>;
using AttributeMap = std::map<std::string, AttrValue>;  // sorted: stable output

struct Node {
  NodeId id = kNoNode;
  NodeKind kind = NodeKind::Text;
  AttributeMap attrs;
  std::vector<NodeId> children;
  friend bool operator==(const Node&, const Node&) = default;
};

/// Detached subtree; the unit of program construction and child insertion.
struct NodeTemplate {
  NodeKind kind = NodeKind::Text;
  AttributeMap attrs;
  std::vector<NodeTemplate> children;
};

// Attribute legality.
const std::vector<std::string_view>& legal_attributes(NodeKind kind);
const std::vector<std::string_view>& required_attributes(NodeKind kind);
bool attribute_legal(NodeKind kind, std::string_view name);

struct Violation {
  NodeId node = kNoNode;
  std::string rule;    // stable identifier, e.g. "cycle", "child-count"
  std::string detail;  // human-readable
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

/// Conjunctive node predicate. Selection order is deterministic pre-order.
struct NodeSelector {
  std::vector<NodeKind> kinds;  // empty = any kind
  std::optional<std::string> reference_id;
  std::optional<std::string> has_attribute;
  std::optional<NodeKind> ancestor_kind;

  static NodeSelector by_kind(NodeKind kind) {
    NodeSelector s;
    s.kinds = {kind};
    return s;
  }
  static NodeSelector by_reference(std::string ref) {
    NodeSelector s;
    s.reference_id = std::move(ref);
    return s;
  }
};

// Edits.
struct DeleteNode {
  NodeId target = kNoNode;
};
struct ReplaceAttribute {
  NodeId target = kNoNode;
  std::string name;
  AttrValue value;
};
struct InsertChild {
  NodeId parent = kNoNode;
  std::size_t position = 0;
  NodeTemplate subtree;
};
struct DuplicateSubtree {
  NodeId source = kNoNode;
  NodeId new_parent = kNoNode;
  std::size_t position = 0;
};
using Edit = std::variant<DeleteNode, ReplaceAttribute, InsertChild, DuplicateSubtree>;

enum class EditFault {
  TargetMissing,   // referenced node id not in the program
  WouldOrphanRoot, // edit would delete the root
  IllegalAttribute,// attribute not legal for the target's kind
  InvalidResult,   // edit would break a graph or attribute invariant
};

class EditError : public std::runtime_error {
 public:
  EditError(EditFault fault, const std::string& message)
      : std::runtime_error(message), fault_(fault) {}
  EditFault fault() const { return fault_; }

 private:
  EditFault fault_;
};

class PromptProgram {
 public:
  PromptProgram() = default;

  /// Materializes a template; ids assigned pre-order starting at 0.
  static PromptProgram build(const NodeTemplate& root);

  /// Adopts raw nodes (deserializer, tests). Does not validate.
  static PromptProgram from_nodes(std::vector<Node> nodes, NodeId root);

  bool empty() const { return root_ == kNoNode; }
  NodeId root() const { return root_; }
  std::size_t size() const { return nodes_.size(); }
  NodeId next_id() const { return next_id_; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node* find(NodeId id) const;
  const Node& at(NodeId id) const;  // throws std::out_of_range
  NodeId parent_of(NodeId id) const;

  std::vector<NodeId> preorder() const;
  std::vector<NodeId> subtree_ids(NodeId id) const;
  bool matches(NodeId id, const NodeSelector& sel) const;
  std::vector<NodeId> select(const NodeSelector& sel) const;

  ValidationReport validate() const;

  /// Returns an edited copy; this program is never modified.
  PromptProgram apply_edit(const Edit& edit) const;

  /// Structural equality: same tree of (id, kind, attrs, ordered children).
  bool operator==(const PromptProgram& other) const;

 private:
  Node& node_ref(NodeId id);
  NodeId add_subtree(const NodeTemplate& t);
  NodeId copy_subtree(const Node& source, const PromptProgram& from);
  void remove_subtree(NodeId id);
  void validate_or_throw_edit() const;

  std::vector<Node> nodes_;
  NodeId root_ = kNoNode;
  NodeId next_id_ = 0;
};

// Attribute accessors (nullptr / nullopt when absent or wrong type).
const std::string* attr_string(const Node& node, std::string_view name);
std::optional<std::int64_t> attr_int(const Node& node, std::string_view name);
const ExampleList* attr_example_list(const Node& node);
std::optional<GenerationParams> attr_generation_params(const Node& node);

/// Rendered example count: min(example-count, stored), default all stored.
std::size_t effective_example_count(const Node& node);

// Template builders; keep fixture and test construction terse.
namespace nt {
NodeTemplate text(std::string content, std::string reference_id = "");
NodeTemplate section(std::string title, std::vector<NodeTemplate> children,
                     std::string section_format = "");
NodeTemplate few_shot(ExampleList examples, std::int64_t count = -1,
                      std::string data_format = "");
NodeTemplate input_data(std::string data_format = "");
NodeTemplate generate(NodeTemplate child, GenerationParams params = {});
NodeTemplate parser(std::string parser_kind, NodeTemplate child,
                    std::string pattern = "");
NodeTemplate concat(std::vector<NodeTemplate> children);
}  // namespace nt

}  // namespace spp

#include "spp/program.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace spp {

namespace {

constexpr std::string_view kKindNames[] = {
    "Text",      "Section",      "FewShotExamples", "InputData",
    "GenerateText", "OutputParser", "Concat",
};

std::string describe(NodeId id) { return "node " + std::to_string(id); }

}  // namespace

std::string_view to_string(NodeKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

std::optional<NodeKind> node_kind_from(std::string_view name) {
  for (int i = 0; i < 7; ++i) {
    if (kKindNames[i] == name) return static_cast<NodeKind>(i);
  }
  return std::nullopt;
}

namespace formats {

const std::vector<std::string>& data_formats() {
  static const std::vector<std::string> v{kJson, kXml, kPlaintext, kQaBatch};
  return v;
}

const std::vector<std::string>& section_formats() {
  static const std::vector<std::string> v{kMarkdown, kXml};
  return v;
}

const std::vector<std::string>& parser_kinds() {
  static const std::vector<std::string> v{kIdentity, kRegexExtract,
                                          kBatchAnswers, kJsonField};
  return v;
}

}  // namespace formats

const std::vector<std::string_view>& legal_attributes(NodeKind kind) {
  using namespace attr;
  static const std::vector<std::string_view> text{kContent, kReferenceId};
  static const std::vector<std::string_view> section{kTitle, kSectionFormat,
                                                     kReferenceId};
  static const std::vector<std::string_view> few_shot{
      kExamples, kExampleCount, kDataFormat, kReferenceId};
  static const std::vector<std::string_view> input{kDataFormat, kReferenceId};
  static const std::vector<std::string_view> generate{kGenerationParams,
                                                      kReferenceId};
  static const std::vector<std::string_view> parser{kParserKind, kParserPattern,
                                                    kReferenceId};
  static const std::vector<std::string_view> concat{kReferenceId};
  switch (kind) {
    case NodeKind::Text: return text;
    case NodeKind::Section: return section;
    case NodeKind::FewShotExamples: return few_shot;
    case NodeKind::InputData: return input;
    case NodeKind::GenerateText: return generate;
    case NodeKind::OutputParser: return parser;
    case NodeKind::Concat: return concat;
  }
  return concat;
}

const std::vector<std::string_view>& required_attributes(NodeKind kind) {
  static const std::vector<std::string_view> text{attr::kContent};
  static const std::vector<std::string_view> section{attr::kTitle};
  static const std::vector<std::string_view> none{};
  switch (kind) {
    case NodeKind::Text: return text;
    case NodeKind::Section: return section;
    default: return none;
  }
}

bool attribute_legal(NodeKind kind, std::string_view name) {
  const auto& legal = legal_attributes(kind);
  return std::find(legal.begin(), legal.end(), name) != legal.end();
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << v.rule << " at node " << v.node << ": " << v.detail << "\n";
  }
  return os.str();
}

// ─── attribute accessors ────────────────────────────────────────────────────

const std::string* attr_string(const Node& node, std::string_view name) {
  auto it = node.attrs.find(std::string(name));
  if (it == node.attrs.end()) return nullptr;
  return std::get_if<std::string>(&it->second);
}

std::optional<std::int64_t> attr_int(const Node& node, std::string_view name) {
  auto it = node.attrs.find(std::string(name));
  if (it == node.attrs.end()) return std::nullopt;
  if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
  return std::nullopt;
}

const ExampleList* attr_example_list(const Node& node) {
  auto it = node.attrs.find(attr::kExamples);
  if (it == node.attrs.end()) return nullptr;
  return std::get_if<ExampleList>(&it->second);
}

std::optional<GenerationParams> attr_generation_params(const Node& node) {
  auto it = node.attrs.find(attr::kGenerationParams);
  if (it == node.attrs.end()) return std::nullopt;
  if (const auto* v = std::get_if<GenerationParams>(&it->second)) return *v;
  return std::nullopt;
}

std::size_t effective_example_count(const Node& node) {
  const ExampleList* stored = attr_example_list(node);
  std::size_t have = stored ? stored->size() : 0;
  auto count = attr_int(node, attr::kExampleCount);
  if (!count) return have;
  if (*count < 0) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(*count), have);
}

// ─── program ────────────────────────────────────────────────────────────────

PromptProgram PromptProgram::build(const NodeTemplate& root) {
  PromptProgram p;
  p.root_ = p.add_subtree(root);
  return p;
}

PromptProgram PromptProgram::from_nodes(std::vector<Node> nodes, NodeId root) {
  PromptProgram p;
  p.nodes_ = std::move(nodes);
  p.root_ = root;
  NodeId max_id = -1;
  for (const auto& n : p.nodes_) max_id = std::max(max_id, n.id);
  p.next_id_ = max_id + 1;
  return p;
}

NodeId PromptProgram::add_subtree(const NodeTemplate& t) {
  NodeId id = next_id_++;
  nodes_.push_back(Node{id, t.kind, t.attrs, {}});
  std::vector<NodeId> children;
  children.reserve(t.children.size());
  for (const auto& c : t.children) children.push_back(add_subtree(c));
  // nodes_ may have reallocated while recursing; look the node up again
  node_ref(id).children = std::move(children);
  return id;
}

NodeId PromptProgram::copy_subtree(const Node& source, const PromptProgram& from) {
  NodeId id = next_id_++;
  nodes_.push_back(Node{id, source.kind, source.attrs, {}});
  std::vector<NodeId> children;
  children.reserve(source.children.size());
  for (NodeId c : source.children) {
    const Node* child = from.find(c);
    if (child) children.push_back(copy_subtree(*child, from));
  }
  node_ref(id).children = std::move(children);
  return id;
}

const Node* PromptProgram::find(NodeId id) const {
  for (const auto& n : nodes_) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

Node& PromptProgram::node_ref(NodeId id) {
  for (auto& n : nodes_) {
    if (n.id == id) return n;
  }
  throw std::out_of_range("no node with id " + std::to_string(id));
}

const Node& PromptProgram::at(NodeId id) const {
  const Node* n = find(id);
  if (!n) throw std::out_of_range("no node with id " + std::to_string(id));
  return *n;
}

NodeId PromptProgram::parent_of(NodeId id) const {
  for (const auto& n : nodes_) {
    for (NodeId c : n.children) {
      if (c == id) return n.id;
    }
  }
  return kNoNode;
}

std::vector<NodeId> PromptProgram::preorder() const {
  std::vector<NodeId> order;
  if (root_ == kNoNode) return order;
  std::vector<NodeId> stack{root_};
  std::unordered_set<NodeId> seen;  // guards traversal of malformed graphs
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    const Node* n = find(id);
    if (!n) continue;
    order.push_back(id);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) {
      stack.push_back(*it);
    }
  }
  return order;
}

std::vector<NodeId> PromptProgram::subtree_ids(NodeId id) const {
  std::vector<NodeId> order;
  std::vector<NodeId> stack{id};
  std::unordered_set<NodeId> seen;
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    const Node* n = find(cur);
    if (!n) continue;
    order.push_back(cur);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) {
      stack.push_back(*it);
    }
  }
  return order;
}

bool PromptProgram::matches(NodeId id, const NodeSelector& sel) const {
  const Node* n = find(id);
  if (!n) return false;
  if (!sel.kinds.empty() &&
      std::find(sel.kinds.begin(), sel.kinds.end(), n->kind) == sel.kinds.end()) {
    return false;
  }
  if (sel.reference_id) {
    const std::string* ref = attr_string(*n, attr::kReferenceId);
    if (!ref || *ref != *sel.reference_id) return false;
  }
  if (sel.has_attribute && !n->attrs.count(*sel.has_attribute)) return false;
  if (sel.ancestor_kind) {
    bool found = false;
    for (NodeId p = parent_of(id); p != kNoNode; p = parent_of(p)) {
      if (at(p).kind == *sel.ancestor_kind) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

std::vector<NodeId> PromptProgram::select(const NodeSelector& sel) const {
  std::vector<NodeId> out;
  for (NodeId id : preorder()) {
    if (matches(id, sel)) out.push_back(id);
  }
  return out;
}

// ─── validation ─────────────────────────────────────────────────────────────

namespace {

void check_attr_value(const Node& n, const std::string& name,
                      const AttrValue& value, std::vector<Violation>& out) {
  using namespace attr;
  auto bad = [&](const std::string& detail) {
    out.push_back({n.id, "bad-attribute-value", name + ": " + detail});
  };
  auto expect_string_in = [&](const std::vector<std::string>& domain) {
    const auto* s = std::get_if<std::string>(&value);
    if (!s) {
      bad("expected a string");
      return;
    }
    if (std::find(domain.begin(), domain.end(), *s) == domain.end()) {
      bad("'" + *s + "' is not a member of the allowed set");
    }
  };
  if (name == kContent || name == kTitle || name == kReferenceId ||
      name == kParserPattern) {
    if (!std::holds_alternative<std::string>(value)) bad("expected a string");
  } else if (name == kDataFormat) {
    expect_string_in(formats::data_formats());
  } else if (name == kSectionFormat) {
    expect_string_in(formats::section_formats());
  } else if (name == kParserKind) {
    expect_string_in(formats::parser_kinds());
  } else if (name == kExampleCount) {
    const auto* v = std::get_if<std::int64_t>(&value);
    if (!v) {
      bad("expected an integer");
    } else if (*v < 0) {
      bad("must be non-negative");
    } else {
      const ExampleList* stored = attr_example_list(n);
      std::int64_t have = stored ? static_cast<std::int64_t>(stored->size()) : 0;
      if (*v > have) {
        bad("exceeds stored examples (" + std::to_string(have) + ")");
      }
    }
  } else if (name == kExamples) {
    if (!std::holds_alternative<ExampleList>(value)) {
      bad("expected a list of input/output pairs");
    }
  } else if (name == kGenerationParams) {
    const auto* p = std::get_if<GenerationParams>(&value);
    if (!p) {
      bad("expected generation parameters");
    } else {
      if (!std::isfinite(p->temperature) || p->temperature < 0.0) {
        bad("temperature must be finite and non-negative");
      }
      if (p->max_output_tokens <= 0) bad("max-output-tokens must be positive");
    }
  }
}

}  // namespace

ValidationReport PromptProgram::validate() const {
  ValidationReport report;
  auto& out = report.violations;

  if (root_ == kNoNode || !find(root_)) {
    out.push_back({root_, "root-missing", "program has no root node"});
    return report;
  }

  std::unordered_set<NodeId> ids;
  for (const auto& n : nodes_) {
    if (n.id < 0) out.push_back({n.id, "bad-id", "node ids must be >= 0"});
    if (!ids.insert(n.id).second) {
      out.push_back({n.id, "duplicate-id", "node id used more than once"});
    }
  }

  std::unordered_map<NodeId, int> indegree;
  for (const auto& n : nodes_) {
    std::unordered_set<NodeId> in_this_parent;
    for (NodeId c : n.children) {
      if (!find(c)) {
        out.push_back({n.id, "dangling-edge",
                       "child " + std::to_string(c) + " does not exist"});
        continue;
      }
      ++indegree[c];
      if (!in_this_parent.insert(c).second) {
        out.push_back({n.id, "multi-parent",
                       describe(c) + " appears twice under one parent"});
      }
    }
  }
  for (const auto& [id, deg] : indegree) {
    if (deg > 1) {
      out.push_back({id, "multi-parent", "node has more than one parent"});
    }
  }
  if (indegree.count(root_)) {
    out.push_back({root_, "cycle", "root has an incoming edge"});
  }

  // Cycle detection: DFS with colors over existing edges.
  {
    std::unordered_map<NodeId, int> color;  // 0 white, 1 gray, 2 black
    struct Frame { NodeId id; std::size_t next; };
    for (const auto& start : nodes_) {
      if (color[start.id]) continue;
      std::vector<Frame> stack{{start.id, 0}};
      color[start.id] = 1;
      while (!stack.empty()) {
        Frame& f = stack.back();
        const Node* n = find(f.id);
        if (!n || f.next >= n->children.size()) {
          color[f.id] = 2;
          stack.pop_back();
          continue;
        }
        NodeId c = n->children[f.next++];
        if (!find(c)) continue;
        if (color[c] == 1) {
          out.push_back({c, "cycle", "edge from " + describe(f.id) +
                                         " closes a cycle"});
        } else if (color[c] == 0) {
          color[c] = 1;
          stack.push_back({c, 0});
        }
      }
    }
  }

  {
    auto reach = preorder();
    std::unordered_set<NodeId> reached(reach.begin(), reach.end());
    for (const auto& n : nodes_) {
      if (!reached.count(n.id)) {
        out.push_back({n.id, "unreachable", "not reachable from the root"});
      }
    }
  }

  for (const auto& n : nodes_) {
    std::size_t arity = n.children.size();
    switch (n.kind) {
      case NodeKind::GenerateText:
      case NodeKind::OutputParser:
        if (arity != 1) {
          out.push_back({n.id, "child-count",
                         std::string(to_string(n.kind)) +
                             " requires exactly one child, has " +
                             std::to_string(arity)});
        }
        break;
      case NodeKind::Text:
      case NodeKind::FewShotExamples:
      case NodeKind::InputData:
        if (arity != 0) {
          out.push_back({n.id, "child-count",
                         std::string(to_string(n.kind)) + " is a leaf, has " +
                             std::to_string(arity) + " children"});
        }
        break;
      case NodeKind::Section:
      case NodeKind::Concat:
        break;
    }

    for (const auto& [name, value] : n.attrs) {
      if (!attribute_legal(n.kind, name)) {
        out.push_back({n.id, "illegal-attribute",
                       "'" + name + "' is not legal on " +
                           std::string(to_string(n.kind))});
        continue;
      }
      check_attr_value(n, name, value, out);
    }
    for (std::string_view req : required_attributes(n.kind)) {
      if (!n.attrs.count(std::string(req))) {
        out.push_back({n.id, "missing-attribute",
                       std::string(to_string(n.kind)) + " requires '" +
                           std::string(req) + "'"});
      }
    }
    if (n.kind == NodeKind::OutputParser) {
      const std::string* kind = attr_string(n, attr::kParserKind);
      bool needs_pattern =
          kind && (*kind == formats::kRegexExtract || *kind == formats::kJsonField);
      if (needs_pattern && !n.attrs.count(attr::kParserPattern)) {
        out.push_back({n.id, "missing-attribute",
                       "parser-kind '" + *kind + "' requires parser-pattern"});
      }
    }
  }

  return report;
}

// ─── edits ──────────────────────────────────────────────────────────────────

void PromptProgram::remove_subtree(NodeId id) {
  auto doomed_ids = subtree_ids(id);
  std::unordered_set<NodeId> doomed(doomed_ids.begin(), doomed_ids.end());
  for (auto& n : nodes_) {
    auto& ch = n.children;
    ch.erase(std::remove_if(ch.begin(), ch.end(),
                            [&](NodeId c) { return doomed.count(c) > 0; }),
             ch.end());
  }
  nodes_.erase(std::remove_if(nodes_.begin(), nodes_.end(),
                              [&](const Node& n) { return doomed.count(n.id); }),
               nodes_.end());
}

void PromptProgram::validate_or_throw_edit() const {
  ValidationReport report = validate();
  if (!report.ok()) {
    throw EditError(EditFault::InvalidResult,
                    "edit would produce an invalid program:\n" + report.to_string());
  }
}

PromptProgram PromptProgram::apply_edit(const Edit& edit) const {
  PromptProgram next = *this;

  if (const auto* del = std::get_if<DeleteNode>(&edit)) {
    if (!next.find(del->target)) {
      throw EditError(EditFault::TargetMissing,
                      describe(del->target) + " does not exist");
    }
    if (del->target == next.root_) {
      throw EditError(EditFault::WouldOrphanRoot, "cannot delete the root");
    }
    next.remove_subtree(del->target);
  } else if (const auto* rep = std::get_if<ReplaceAttribute>(&edit)) {
    const Node* target = next.find(rep->target);
    if (!target) {
      throw EditError(EditFault::TargetMissing,
                      describe(rep->target) + " does not exist");
    }
    if (!attribute_legal(target->kind, rep->name)) {
      throw EditError(EditFault::IllegalAttribute,
                      "'" + rep->name + "' is not legal on " +
                          std::string(to_string(target->kind)));
    }
    next.node_ref(rep->target).attrs[rep->name] = rep->value;
  } else if (const auto* ins = std::get_if<InsertChild>(&edit)) {
    const Node* parent = next.find(ins->parent);
    if (!parent) {
      throw EditError(EditFault::TargetMissing,
                      describe(ins->parent) + " does not exist");
    }
    if (ins->position > parent->children.size()) {
      throw EditError(EditFault::InvalidResult,
                      "insert position " + std::to_string(ins->position) +
                          " is out of range");
    }
    NodeId new_id = next.add_subtree(ins->subtree);
    auto& ch = next.node_ref(ins->parent).children;
    ch.insert(ch.begin() + static_cast<std::ptrdiff_t>(ins->position), new_id);
  } else if (const auto* dup = std::get_if<DuplicateSubtree>(&edit)) {
    const Node* source = next.find(dup->source);
    if (!source) {
      throw EditError(EditFault::TargetMissing,
                      describe(dup->source) + " does not exist");
    }
    const Node* parent = next.find(dup->new_parent);
    if (!parent) {
      throw EditError(EditFault::TargetMissing,
                      describe(dup->new_parent) + " does not exist");
    }
    if (dup->position > parent->children.size()) {
      throw EditError(EditFault::InvalidResult,
                      "insert position " + std::to_string(dup->position) +
                          " is out of range");
    }
    Node source_copy = *source;  // copy_subtree may invalidate the pointer
    NodeId new_id = next.copy_subtree(source_copy, next);
    auto& ch = next.node_ref(dup->new_parent).children;
    ch.insert(ch.begin() + static_cast<std::ptrdiff_t>(dup->position), new_id);
  }

  next.validate_or_throw_edit();
  return next;
}

bool PromptProgram::operator==(const PromptProgram& other) const {
  auto a = preorder();
  auto b = other.preorder();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
    if (!(at(a[i]) == other.at(b[i]))) return false;
  }
  return root_ == other.root_;
}

// ─── template builders ──────────────────────────────────────────────────────

namespace nt {

NodeTemplate text(std::string content, std::string reference_id) {
  NodeTemplate t;
  t.kind = NodeKind::Text;
  t.attrs[attr::kContent] = std::move(content);
  if (!reference_id.empty()) t.attrs[attr::kReferenceId] = std::move(reference_id);
  return t;
}

NodeTemplate section(std::string title, std::vector<NodeTemplate> children,
                     std::string section_format) {
  NodeTemplate t;
  t.kind = NodeKind::Section;
  t.attrs[attr::kTitle] = std::move(title);
  if (!section_format.empty()) t.attrs[attr::kSectionFormat] = std::move(section_format);
  t.children = std::move(children);
  return t;
}

NodeTemplate few_shot(ExampleList examples, std::int64_t count,
                      std::string data_format) {
  NodeTemplate t;
  t.kind = NodeKind::FewShotExamples;
  if (count >= 0) t.attrs[attr::kExampleCount] = count;
  t.attrs[attr::kExamples] = std::move(examples);
  if (!data_format.empty()) t.attrs[attr::kDataFormat] = std::move(data_format);
  return t;
}

NodeTemplate input_data(std::string data_format) {
  NodeTemplate t;
  t.kind = NodeKind::InputData;
  if (!data_format.empty()) t.attrs[attr::kDataFormat] = std::move(data_format);
  return t;
}

NodeTemplate generate(NodeTemplate child, GenerationParams params) {
  NodeTemplate t;
  t.kind = NodeKind::GenerateText;
  t.attrs[attr::kGenerationParams] = params;
  t.children.push_back(std::move(child));
  return t;
}

NodeTemplate parser(std::string parser_kind, NodeTemplate child,
                    std::string pattern) {
  NodeTemplate t;
  t.kind = NodeKind::OutputParser;
  t.attrs[attr::kParserKind] = std::move(parser_kind);
  if (!pattern.empty()) t.attrs[attr::kParserPattern] = std::move(pattern);
  t.children.push_back(std::move(child));
  return t;
}

NodeTemplate concat(std::vector<NodeTemplate> children) {
  NodeTemplate t;
  t.kind = NodeKind::Concat;
  t.children = std::move(children);
  return t;
}

}  // namespace nt

}  // namespace spp

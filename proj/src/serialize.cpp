#include "spp/serialize.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace spp {

namespace {

using ordered_json = nlohmann::ordered_json;

std::size_t line_of(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

[[noreturn]] void fail(const std::string& message) {
  throw ParseError(message, 0, 0);
}

void reject_unknown(const ordered_json& obj,
                    const std::vector<std::string_view>& allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) {
      if (it.key() == a) {
        ok = true;
        break;
      }
    }
    if (!ok) fail("unknown field '" + it.key() + "' in " + where);
  }
}

ordered_json attr_to_json(const AttrValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&value)) return *i;
  if (const auto* ex = std::get_if<ExampleList>(&value)) {
    ordered_json arr = ordered_json::array();
    for (const auto& pair : *ex) {
      arr.push_back({{"input", pair.input}, {"output", pair.output}});
    }
    return arr;
  }
  const auto& p = std::get<GenerationParams>(value);
  return {{"temperature", p.temperature},
          {"max-output-tokens", p.max_output_tokens}};
}

AttrValue attr_from_json(const std::string& name, const ordered_json& j) {
  using namespace attr;
  if (name == kExampleCount) {
    if (!j.is_number_integer()) fail("attribute '" + name + "' must be an integer");
    return j.get<std::int64_t>();
  }
  if (name == kExamples) {
    if (!j.is_array()) fail("attribute 'examples' must be an array");
    ExampleList list;
    for (const auto& item : j) {
      if (!item.is_object()) fail("each example must be an object");
      reject_unknown(item, {"input", "output"}, "example");
      if (!item.contains("input") || !item.contains("output")) {
        fail("each example requires 'input' and 'output'");
      }
      if (!item["input"].is_string() || !item["output"].is_string()) {
        fail("example fields must be strings");
      }
      list.push_back({item["input"].get<std::string>(),
                      item["output"].get<std::string>()});
    }
    return list;
  }
  if (name == kGenerationParams) {
    if (!j.is_object()) fail("generation-params must be an object");
    reject_unknown(j, {"temperature", "max-output-tokens"}, "generation-params");
    GenerationParams p;
    if (j.contains("temperature")) {
      if (!j["temperature"].is_number()) fail("temperature must be a number");
      p.temperature = j["temperature"].get<double>();
    }
    if (j.contains("max-output-tokens")) {
      if (!j["max-output-tokens"].is_number_integer()) {
        fail("max-output-tokens must be an integer");
      }
      p.max_output_tokens = j["max-output-tokens"].get<std::int64_t>();
    }
    return p;
  }
  if (!j.is_string()) fail("attribute '" + name + "' must be a string");
  return j.get<std::string>();
}

bool known_attribute(const std::string& name) {
  using namespace attr;
  for (std::string_view a :
       {kContent, kTitle, kReferenceId, kDataFormat, kSectionFormat,
        kExampleCount, kExamples, kParserKind, kParserPattern,
        kGenerationParams}) {
    if (name == a) return true;
  }
  return false;
}

ordered_json node_to_json(const PromptProgram& p, NodeId id) {
  const Node& n = p.at(id);
  ordered_json j;
  j["id"] = n.id;
  j["kind"] = std::string(to_string(n.kind));
  ordered_json attrs = ordered_json::object();
  for (const auto& [name, value] : n.attrs) attrs[name] = attr_to_json(value);
  j["attrs"] = std::move(attrs);
  ordered_json children = ordered_json::array();
  for (NodeId c : n.children) children.push_back(node_to_json(p, c));
  j["children"] = std::move(children);
  return j;
}

void node_from_json(const ordered_json& j, std::vector<Node>& out,
                    NodeId& id_out) {
  if (!j.is_object()) fail("node must be an object");
  reject_unknown(j, {"id", "kind", "attrs", "children"}, "node");
  if (!j.contains("id") || !j["id"].is_number_integer()) {
    fail("node requires an integer 'id'");
  }
  if (!j.contains("kind") || !j["kind"].is_string()) {
    fail("node requires a string 'kind'");
  }
  Node n;
  n.id = j["id"].get<std::int64_t>();
  auto kind = node_kind_from(j["kind"].get<std::string>());
  if (!kind) fail("unknown node kind '" + j["kind"].get<std::string>() + "'");
  n.kind = *kind;
  if (j.contains("attrs")) {
    if (!j["attrs"].is_object()) fail("'attrs' must be an object");
    for (auto it = j["attrs"].begin(); it != j["attrs"].end(); ++it) {
      if (!known_attribute(it.key())) {
        fail("unknown attribute '" + it.key() + "'");
      }
      n.attrs[it.key()] = attr_from_json(it.key(), it.value());
    }
  }
  id_out = n.id;
  std::size_t slot = out.size();
  out.push_back(std::move(n));
  if (j.contains("children")) {
    if (!j["children"].is_array()) fail("'children' must be an array");
    for (const auto& cj : j["children"]) {
      NodeId child_id = kNoNode;
      node_from_json(cj, out, child_id);
      out[slot].children.push_back(child_id);
    }
  }
}

}  // namespace

std::string serialize(const PromptProgram& program) {
  ordered_json doc;
  doc["root"] = node_to_json(program, program.root());
  return doc.dump(2) + "\n";
}

PromptProgram deserialize(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError(e.what(), offset, line_of(text, offset));
  }
  if (!doc.is_object()) fail("top level must be an object");
  reject_unknown(doc, {"root"}, "program");
  if (!doc.contains("root")) fail("program requires a 'root' node");

  std::vector<Node> nodes;
  NodeId root_id = kNoNode;
  node_from_json(doc["root"], nodes, root_id);
  PromptProgram p = PromptProgram::from_nodes(std::move(nodes), root_id);

  ValidationReport report = p.validate();
  if (!report.ok()) throw ValidationError(std::move(report));
  return p;
}

PromptProgram load_program_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open program file: " + path, 0, 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

void save_program_file(const PromptProgram& program, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write program file: " + path);
  out << serialize(program);
}

}  // namespace spp

#include "octo/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>
#include <set>
#include <sstream>

namespace octo::assets {
extern const std::string kSystemTemplate;
extern const std::string kResponseFormat;
}  // namespace octo::assets

namespace octo {

namespace {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty() && cur.back() == '\r') cur.pop_back();
  lines.push_back(std::move(cur));
  return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string quoted_list(const std::vector<std::string>& items) {
  std::string s = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ", ";
    s += "'" + items[i] + "'";
  }
  return s + "]";
}

std::string fmt2(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", d);
  return buf;
}

// States are listed last-to-first relative to the vocabulary, as the simulator prints them.
std::vector<std::pair<std::string, bool>> state_entries(std::uint8_t caps, std::uint8_t states) {
  std::vector<std::pair<std::string, bool>> out;
  for (std::size_t i = kUnaryStateNames.size(); i-- > 0;) {
    const auto s = static_cast<UnaryState>(i);
    if (caps & bit(s)) out.emplace_back(std::string(name(s)), (states & bit(s)) != 0);
  }
  return out;
}

std::vector<RelationTriple> listed_relations(const WorldState& w, const std::vector<std::string>& listed) {
  const std::set<std::string, std::less<>> in(listed.begin(), listed.end());
  std::vector<RelationTriple> out;
  for (const auto& r : w.relations)
    if (in.contains(r.subject) && in.contains(r.object)) out.push_back(r);
  for (const auto& id : listed) {
    const auto anc = w.inside_ancestors(id);
    for (std::size_t k = 1; k < anc.size(); ++k) {
      RelationTriple t{id, Relation::inside, anc[k]};
      if (in.contains(anc[k]) && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    }
  }
  return out;
}

[[noreturn]] void bad_message(const std::string& what) { throw Error("malformed environment message: " + what); }

// Cursor over one line of the object/relation listings.
struct Cursor {
  std::string_view s;
  std::size_t i = 0;

  bool done() const { return i >= s.size(); }
  bool peek(std::string_view lit) const { return s.substr(i, lit.size()) == lit; }
  void expect(std::string_view lit) {
    if (!peek(lit)) bad_message("expected '" + std::string(lit) + "' at column " + std::to_string(i));
    i += lit.size();
  }
  std::string until(char stop) {
    const auto j = s.find(stop, i);
    if (j == std::string_view::npos) bad_message("unterminated field");
    std::string out(s.substr(i, j - i));
    i = j;
    return out;
  }
  std::string quoted() {
    expect("'");
    auto out = until('\'');
    ++i;
    return out;
  }
};

std::vector<ObservedObjectEntry> parse_objects(std::string_view body) {
  std::vector<ObservedObjectEntry> out;
  if (body == "None") return out;
  Cursor c{body};
  while (!c.done()) {
    ObservedObjectEntry e;
    c.expect("(");
    e.id = c.until(',');
    c.expect(", (");
    while (!c.peek(")")) {
      c.expect("[");
      auto state = c.quoted();
      c.expect(", ");
      const auto v = c.until(']');
      if (v != "0" && v != "1") bad_message("state value must be 0 or 1");
      c.expect("]");
      if (!parse_unary_state(state)) throw UnknownState("unknown state '" + state + "' in environment message");
      e.states.emplace_back(std::move(state), v == "1");
      if (c.peek(", ")) c.expect(", ");
      else if (c.peek(",")) c.expect(",");
    }
    c.expect("), ");
    const auto d = c.until(')');
    try {
      std::size_t used = 0;
      e.distance = std::stod(d, &used);
      if (used != d.size()) bad_message("bad distance " + d);
    } catch (const std::logic_error&) {
      bad_message("bad distance " + d);
    }
    c.expect(")");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<RelationTriple> parse_relations(std::string_view body) {
  std::vector<RelationTriple> out;
  Cursor c{body};
  c.expect("[");
  while (!c.peek("]")) {
    c.expect("(");
    RelationTriple t;
    t.subject = c.quoted();
    c.expect(", ");
    const auto rel = c.quoted();
    const auto r = parse_relation(rel);
    if (!r) throw UnknownRelation("unknown relation '" + rel + "' in environment message");
    t.relation = *r;
    c.expect(", ");
    t.object = c.quoted();
    c.expect(")");
    out.push_back(std::move(t));
    if (c.peek(", ")) c.expect(", ");
  }
  c.expect("]");
  if (!c.done()) bad_message("trailing text after relations");
  return out;
}

std::vector<std::string> parse_inventory_list(std::string_view body) {
  std::vector<std::string> out;
  Cursor c{body};
  c.expect("[");
  while (!c.peek("]")) {
    out.push_back(c.quoted());
    if (c.peek(", ")) c.expect(", ");
  }
  c.expect("]");
  return out;
}

std::string after_prefix(const std::string& line, std::string_view prefix) {
  if (!starts_with(line, prefix)) bad_message("expected line starting with '" + std::string(prefix) + "'");
  return line.substr(prefix.size());
}

}  // namespace

EnvironmentMessage build_env_message(const WorldState& world, const EpisodeMemory& memory, MessageView view) {
  EnvironmentMessage msg;
  std::vector<std::string> listed;
  if (view == MessageView::observed) {
    for (const auto& v : merged_observation(observe(world))) {
      if (world.in_inventory(v.id)) continue;
      msg.observed_objects.push_back({v.id, state_entries(v.capabilities, v.states), v.distance});
      listed.push_back(v.id);
    }
  } else {
    for (const auto& o : world.objects) {
      if (world.in_inventory(o.id)) continue;
      msg.observed_objects.push_back({o.id, state_entries(o.capabilities, o.states), distance(world, kAgentName, o.id)});
      listed.push_back(o.id);
    }
  }
  msg.observed_relations = listed_relations(world, listed);
  if (!world.agent.inventory.empty()) msg.inventory = world.agent.inventory;
  msg.task_goal = memory.task_goal;
  msg.original_subtasks = memory.original_subtasks;
  msg.previous_action_code = memory.previous_action_code;
  msg.execution_error = memory.execution_error;
  return msg;
}

std::string render_env_message(const EnvironmentMessage& msg) {
  std::string out = "Observed Objects: ";
  if (msg.observed_objects.empty()) out += "None";
  for (const auto& e : msg.observed_objects) {
    std::vector<std::string> states;
    for (const auto& [s, v] : e.states) states.push_back("['" + s + "', " + (v ? "1" : "0") + "]");
    std::string tuple = "(" + join(states, ", ") + (states.size() == 1 ? ",)" : ")");
    out += "(" + e.id + ", " + tuple + ", " + fmt2(e.distance) + ")";
  }
  out += "\nObserved Relations: [";
  for (std::size_t i = 0; i < msg.observed_relations.size(); ++i) {
    const auto& r = msg.observed_relations[i];
    if (i) out += ", ";
    out += "('" + r.subject + "', '" + std::string(name(r.relation)) + "', '" + r.object + "')";
  }
  out += "]\nInventory: ";
  out += msg.inventory && !msg.inventory->empty() ? quoted_list(*msg.inventory) : "None";
  out += "\nTask Goal: " + msg.task_goal;
  out += "\nOriginal Subtasks:";
  if (!msg.original_subtasks || msg.original_subtasks->empty()) {
    out += " None";
  } else {
    for (std::size_t i = 0; i < msg.original_subtasks->size(); ++i)
      out += "\n(" + std::to_string(i + 1) + ") " + (*msg.original_subtasks)[i];
  }
  out += "\nPrevious Action Code:";
  if (!msg.previous_action_code || trim(*msg.previous_action_code).empty()) {
    out += " No code";
  } else {
    std::string code = *msg.previous_action_code;
    while (!code.empty() && (code.back() == '\n' || code.back() == ' ')) code.pop_back();
    out += "\n" + code;
  }
  std::string err = msg.execution_error.value_or("No error");
  std::replace(err.begin(), err.end(), '\n', ' ');
  if (trim(err).empty()) err = "No error";
  out += "\nExecution error: " + err;
  out += "\n";
  out += kEnvMessageInstruction;
  return out;
}

std::string render_env_message(const WorldState& world, const EpisodeMemory& memory, MessageView view) {
  return render_env_message(build_env_message(world, memory, view));
}

EnvironmentMessage parse_env_message(std::string_view text) {
  auto lines = split_lines(text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 8) bad_message("too few lines");
  EnvironmentMessage msg;
  std::size_t i = 0;
  msg.observed_objects = parse_objects(after_prefix(lines[i++], "Observed Objects: "));
  msg.observed_relations = parse_relations(after_prefix(lines[i++], "Observed Relations: "));
  const auto inv = after_prefix(lines[i++], "Inventory: ");
  if (inv != "None") msg.inventory = parse_inventory_list(inv);
  msg.task_goal = after_prefix(lines[i++], "Task Goal: ");

  const auto subtasks_head = after_prefix(lines[i++], "Original Subtasks:");
  if (subtasks_head == " None") {
    // nothing
  } else if (subtasks_head.empty()) {
    static const std::regex item(R"(^\((\d+)\) (.*)$)");
    std::vector<std::string> items;
    while (i < lines.size() && !starts_with(lines[i], "Previous Action Code:")) {
      std::smatch m;
      if (!std::regex_match(lines[i], m, item) || std::stoul(m[1]) != items.size() + 1)
        bad_message("bad subtask line '" + lines[i] + "'");
      items.push_back(m[2]);
      ++i;
    }
    if (items.empty()) bad_message("empty subtask list");
    msg.original_subtasks = std::move(items);
  } else {
    bad_message("bad Original Subtasks line");
  }

  if (i >= lines.size()) bad_message("missing Previous Action Code");
  const auto code_head = after_prefix(lines[i++], "Previous Action Code:");
  if (code_head == " No code") {
    // nothing
  } else if (code_head.empty()) {
    std::vector<std::string> code;
    while (i < lines.size() && !starts_with(lines[i], "Execution error: ")) code.push_back(lines[i++]);
    if (code.empty()) bad_message("empty previous code");
    msg.previous_action_code = join(code, "\n");
  } else {
    bad_message("bad Previous Action Code line");
  }

  if (i >= lines.size()) bad_message("missing Execution error");
  const auto err = after_prefix(lines[i++], "Execution error: ");
  if (err != "No error") msg.execution_error = err;
  if (i + 1 != lines.size() || lines[i] != kEnvMessageInstruction) bad_message("missing or altered closing instruction");
  return msg;
}

const std::string& system_message() {
  static const std::string msg = [] {
    std::string s = assets::kSystemTemplate;
    const std::string key = "{response_format}";
    const auto pos = s.find(key);
    if (pos != std::string::npos) s.replace(pos, key.size(), assets::kResponseFormat);
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
  }();
  return msg;
}

const std::string& system_message_hash() {
  static const std::string h = hex64(fnv1a64(system_message()));
  return h;
}

MalformedResponse::MalformedResponse(std::string section, std::string reason)
    : Error("malformed teacher response [" + section + "]: " + reason),
      section_(std::move(section)),
      reason_(std::move(reason)) {}

namespace {

constexpr std::array<std::string_view, 4> kSections = {"Explain", "Subtasks", "Code", "Target States"};

std::string strip_slash_comment(std::string_view line) {
  const auto p = line.find("//");
  return trim(p == std::string_view::npos ? line : line.substr(0, p));
}

// Returns the section index and inline remainder when `line` is a section header.
std::optional<std::pair<std::size_t, std::string>> match_header(const std::string& line) {
  std::string t = trim(line);
  while (!t.empty() && (t.front() == '#' || t.front() == '*')) t.erase(t.begin());
  t = trim(t);
  const std::string lower = to_lower(t);
  for (std::size_t k = 0; k < kSections.size(); ++k) {
    const std::string h = to_lower(kSections[k]);
    if (!starts_with(lower, h)) continue;
    std::string rest = trim(std::string_view(t).substr(h.size()));
    if (!rest.empty() && rest.front() == '(') {
      const auto close = rest.find(')');
      if (close == std::string::npos) continue;
      rest = trim(std::string_view(rest).substr(close + 1));
    }
    while (!rest.empty() && rest.front() == '*') rest.erase(rest.begin());
    if (rest.empty()) return std::pair{k, std::string()};
    if (rest.front() != ':') continue;
    rest.erase(rest.begin());
    while (!rest.empty() && rest.front() == '*') rest.erase(rest.begin());
    return std::pair{k, trim(rest)};
  }
  return std::nullopt;
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return trim(s);
}

std::vector<std::string> split_fields(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(strip_quotes(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(strip_quotes(cur));
  return out;
}

bool parse_bool_field(const std::string& s) {
  const auto l = to_lower(s);
  if (l == "1" || l == "true") return true;
  if (l == "0" || l == "false") return false;
  throw MalformedResponse("Target States", "value must be 0 or 1, got '" + s + "'");
}

std::string marker_letters(std::size_t i) {
  std::string s;
  ++i;
  while (i > 0) {
    --i;
    s.insert(s.begin(), static_cast<char>('a' + i % 26));
    i /= 26;
  }
  return s;
}

std::string trim_code_block(const std::vector<std::string>& lines) {
  std::size_t b = 0, e = lines.size();
  while (b < e && trim(lines[b]).empty()) ++b;
  while (e > b && trim(lines[e - 1]).empty()) --e;
  std::vector<std::string> kept(lines.begin() + static_cast<std::ptrdiff_t>(b), lines.begin() + static_cast<std::ptrdiff_t>(e));
  for (auto& l : kept)
    while (!l.empty() && (l.back() == ' ' || l.back() == '\t')) l.pop_back();
  return join(kept, "\n");
}

}  // namespace

TargetCondition parse_condition_line(std::string_view line_in) {
  static const std::regex marker(R"(^\s*(\([a-z]+\)|\(\d+\)|-|\*)\s*)");
  std::string line = strip_slash_comment(line_in);
  line = std::regex_replace(line, marker, "", std::regex_constants::format_first_only);
  line = trim(line);
  if (line.size() >= 2 && ((line.front() == '[' && line.back() == ']') || (line.front() == '(' && line.back() == ')')))
    line = line.substr(1, line.size() - 2);
  const auto f = split_fields(line);
  TargetCondition c;
  if (f.size() == 3) {
    if (!parse_unary_state(f[1])) throw UnknownState("unknown unary state '" + f[1] + "' in target states");
    c.format = TargetCondition::Format::unary;
    c.subject = f[0];
    c.state_or_relation = f[1];
    c.value = parse_bool_field(f[2]);
  } else if (f.size() == 4) {
    if (!parse_relation(f[1])) throw UnknownRelation("unknown relation '" + f[1] + "' in target states");
    c.format = TargetCondition::Format::binary;
    c.subject = f[0];
    c.state_or_relation = f[1];
    c.object = f[2];
    c.value = parse_bool_field(f[3]);
  } else {
    throw MalformedResponse("Target States", "condition needs 3 or 4 fields: '" + std::string(line_in) + "'");
  }
  if (c.subject.empty() || (c.object && c.object->empty()))
    throw MalformedResponse("Target States", "empty object name in '" + std::string(line_in) + "'");
  return c;
}

TeacherResponse parse_teacher_response(std::string_view text) {
  const auto lines = split_lines(text);
  std::array<std::vector<std::string>, 4> body;
  std::array<bool, 4> seen{};
  std::optional<std::size_t> current;

  for (const auto& line : lines) {
    const auto h = match_header(line);
    const bool in_code = current && *current == 2;
    const bool in_targets = current && *current == 3;
    if (h && !in_targets && (!in_code || h->first == 3)) {
      const std::size_t k = h->first;
      const std::size_t expected = current ? *current + 1 : 0;
      if (k < expected || seen[k]) throw MalformedResponse(std::string(kSections[k]), "section repeated or out of order");
      if (k > expected) throw MalformedResponse(std::string(kSections[expected]), "missing section");
      seen[k] = true;
      current = k;
      if (!h->second.empty()) body[k].push_back(h->second);
      continue;
    }
    if (current) body[*current].push_back(line);
  }
  for (std::size_t k = 0; k < kSections.size(); ++k)
    if (!seen[k]) throw MalformedResponse(std::string(kSections[k]), "missing section");

  TeacherResponse r;
  r.explain = trim_code_block(body[0]);

  static const std::regex numbered(R"(^\s*(?:\((\d+)\)|(\d+)[.)])\s*(.*)$)");
  for (const auto& l : body[1]) {
    const auto t = trim(l);
    if (t.empty() || starts_with(t, "//") || t == "...") continue;
    std::smatch m;
    if (std::regex_match(t, m, numbered)) {
      const auto item = trim(m[3].str());
      if (!item.empty() && item != "...") r.subtasks.push_back(item);
    }
  }
  if (r.subtasks.empty()) throw MalformedResponse("Subtasks", "no numbered subtasks");

  std::vector<std::string> code_lines;
  std::optional<std::size_t> fence;
  for (std::size_t i = 0; i < body[2].size(); ++i)
    if (starts_with(trim(body[2][i]), "```")) {
      fence = i;
      break;
    }
  if (fence) {
    std::size_t i = *fence + 1;
    for (; i < body[2].size() && !starts_with(trim(body[2][i]), "```"); ++i) code_lines.push_back(body[2][i]);
    if (i == body[2].size()) throw MalformedResponse("Code", "unterminated code fence");
  } else {
    code_lines = body[2];
  }
  r.code = trim_code_block(code_lines);
  if (r.code.empty()) throw MalformedResponse("Code", "empty code section");

  static const std::regex inv_line(R"(^(?:\(\d+\)\s*)?Inventory[^:]*:\s*(.*)$)", std::regex::icase);
  static const std::regex info_line(R"(^(?:\(\d+\)\s*)?Object Information[^:]*:\s*(.*)$)", std::regex::icase);
  for (const auto& l : body[3]) {
    const auto t = trim(l);
    std::smatch m;
    if (std::regex_match(t, m, inv_line)) {
      std::string v = strip_slash_comment(m[1].str());
      if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
      if (v.empty() || v == "None" || v == "...") continue;
      for (auto& item : split_fields(v))
        if (!item.empty() && item != "None") r.target_states.inventory.push_back(item);
      continue;
    }
    std::string rest = t;
    if (std::regex_match(t, m, info_line)) rest = m[1].str();
    const auto content = strip_slash_comment(rest);
    if (content.empty() || content == "..." || content == "None") continue;
    static const std::regex bare_marker(R"(^\([a-z]+\)\s*(\.\.\.)?$)");
    if (std::regex_match(content, bare_marker)) continue;
    r.target_states.conditions.push_back(parse_condition_line(content));
  }
  return r;
}

std::string render_teacher_response(const TeacherResponse& r) {
  std::ostringstream out;
  out << "Explain:\n" << r.explain << "\n\nSubtasks:\n";
  for (std::size_t i = 0; i < r.subtasks.size(); ++i) out << "(" << i + 1 << ") " << r.subtasks[i] << "\n";
  out << "\nCode:\n" << r.code << "\n\nTarget States:\n(1) Inventory: ";
  out << (r.target_states.inventory.empty() ? "None" : join(r.target_states.inventory, ", "));
  out << "\n(2) Object Information:";
  for (std::size_t i = 0; i < r.target_states.conditions.size(); ++i)
    out << "\n(" << marker_letters(i) << ") " << render_condition(r.target_states.conditions[i]);
  return out.str();
}

}  // namespace octo

#include "octo/script.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

namespace octo {

std::string_view name(ParseErrorKind kind) {
  static constexpr std::array<std::string_view, 5> kNames = {"BadHeader", "UnknownFunction", "BadArity", "BadToken",
                                                             "DisallowedConstruct"};
  return kNames[static_cast<std::size_t>(kind)];
}

ParseError::ParseError(int line, ParseErrorKind kind, const std::string& message)
    : Error(std::string(name(kind)) + " at line " + std::to_string(line) + ": " + message), line_(line), kind_(kind) {}

std::size_t Script::executable_count() const {
  return static_cast<std::size_t>(
      std::count_if(statements.begin(), statements.end(), [](const Stmt& s) { return s.type != Stmt::Type::comment; }));
}

namespace {

const std::set<std::string, std::less<>> kKeywords = {
    "for",  "while", "if",     "elif",   "else",  "import", "from",     "def",    "return", "with", "try",
    "except", "finally", "class", "lambda", "pass", "break", "continue", "global", "yield", "async", "await",
    "del",  "assert", "raise", "nonlocal"};

bool is_reserved(std::string_view id) { return id == "env" || id == "robot" || id == "camera"; }

struct Token {
  enum class Kind { ident, string, lparen, rparen, comma, equals, other };
  Kind kind;
  std::string text;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string strip_inline_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return trim(line.substr(0, i));
    }
  }
  return trim(line);
}

std::vector<Token> lex(std::string_view s, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < s.size() && is_ident_char(s[j])) ++j;
      out.push_back({Token::Kind::ident, std::string(s.substr(i, j - i))});
      i = j;
    } else if (c == '"' || c == '\'') {
      std::size_t j = i + 1;
      std::string value;
      while (j < s.size() && s[j] != c) {
        if (s[j] == '\\' && j + 1 < s.size()) ++j;
        value += s[j++];
      }
      if (j >= s.size()) throw ParseError(line, ParseErrorKind::BadToken, "unterminated string literal");
      out.push_back({Token::Kind::string, value});
      i = j + 1;
    } else if (c == '(') {
      out.push_back({Token::Kind::lparen, "("});
      ++i;
    } else if (c == ')') {
      out.push_back({Token::Kind::rparen, ")"});
      ++i;
    } else if (c == ',') {
      out.push_back({Token::Kind::comma, ","});
      ++i;
    } else if (c == '=' && !(i + 1 < s.size() && s[i + 1] == '=')) {
      out.push_back({Token::Kind::equals, "="});
      ++i;
    } else {
      out.push_back({Token::Kind::other, std::string(1, c)});
      ++i;
    }
  }
  return out;
}

bool is_operator_char(const std::string& t) {
  static const std::string kOps = "+-*/%<>[]{}.:!&|^~@=";
  return t.size() == 1 && kOps.find(t[0]) != std::string::npos;
}

ActionCall parse_call(const std::vector<Token>& toks, std::size_t pos, int line, bool assigned) {
  const auto& fname = toks[pos].text;
  const auto kind = parse_action_kind(fname);
  if (!kind) throw ParseError(line, ParseErrorKind::UnknownFunction, "unknown function '" + fname + "'");
  if (pos + 1 >= toks.size() || toks[pos + 1].kind != Token::Kind::lparen)
    throw ParseError(line, ParseErrorKind::BadToken, "expected '(' after " + fname);
  std::vector<Arg> args;
  std::size_t i = pos + 2;
  if (i < toks.size() && toks[i].kind == Token::Kind::rparen) {
    ++i;
  } else {
    while (true) {
      if (i >= toks.size()) throw ParseError(line, ParseErrorKind::BadToken, "unterminated argument list");
      const auto& t = toks[i];
      if (t.kind == Token::Kind::ident)
        args.push_back(Arg::ident(t.text));
      else if (t.kind == Token::Kind::string)
        args.push_back(Arg::lit(t.text));
      else if (t.kind == Token::Kind::other && is_operator_char(t.text))
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "expressions are not allowed in arguments");
      else
        throw ParseError(line, ParseErrorKind::BadToken, "unexpected token '" + t.text + "' in arguments");
      ++i;
      if (i < toks.size() && toks[i].kind == Token::Kind::comma) {
        ++i;
        continue;
      }
      if (i < toks.size() && toks[i].kind == Token::Kind::rparen) {
        ++i;
        break;
      }
      if (i < toks.size() && toks[i].kind == Token::Kind::other && is_operator_char(toks[i].text))
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "expressions are not allowed in arguments");
      throw ParseError(line, ParseErrorKind::BadToken, "expected ',' or ')'");
    }
  }
  if (i != toks.size()) {
    if (toks[i].kind == Token::Kind::other && is_operator_char(toks[i].text))
      throw ParseError(line, ParseErrorKind::DisallowedConstruct, "expressions are not allowed");
    throw ParseError(line, ParseErrorKind::BadToken, "trailing token '" + toks[i].text + "'");
  }

  if (*kind == ActionKind::registry && !assigned)
    throw ParseError(line, ParseErrorKind::DisallowedConstruct, "registry result must be assigned to a variable");
  if (*kind != ActionKind::registry && assigned)
    throw ParseError(line, ParseErrorKind::DisallowedConstruct, "only registry results may be assigned");

  const auto& sig = signature(*kind);
  if (args.size() != sig.size())
    throw ParseError(line, ParseErrorKind::BadArity,
                     fname + " takes " + std::to_string(sig.size()) + " arguments, got " + std::to_string(args.size()));
  for (std::size_t k = 0; k < sig.size(); ++k) {
    const auto& a = args[k];
    auto expect_ident = [&](std::string_view want) {
      if (a.kind != Arg::Kind::identifier || a.text != want)
        throw ParseError(line, ParseErrorKind::BadToken,
                         "argument " + std::to_string(k + 1) + " of " + fname + " must be '" + std::string(want) + "'");
    };
    switch (sig[k]) {
      case Slot::env:
        expect_ident("env");
        break;
      case Slot::robot:
        expect_ident("robot");
        break;
      case Slot::camera:
        expect_ident("camera");
        break;
      case Slot::name_literal:
        if (a.kind != Arg::Kind::literal)
          throw ParseError(line, ParseErrorKind::BadToken, "registry expects a string literal object name");
        break;
      case Slot::object:
        if (a.kind == Arg::Kind::identifier && is_reserved(a.text))
          throw ParseError(line, ParseErrorKind::BadToken, "'" + a.text + "' cannot be used as an object");
        break;
    }
  }
  return ActionCall{*kind, std::move(args), {}};
}

bool is_fence(std::string_view trimmed) { return starts_with(trimmed, "```"); }

}  // namespace

Script parse_script(std::string_view source) {
  Script script;
  script.source_text = std::string(source);

  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : source) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    lines.push_back(cur);
  }

  bool in_body = false;
  for (std::size_t idx = 0; idx < lines.size(); ++idx) {
    const int line = static_cast<int>(idx + 1);
    const std::string& raw = lines[idx];
    const std::string t = trim(raw);
    if (t.empty() || is_fence(t)) continue;

    if (t[0] == '#' || starts_with(t, "//")) {
      if (in_body) {
        const std::string text = trim(t.substr(t[0] == '#' ? 1 : 2));
        script.comments.push_back(text);
        Stmt s;
        s.type = Stmt::Type::comment;
        s.line = line;
        s.text = text;
        script.statements.push_back(std::move(s));
      }
      continue;
    }

    const std::string code = strip_inline_comment(t);
    const auto first_word = code.substr(0, code.find_first_of(" \t(:"));
    const bool indented = std::isspace(static_cast<unsigned char>(raw[0])) != 0;

    if (first_word == "def") {
      std::string compact;
      for (char c : code)
        if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
      const bool is_act = starts_with(compact, "defact(");
      if (in_body || !is_act)
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "helper or nested function definitions are not allowed");
      if (compact != "defact(robot,env,camera):")
        throw ParseError(line, ParseErrorKind::BadHeader, "expected 'def act(robot, env, camera):'");
      in_body = true;
      continue;
    }

    if (!in_body) {
      if (kKeywords.contains(first_word))
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "'" + first_word + "' is not allowed");
      throw ParseError(line, ParseErrorKind::BadHeader, "expected 'def act(robot, env, camera):' before code");
    }
    if (!indented)
      throw ParseError(line, ParseErrorKind::DisallowedConstruct, "statements outside the act body are not allowed");
    if (kKeywords.contains(first_word))
      throw ParseError(line, ParseErrorKind::DisallowedConstruct, "'" + first_word + "' is not allowed");

    const auto toks = lex(code, line);
    if (toks.empty()) continue;
    if (toks[0].kind != Token::Kind::ident) {
      if (toks[0].kind == Token::Kind::other && is_operator_char(toks[0].text))
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "expressions are not allowed");
      throw ParseError(line, ParseErrorKind::BadToken, "unexpected token '" + toks[0].text + "'");
    }

    Stmt s;
    s.line = line;
    if (toks.size() >= 2 && toks[1].kind == Token::Kind::equals) {
      const auto& var = toks[0].text;
      if (is_reserved(var)) throw ParseError(line, ParseErrorKind::BadToken, "cannot assign to '" + var + "'");
      if (toks.size() < 3 || toks[2].kind != Token::Kind::ident)
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "only registry results may be assigned");
      if (!parse_action_kind(toks[2].text) && (toks.size() < 4 || toks[3].kind != Token::Kind::lparen))
        throw ParseError(line, ParseErrorKind::DisallowedConstruct, "only registry results may be assigned");
      s.type = Stmt::Type::assign;
      s.call = parse_call(toks, 2, line, true);
      s.call.binds = var;
    } else {
      if (toks.size() < 2 || toks[1].kind != Token::Kind::lparen) {
        if (toks.size() >= 2 && toks[1].kind == Token::Kind::other && is_operator_char(toks[1].text))
          throw ParseError(line, ParseErrorKind::DisallowedConstruct, "expressions are not allowed");
        throw ParseError(line, ParseErrorKind::BadToken, "expected a function call");
      }
      s.type = Stmt::Type::call;
      s.call = parse_call(toks, 0, line, false);
    }
    script.statements.push_back(std::move(s));
  }

  if (!in_body) {
    const int line = std::max<int>(1, static_cast<int>(lines.size()));
    throw ParseError(line, ParseErrorKind::BadHeader, "missing 'def act(robot, env, camera):' header");
  }
  return script;
}

std::string render_script(const Script& script) {
  std::string out = "def act(robot, env, camera):";
  for (const auto& s : script.statements) {
    out += "\n    ";
    if (s.type == Stmt::Type::comment)
      out += "# " + s.text;
    else
      out += render_call(s.call);
  }
  return out;
}

double name_similarity(std::string_view a_in, std::string_view b_in) {
  const std::string a = to_lower(a_in), b = to_lower(b_in);
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

std::optional<std::string> resolve_object_name(std::string_view literal, const WorldState& world) {
  if (world.find(literal)) return std::string(literal);
  std::optional<std::string> best;
  double best_score = -1.0;
  for (const auto& o : world.objects) {
    const double s = name_similarity(literal, o.id);
    if (s > best_score || (s == best_score && o.id < *best)) {
      best_score = s;
      best = o.id;
    }
  }
  if (!best || best_score < kMinNameSimilarity) return std::nullopt;
  return best;
}

Script resolve_names(const Script& script, const WorldState& world) {
  Script out = script;
  for (auto& s : out.statements) {
    if (s.type == Stmt::Type::comment) continue;
    const auto& sig = signature(s.call.kind);
    for (std::size_t k = 0; k < sig.size(); ++k) {
      auto& a = s.call.args[k];
      if (a.kind != Arg::Kind::literal || (sig[k] != Slot::object && sig[k] != Slot::name_literal)) continue;
      if (auto id = resolve_object_name(a.text, world))
        a.text = *id;
      else if (!s.unresolved)
        s.unresolved = "no object in the scene matches \"" + a.text + "\"";
    }
  }
  return out;
}

StepResult run(const Script& script, WorldState& world) {
  StepResult result;
  world.agent.name_registry.clear();

  const auto& st = script.statements;
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st[i].type != Stmt::Type::call || !is_world_action(st[i].call.kind)) continue;
    std::size_t j = i + 1;
    while (j < st.size() && st[j].type == Stmt::Type::comment) ++j;
    if (j >= st.size() || st[j].type != Stmt::Type::call || st[j].call.kind != ActionKind::donothing)
      result.warnings.push_back("line " + std::to_string(st[i].line) + ": " + render_call(st[i].call) +
                                " is not followed by donothing");
  }

  for (std::size_t i = 0; i < st.size(); ++i) {
    const auto& s = st[i];
    if (s.type == Stmt::Type::comment) continue;
    ActionOutcome outcome;
    if (s.unresolved) {
      outcome.call = s.call;
      outcome.error = ActionError{ActionErrorCode::UnknownObject, *s.unresolved};
      outcome.narration = std::string(name(s.call.kind)) + " failed: " + *s.unresolved;
    } else {
      outcome = execute(world, s.call);
    }
    const bool ok = outcome.success;
    result.outcomes.push_back(std::move(outcome));
    if (!ok) {
      const auto& e = *result.outcomes.back().error;
      result.halted_at = i;
      result.error_text = std::string(name(e.code)) + " at line " + std::to_string(s.line) + " (" + render_call(s.call) +
                          "): " + e.message;
      break;
    }
  }
  return result;
}

std::string describe_call(ActionKind kind, const std::vector<std::string>& ids) {
  auto at = [&](std::size_t i) { return i < ids.size() ? ids[i] : std::string("?"); };
  switch (kind) {
    case ActionKind::donothing:
      return "Wait";
    case ActionKind::registry:
      return "Register " + at(0);
    case ActionKind::EasyGrasp:
      return "Grasp " + at(0);
    case ActionKind::MoveBot:
      return "Move to " + at(0);
    case ActionKind::put_ontop:
      return "Put " + at(0) + " on top of " + at(1);
    case ActionKind::put_inside:
      return "Put " + at(0) + " inside " + at(1);
    case ActionKind::toggle_on:
      return "Toggle on " + at(0);
    case ActionKind::toggle_off:
      return "Toggle off " + at(0);
    default: {
      std::string verb(name(kind));
      verb[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(verb[0])));
      return verb + " " + at(0);
    }
  }
}

std::vector<std::string> call_object_ids(const ActionCall& call, const std::map<std::string, std::string>& bindings) {
  std::vector<std::string> ids;
  const auto& sig = signature(call.kind);
  for (std::size_t k = 0; k < sig.size() && k < call.args.size(); ++k) {
    if (sig[k] != Slot::object) continue;
    const auto& a = call.args[k];
    if (a.kind == Arg::Kind::identifier) {
      auto it = bindings.find(a.text);
      ids.push_back(it == bindings.end() ? a.text : it->second);
    } else {
      ids.push_back(a.text);
    }
  }
  return ids;
}

std::string describe_script(const Script& script) {
  std::map<std::string, std::string> bindings;
  std::vector<std::string> parts;
  for (const auto& s : script.statements) {
    if (s.type == Stmt::Type::assign) bindings[s.call.binds] = s.call.args[1].text;
    if (s.type == Stmt::Type::call && is_world_action(s.call.kind))
      parts.push_back(describe_call(s.call.kind, call_object_ids(s.call, bindings)));
  }
  if (parts.empty()) return "Wait";
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "; " : "") + parts[i];
  return out;
}

}  // namespace octo

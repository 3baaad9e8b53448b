#include "octo/learn/tokens.hpp"

#include <algorithm>
#include <set>

namespace octo::learn {

TokenVocab::TokenVocab(std::vector<std::string> object_ids, std::size_t cap) {
  tokens_ = {"<bos>", "<eos>", "<sep>"};
  for (auto n : kActionNames) tokens_.emplace_back(n);
  std::sort(object_ids.begin(), object_ids.end());
  object_ids.erase(std::unique(object_ids.begin(), object_ids.end()), object_ids.end());
  if (object_ids.size() > cap) object_ids.resize(cap);
  for (auto& id : object_ids) tokens_.push_back(std::move(id));
  for (int i = 0; i < size(); ++i)
    if (!ids_.emplace(tokens_[static_cast<std::size_t>(i)], i).second)
      throw Error("token '" + tokens_[static_cast<std::size_t>(i)] + "' appears twice in the vocabulary");
}

TokenVocab TokenVocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < static_cast<std::size_t>(kFirstObject)) throw Error("vocabulary too short");
  for (int i = 0; i < kFirstObject; ++i) {
    const auto expect = i == kBos ? std::string("<bos>")
                        : i == kEos ? std::string("<eos>")
                        : i == kSep ? std::string("<sep>")
                                    : std::string(kActionNames[static_cast<std::size_t>(i - kFirstKind)]);
    if (tokens[static_cast<std::size_t>(i)] != expect) throw Error("vocabulary header mismatch at " + std::to_string(i));
  }
  return TokenVocab(std::vector<std::string>(tokens.begin() + kFirstObject, tokens.end()), tokens.size());
}

const std::string& TokenVocab::token(int id) const {
  if (id < 0 || id >= size()) throw UnknownToken("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int TokenVocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw UnknownToken("unknown token '" + token + "'");
  return it->second;
}

std::vector<int> TokenVocab::object_tokens(const std::vector<std::string>& ids) const {
  std::set<int> out;
  for (const auto& s : ids) {
    auto it = ids_.find(s);
    if (it != ids_.end() && is_object(it->second)) out.insert(it->second);
  }
  return {out.begin(), out.end()};
}

TokenVocab vocab_for_tasks(const std::vector<TaskFile>& tasks, std::size_t cap) {
  std::vector<std::string> ids;
  for (const auto& t : tasks)
    for (const auto& o : t.world.objects) ids.push_back(o.id);
  return TokenVocab(std::move(ids), cap);
}

std::vector<int> script_to_tokens(const Script& script, const TokenVocab& vocab) {
  std::map<std::string, std::string> bindings;
  std::vector<int> out{kBos};
  bool first = true;
  for (const auto& s : script.statements) {
    if (s.type == Stmt::Type::comment) continue;
    if (s.call.kind == ActionKind::registry) {
      const auto& id = s.call.args.at(1).text;
      bindings[s.call.binds.empty() ? id : s.call.binds] = id;
      continue;
    }
    if (!first) out.push_back(kSep);
    first = false;
    out.push_back(TokenVocab::kind_token(s.call.kind));
    for (const auto& id : call_object_ids(s.call, bindings)) {
      const int t = vocab.id(id);
      if (!vocab.is_object(t)) throw UnknownToken("'" + id + "' is not an object token");
      out.push_back(t);
    }
  }
  if (first) throw UnknownToken("script has no calls to encode");
  out.push_back(kEos);
  return out;
}

Script tokens_to_script(const std::vector<int>& tokens, const TokenVocab& vocab) {
  if (tokens.empty() || tokens.front() != kBos) throw Truncated("sequence must start with BOS");
  if (tokens.back() != kEos) throw Truncated("sequence must end with EOS");
  Script script;
  std::set<std::string> registered;
  int line = 2;
  std::size_t i = 1;
  const std::size_t end = tokens.size() - 1;
  while (true) {
    if (i >= end) throw Truncated("expected a function token");
    const int kt = tokens[i++];
    if (!TokenVocab::is_kind(kt)) throw UnknownToken("expected a function token, got '" + vocab.token(kt) + "'");
    const auto kind = TokenVocab::kind_of(kt);
    if (kind == ActionKind::registry) throw UnknownToken("registry is implicit and cannot be encoded");
    std::vector<std::string> ids;
    for (std::size_t a = 0; a < object_arity(kind); ++a) {
      if (i >= end) throw Truncated("missing argument for " + std::string(name(kind)));
      const int ot = tokens[i++];
      if (!vocab.is_object(ot)) throw UnknownToken("expected an object token, got '" + vocab.token(ot) + "'");
      ids.push_back(vocab.token(ot));
    }
    for (const auto& id : ids) {
      if (!registered.insert(id).second) continue;
      Stmt reg;
      reg.type = Stmt::Type::assign;
      reg.line = line++;
      reg.call = ActionCall{ActionKind::registry, {Arg::ident("env"), Arg::lit(id)}, id};
      script.statements.push_back(std::move(reg));
    }
    Stmt st;
    st.type = Stmt::Type::call;
    st.line = line++;
    st.call = ActionCall::grounded(kind, ids);
    for (auto& a : st.call.args)
      if (a.kind == Arg::Kind::literal) a.kind = Arg::Kind::identifier;
    script.statements.push_back(std::move(st));
    if (i == end) break;
    if (tokens[i] != kSep) throw UnknownToken("expected SEP or EOS, got '" + vocab.token(tokens[i]) + "'");
    ++i;
  }
  script.source_text = render_script(script);
  return script;
}

std::string canonical_code(const Script& script, const TokenVocab& vocab) {
  return render_script(tokens_to_script(script_to_tokens(script, vocab), vocab));
}

DecodeGrammar::DecodeGrammar(const TokenVocab& vocab, std::vector<int> object_tokens, int max_calls)
    : vocab_(&vocab), objects_(std::move(object_tokens)), max_calls_(std::max(1, max_calls)) {
  std::sort(objects_.begin(), objects_.end());
  objects_.erase(std::unique(objects_.begin(), objects_.end()), objects_.end());
}

std::vector<int> DecodeGrammar::allowed() const {
  if (done_) return {};
  if (pending_args_ > 0) return objects_;
  if (in_call_) {
    if (calls_ >= max_calls_) return {kEos};
    return {kEos, kSep};
  }
  std::vector<int> kinds;
  for (std::size_t k = 0; k < kNumActionKinds; ++k) {
    const auto kind = static_cast<ActionKind>(k);
    if (kind == ActionKind::registry) continue;
    if (object_arity(kind) > 0 && objects_.empty()) continue;
    kinds.push_back(TokenVocab::kind_token(kind));
  }
  return kinds;
}

void DecodeGrammar::push(int token) {
  const auto ok = allowed();
  if (std::find(ok.begin(), ok.end(), token) == ok.end())
    throw UnknownToken("token '" + vocab_->token(token) + "' is not allowed here");
  if (pending_args_ > 0) {
    if (--pending_args_ == 0) in_call_ = true;
  } else if (in_call_) {
    in_call_ = false;
    if (token == kEos) done_ = true;
  } else {
    ++calls_;
    pending_args_ = static_cast<int>(object_arity(TokenVocab::kind_of(token)));
    in_call_ = pending_args_ == 0;
  }
}

}  // namespace octo::learn

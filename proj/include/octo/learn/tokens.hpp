#pragma once

#include <map>
#include <string>
#include <vector>

#include "octo/script.hpp"

namespace octo::learn {

class UnknownToken : public Error {
 public:
  using Error::Error;
};
class Truncated : public Error {
 public:
  using Error::Error;
};

inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kSep = 2;
inline constexpr int kFirstKind = 3;
inline constexpr int kFirstObject = kFirstKind + static_cast<int>(kNumActionKinds);
inline constexpr int kMaxCalls = 4;
inline constexpr std::size_t kDefaultObjectCap = 256;

/// BOS/EOS/SEP, the sixteen function names, then object ids in sorted order.
class TokenVocab {
 public:
  TokenVocab() = default;
  explicit TokenVocab(std::vector<std::string> object_ids, std::size_t cap = kDefaultObjectCap);
  static TokenVocab from_tokens(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  int id(const std::string& token) const;  // throws UnknownToken
  bool contains(const std::string& token) const { return ids_.contains(token); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static int kind_token(ActionKind k) { return kFirstKind + static_cast<int>(k); }
  static bool is_kind(int id) { return id >= kFirstKind && id < kFirstObject; }
  static ActionKind kind_of(int id) { return static_cast<ActionKind>(id - kFirstKind); }
  bool is_object(int id) const { return id >= kFirstObject && id < size(); }

  /// Object tokens for the ids present in the vocabulary.
  std::vector<int> object_tokens(const std::vector<std::string>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

TokenVocab vocab_for_tasks(const std::vector<TaskFile>& tasks, std::size_t cap = kDefaultObjectCap);

/// [BOS, kind, objects..., SEP, kind, ..., EOS]; registry calls are implied and dropped.
std::vector<int> script_to_tokens(const Script& script, const TokenVocab& vocab);

/// Inverse of script_to_tokens; registries are regenerated in first-use order.
Script tokens_to_script(const std::vector<int>& tokens, const TokenVocab& vocab);

/// Canonical text of a script: comment-free, registries in first-use order.
std::string canonical_code(const Script& script, const TokenVocab& vocab);

/// Which tokens may come next during decoding.
class DecodeGrammar {
 public:
  DecodeGrammar(const TokenVocab& vocab, std::vector<int> object_tokens, int max_calls = kMaxCalls);

  std::vector<int> allowed() const;
  void push(int token);  // throws UnknownToken if not allowed
  bool done() const { return done_; }

 private:
  const TokenVocab* vocab_;
  std::vector<int> objects_;
  int max_calls_;
  int calls_ = 0;
  int pending_args_ = 0;
  bool in_call_ = false;  // a call was completed and awaits SEP or EOS
  bool done_ = false;
};

/// Longest legal sequence length excluding BOS.
constexpr int max_sequence_length(int max_calls = kMaxCalls) { return max_calls * 4; }

}  // namespace octo::learn

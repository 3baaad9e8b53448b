#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "octo/learn/train.hpp"

namespace octo::learn {

inline constexpr std::string_view kCheckpointHeader = "OCTO-MODEL v1";

enum class ParamEncoding : std::uint8_t { base64, binary };

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// A policy and/or reward model with the vocabulary and training configuration that produced it.
struct Checkpoint {
  std::string kind;  // "policy" or "reward"
  TrainConfig config;
  TokenVocab vocab;
  std::optional<Policy> policy;
  std::optional<Reward> reward;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

/// Header line, key lines, then one block per parameter: "param <name> <rows> <cols> <bytes>" followed by
/// row-major little-endian doubles, base64 on one line or raw bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                     ParamEncoding encoding = ParamEncoding::base64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

}  // namespace octo::learn

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace octo {

// Editable unary object states, in the order the agent prompt lists them.
enum class UnaryState : std::uint8_t {
  cookable,
  burnable,
  freezable,
  heatable,
  openable,
  togglable,
  foldable,
  unfoldable,
};

inline constexpr std::size_t kNumUnaryStates = 8;

inline constexpr std::array<std::string_view, kNumUnaryStates> kUnaryStateNames = {
    "cookable", "burnable", "freezable", "heatable", "openable", "togglable", "foldable", "unfoldable"};

enum class Relation : std::uint8_t {
  inside,
  nextto,
  ontop,
  under,
  touching,
  covered,
  contains,
  saturated,
  filled,
  attached,
  overlaid,
  draped,
};

inline constexpr std::size_t kNumRelations = 12;

inline constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "inside", "nextto",    "ontop",  "under",    "touching", "covered",
    "contains", "saturated", "filled", "attached", "overlaid", "draped"};

constexpr std::string_view name(UnaryState s) { return kUnaryStateNames[static_cast<std::size_t>(s)]; }
constexpr std::string_view name(Relation r) { return kRelationNames[static_cast<std::size_t>(r)]; }

constexpr std::uint8_t bit(UnaryState s) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(s)); }

constexpr std::optional<UnaryState> parse_unary_state(std::string_view text) {
  for (std::size_t i = 0; i < kNumUnaryStates; ++i)
    if (kUnaryStateNames[i] == text) return static_cast<UnaryState>(i);
  return std::nullopt;
}

constexpr std::optional<Relation> parse_relation(std::string_view text) {
  for (std::size_t i = 0; i < kNumRelations; ++i)
    if (kRelationNames[i] == text) return static_cast<Relation>(i);
  return std::nullopt;
}

}  // namespace octo

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace octo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scene/task document, duplicate id, unknown vocabulary, containment cycle.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class UnknownObject : public Error {
 public:
  using Error::Error;
};

class UnknownState : public Error {
 public:
  using Error::Error;
};

class UnknownRelation : public Error {
 public:
  using Error::Error;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Derives an independent stream seed from (seed, stream) with splitmix64 finalisation.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

using Rng = std::mt19937_64;

// Distribution helpers with fixed formulas so streams are reproducible across standard libraries.
double uniform01(Rng& rng);
double standard_normal(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace octo

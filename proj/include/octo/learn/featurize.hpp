#pragma once

#include <Eigen/SparseCore>

#include <string>
#include <string_view>
#include <vector>

namespace octo::learn {

using FeatureVector = Eigen::SparseVector<double>;

inline constexpr int kFeatureDim = 4096;

/// Lower-cased runs of [a-z0-9_]; everything else separates tokens.
std::vector<std::string> text_tokens(std::string_view text);

/// Hashed bag of words: count of tokens at FNV-1a(token) mod dim.
FeatureVector featurize_text(std::string_view text, int dim = kFeatureDim);

FeatureVector featurize(std::string_view env_msg, std::string_view task_goal, int dim = kFeatureDim);

/// Reward-model input: instruction, a separator token, then the response.
FeatureVector featurize_pair(std::string_view instruction, std::string_view response, int dim = kFeatureDim);

/// x / ||x||, or x itself when it is zero.
FeatureVector l2_normalized(const FeatureVector& x);

}  // namespace octo::learn

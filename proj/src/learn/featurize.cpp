#include "octo/learn/featurize.hpp"

#include <cctype>
#include <map>

#include "octo/common.hpp"

namespace octo::learn {

std::vector<std::string> text_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

FeatureVector featurize_text(std::string_view text, int dim) {
  std::map<int, double> counts;
  for (const auto& t : text_tokens(text)) counts[static_cast<int>(fnv1a64(t) % static_cast<std::uint64_t>(dim))] += 1.0;
  FeatureVector x(dim);
  x.reserve(static_cast<Eigen::Index>(counts.size()));
  for (const auto& [k, v] : counts) x.insertBack(k) = v;
  return x;
}

FeatureVector featurize(std::string_view env_msg, std::string_view task_goal, int dim) {
  std::string text(env_msg);
  text += '\n';
  text += task_goal;
  return featurize_text(text, dim);
}

FeatureVector featurize_pair(std::string_view instruction, std::string_view response, int dim) {
  std::string text(instruction);
  text += " SEP ";
  text += response;
  return featurize_text(text, dim);
}

FeatureVector l2_normalized(const FeatureVector& x) {
  const double n = x.norm();
  if (n == 0.0) return x;
  return x / n;
}

}  // namespace octo::learn

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace octo::learn {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  if (x.size() == 0) return -std::numeric_limits<S>::infinity();
  const S m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

template <typename Derived>
Vec<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& x) {
  return x.array() - logsumexp(x);
}

template <typename Derived>
Vec<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& x) {
  return log_softmax(x).array().exp();
}

/// Logits restricted to `allowed` indices, in that order.
template <typename Derived>
Vec<typename Derived::Scalar> gather(const Eigen::MatrixBase<Derived>& x, const std::vector<int>& allowed) {
  Vec<typename Derived::Scalar> out(static_cast<Eigen::Index>(allowed.size()));
  for (std::size_t i = 0; i < allowed.size(); ++i) out(static_cast<Eigen::Index>(i)) = x(allowed[i]);
  return out;
}

/// KL(softmax(p) || softmax(q)); clamped at zero against rounding.
template <typename D1, typename D2>
typename D1::Scalar kl_divergence(const Eigen::MatrixBase<D1>& p_logits, const Eigen::MatrixBase<D2>& q_logits) {
  using S = typename D1::Scalar;
  const Vec<S> lp = log_softmax(p_logits);
  const Vec<S> lq = log_softmax(q_logits);
  const S kl = (lp.array().exp() * (lp - lq).array()).sum();
  return std::max(kl, S(0));
}

/// Same divergence from log-probabilities that are already normalised.
template <typename D1, typename D2>
typename D1::Scalar kl_from_logprobs(const Eigen::MatrixBase<D1>& lp, const Eigen::MatrixBase<D2>& lq) {
  using S = typename D1::Scalar;
  return std::max((lp.array().exp() * (lp - lq).array()).sum(), S(0));
}

template <typename S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

// log(1 + e^x) without overflow.
template <typename S>
S softplus(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace octo::learn

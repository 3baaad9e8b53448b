#pragma once

#include <string>
#include <utility>
#include <vector>

#include "octo/common.hpp"
#include "octo/learn/featurize.hpp"
#include "octo/learn/math.hpp"

namespace octo::learn {

struct PolicyShape {
  int dim = kFeatureDim;
  int hidden = 64;
  int vocab = 0;
  int max_len = 16;
};

template <typename Scalar>
struct PolicyParams {
  Mat<Scalar> W1, b1;  // context encoder
  Mat<Scalar> E, P;    // previous-token and position embeddings
  Mat<Scalar> Wo, bo;  // output head

  std::vector<std::pair<std::string, Mat<Scalar>*>> blocks() {
    return {{"W1", &W1}, {"b1", &b1}, {"E", &E}, {"P", &P}, {"Wo", &Wo}, {"bo", &bo}};
  }
  std::vector<std::pair<std::string, const Mat<Scalar>*>> blocks() const {
    return {{"W1", &W1}, {"b1", &b1}, {"E", &E}, {"P", &P}, {"Wo", &Wo}, {"bo", &bo}};
  }
  PolicyParams zeros_like() const {
    PolicyParams z;
    z.W1 = Mat<Scalar>::Zero(W1.rows(), W1.cols());
    z.b1 = Mat<Scalar>::Zero(b1.rows(), b1.cols());
    z.E = Mat<Scalar>::Zero(E.rows(), E.cols());
    z.P = Mat<Scalar>::Zero(P.rows(), P.cols());
    z.Wo = Mat<Scalar>::Zero(Wo.rows(), Wo.cols());
    z.bo = Mat<Scalar>::Zero(bo.rows(), bo.cols());
    return z;
  }
};

/// h = tanh(W1 x^ + b1); z_l = tanh(h + E[:, prev] + P[:, pos]); logits_l = Wo z_l + bo.
/// x^ is the L2-normalised feature vector. The head starts at zero so the initial softmax is uniform.
template <typename Scalar>
class PolicyModel {
 public:
  using V = Vec<Scalar>;

  PolicyModel() = default;
  PolicyModel(PolicyShape shape, std::uint64_t seed) : shape_(shape) {
    Rng rng(mix_seed(seed, 0x706f6c));
    auto gauss = [&](Eigen::Index r, Eigen::Index c, double sd) {
      Mat<Scalar> m(r, c);
      for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = static_cast<Scalar>(sd * standard_normal(rng));
      return m;
    };
    params.W1 = gauss(shape.hidden, shape.dim, 1.0);
    params.b1 = Mat<Scalar>::Zero(shape.hidden, 1);
    params.E = gauss(shape.hidden, shape.vocab, 0.5);
    params.P = gauss(shape.hidden, shape.max_len, 0.5);
    params.Wo = Mat<Scalar>::Zero(shape.vocab, shape.hidden);
    params.bo = Mat<Scalar>::Zero(shape.vocab, 1);
  }

  const PolicyShape& shape() const { return shape_; }
  int vocab_size() const { return shape_.vocab; }

  struct Trace {
    Eigen::SparseVector<Scalar> xhat;
    V h;
    std::vector<int> prev;
    std::vector<V> z;
    std::vector<V> logits;
  };

  V context(const Eigen::SparseVector<Scalar>& xhat) const {
    return (params.W1 * xhat + params.b1.col(0)).array().tanh().matrix();
  }

  V step_logits(const V& h, int prev, int pos, V* z_out = nullptr) const {
    const int p = std::min(pos, shape_.max_len - 1);
    V z = (h + params.E.col(prev) + params.P.col(p)).array().tanh().matrix();
    V logits = params.Wo * z + params.bo.col(0);
    if (z_out) *z_out = std::move(z);
    return logits;
  }

  static Eigen::SparseVector<Scalar> normalise(const FeatureVector& x) {
    return l2_normalized(x).template cast<Scalar>();
  }

  /// Teacher-forced pass over `tokens` (BOS first); one logit vector per predicted token.
  Trace forward(const FeatureVector& x, const std::vector<int>& tokens) const {
    Trace t;
    t.xhat = normalise(x);
    t.h = context(t.xhat);
    for (std::size_t l = 0; l + 1 < tokens.size(); ++l) {
      V z;
      t.logits.push_back(step_logits(t.h, tokens[l], static_cast<int>(l), &z));
      t.z.push_back(std::move(z));
      t.prev.push_back(tokens[l]);
    }
    return t;
  }

  /// Accumulates parameter gradients given dLoss/dlogits for every position of `t`.
  void backward(const Trace& t, const std::vector<V>& dlogits, PolicyParams<Scalar>& g) const {
    V dh = V::Zero(shape_.hidden);
    for (std::size_t l = 0; l < dlogits.size(); ++l) {
      const V& dl = dlogits[l];
      const V& z = t.z[l];
      g.Wo.noalias() += dl * z.transpose();
      g.bo.col(0) += dl;
      const V du = ((params.Wo.transpose() * dl).array() * (1 - z.array().square())).matrix();
      g.E.col(t.prev[l]) += du;
      g.P.col(std::min(static_cast<int>(l), shape_.max_len - 1)) += du;
      dh += du;
    }
    const V da = (dh.array() * (1 - t.h.array().square())).matrix();
    g.b1.col(0) += da;
    for (typename Eigen::SparseVector<Scalar>::InnerIterator it(t.xhat); it; ++it)
      g.W1.col(it.index()) += da * it.value();
  }

  /// Per-token log-probabilities under the full (unmasked) softmax.
  std::vector<Scalar> token_logprobs(const FeatureVector& x, const std::vector<int>& tokens) const {
    const Trace t = forward(x, tokens);
    std::vector<Scalar> out;
    for (std::size_t l = 0; l < t.logits.size(); ++l) out.push_back(log_softmax(t.logits[l])(tokens[l + 1]));
    return out;
  }

  /// log p(sequence) computed in one pass as log of the product of normalised probabilities.
  Scalar sequence_logprob(const FeatureVector& x, const std::vector<int>& tokens) const {
    const Trace t = forward(x, tokens);
    Scalar s = 0;
    for (std::size_t l = 0; l < t.logits.size(); ++l) s += t.logits[l](tokens[l + 1]) - logsumexp(t.logits[l]);
    return s;
  }

  PolicyParams<Scalar> params;

 private:
  PolicyShape shape_;
};

template <typename Scalar>
struct RewardModel {
  Vec<Scalar> w;
  Scalar b = 0;
  int dim = kFeatureDim;

  RewardModel() = default;
  explicit RewardModel(int d) : w(Vec<Scalar>::Zero(d)), dim(d) {}

  Scalar score(const FeatureVector& x) const {
    const Eigen::SparseVector<Scalar> xh = l2_normalized(x).template cast<Scalar>();
    Scalar s = b;
    for (typename Eigen::SparseVector<Scalar>::InnerIterator it(xh); it; ++it) s += w(it.index()) * it.value();
    return s;
  }
  Scalar score(const std::string& instruction, const std::string& response) const {
    return score(featurize_pair(instruction, response, dim));
  }
};

}  // namespace octo::learn

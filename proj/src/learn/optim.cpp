#include <algorithm>
#include <cmath>
#include <set>

#include "octo/learn/train.hpp"

namespace octo::learn {

TrainConfig TrainConfig::sft_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::reward_defaults() {
  TrainConfig c;
  c.lr = 0.05;
  c.epochs = 300;
  return c;
}

TrainConfig TrainConfig::ppo_defaults() {
  TrainConfig c;
  c.lr = 0.002;
  c.epochs = 1;
  c.ppo_iterations = 20;
  return c;
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["beta"] = beta;
  j["clip_eps"] = clip_eps;
  j["ppo_epochs"] = ppo_epochs;
  j["seed"] = seed;
  j["hidden"] = hidden;
  j["feature_dim"] = feature_dim;
  j["max_len"] = max_len;
  j["max_calls"] = max_calls;
  j["singleton_weight"] = singleton_weight;
  j["l2"] = l2;
  j["holdout_fraction"] = holdout_fraction;
  j["ppo_iterations"] = ppo_iterations;
  j["samples_per_context"] = samples_per_context;
  j["max_grad_norm"] = max_grad_norm;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw SchemaError("train config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "clip_eps") c.clip_eps = v.get<double>();
      else if (key == "ppo_epochs") c.ppo_epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "hidden") c.hidden = v.get<int>();
      else if (key == "feature_dim") c.feature_dim = v.get<int>();
      else if (key == "max_len") c.max_len = v.get<int>();
      else if (key == "max_calls") c.max_calls = v.get<int>();
      else if (key == "singleton_weight") c.singleton_weight = v.get<double>();
      else if (key == "l2") c.l2 = v.get<double>();
      else if (key == "holdout_fraction") c.holdout_fraction = v.get<double>();
      else if (key == "ppo_iterations") c.ppo_iterations = v.get<int>();
      else if (key == "samples_per_context") c.samples_per_context = v.get<int>();
      else if (key == "max_grad_norm") c.max_grad_norm = v.get<double>();
      else throw SchemaError("unknown train config key " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad train config: ") + e.what());
  }
  return c;
}

std::vector<ParamRef> param_refs(PolicyParams<double>& p, const PolicyParams<double>& g) {
  std::vector<ParamRef> out;
  auto pb = p.blocks();
  auto gb = g.blocks();
  for (std::size_t i = 0; i < pb.size(); ++i)
    out.push_back({pb[i].first, pb[i].second->data(), gb[i].second->data(), pb[i].second->size()});
  return out;
}

std::vector<ParamRef> param_refs(Reward& r, const Reward& g) {
  return {{"w", r.w.data(), g.w.data(), r.w.size()}, {"b", &r.b, &g.b, 1}};
}

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::VectorXd::Zero(p.size));
      v_.push_back(Eigen::VectorXd::Zero(p.size));
    }
  }
  ++t_;
  const double c1 = 1 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> x(params[i].value, params[i].size);
    Eigen::Map<const Eigen::VectorXd> g(params[i].grad, params[i].size);
    m_[i] = b1_ * m_[i] + (1 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1 - b2_) * g.cwiseProduct(g);
    x.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double clip_grad_norm(PolicyParams<double>& g, double max_norm) {
  double sq = 0;
  for (auto& [name, m] : g.blocks()) sq += m->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm)
    for (auto& [name, m] : g.blocks()) *m *= max_norm / norm;
  return norm;
}

GradCheckResult grad_check(const std::vector<ParamRef>& params, const std::function<double()>& loss, int count,
                           std::uint64_t seed, double step) {
  Rng rng(mix_seed(seed, 0x6763));
  std::vector<std::pair<std::size_t, Eigen::Index>> all, nonzero;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (Eigen::Index e = 0; e < params[b].size; ++e) {
      all.emplace_back(b, e);
      if (params[b].grad[e] != 0.0) nonzero.emplace_back(b, e);
    }
  std::set<std::pair<std::size_t, Eigen::Index>> chosen;
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(count), all.size());
  for (int tries = 0; chosen.size() < want / 2 && !nonzero.empty() && tries < 100 * count; ++tries)
    chosen.insert(nonzero[uniform_index(rng, nonzero.size())]);
  for (int tries = 0; chosen.size() < want && tries < 100 * count; ++tries) chosen.insert(all[uniform_index(rng, all.size())]);

  GradCheckResult r;
  for (const auto& [b, e] : chosen) {
    double& v = params[b].value[e];
    const double analytic = params[b].grad[e];
    const double saved = v;
    v = saved + step;
    const double up = loss();
    v = saved - step;
    const double down = loss();
    v = saved;
    const double numeric = (up - down) / (2 * step);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double err = scale < 1e-8 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
    r.max_rel_error = std::max(r.max_rel_error, err);
    ++r.checked;
  }
  return r;
}

}  // namespace octo::learn

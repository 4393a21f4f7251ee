#include "satm/optim.hpp"

#include <cmath>

namespace satm::num {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data()) sq += g * g;
  return std::sqrt(sq);
}

double Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter* p = params_[i];
    if (!p->grad.same_shape(p->value) || !m_[i].same_shape(p->value))
      throw ShapeError("optimizer: gradient shape " + p->grad.shape_string() +
                       " does not match parameter " + p->name + " " +
                       p->value.shape_string());
  }
  const double norm = global_grad_norm(params_);
  if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
  const double clip =
      (config_.clip_norm > 0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad[k] * clip;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      p->value[k] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
    }
  }
  zero_grad();
  return norm;
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->grad.fill(0.0);
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw ShapeError("optimizer restore: moment count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!m[i].same_shape(params_[i]->value) || !v[i].same_shape(params_[i]->value))
      throw ShapeError("optimizer restore: moment shape mismatch for " + params_[i]->name);
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

Tensor normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

}  // namespace satm::num

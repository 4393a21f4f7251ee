#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "satm/autodiff.hpp"

namespace satm::num {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global-norm clip threshold; <= 0 disables clipping.
  double clip_norm = 2.0;
};

/// Adam over a fixed parameter list. step() consumes Parameter::grad and
/// zeroes it afterwards.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  /// Returns the pre-clip global gradient norm.
  double step();
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  // Moment access for checkpointing.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

double global_grad_norm(const std::vector<Parameter*>& params);

using Rng = std::mt19937_64;

/// Uniform Glorot initialisation.
Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng);
Tensor normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace satm::num

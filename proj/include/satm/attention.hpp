#pragma once

#include <string>
#include <vector>

#include "satm/autodiff.hpp"
#include "satm/optim.hpp"

namespace satm::nn {

using num::Graph;
using num::Parameter;
using num::ParameterSet;
using num::Tensor;
using num::Var;

struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;  // optional

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, bool with_bias,
         num::Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, std::size_t dim);
  Var operator()(Graph& g, Var x) const;
};

struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t hidden,
              num::Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

/// Standard scaled dot-product multi-head attention.
struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, std::size_t dim,
                     std::size_t heads, num::Rng& rng);
  /// mask is [queries, memory] with 0 marking blocked positions.
  Var operator()(Graph& g, Var queries, Var memory, const Tensor* mask) const;
};

/// Post-LN encoder block: self-attention then feed-forward.
struct EncoderLayer {
  MultiHeadAttention self;
  LayerNorm ln1, ln2;
  FeedForward ff;

  EncoderLayer() = default;
  EncoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
               std::size_t ff_dim, num::Rng& rng);
  Var operator()(Graph& g, Var x, const Tensor* mask) const;
};

Tensor sinusoidal_positions(std::size_t count, std::size_t dim);
/// Lower-triangular [n,n] mask of ones.
Tensor causal_mask(std::size_t n);

/// One query row's view of a topic-informed attention call, averaged over heads.
struct AttentionStep {
  std::vector<double> alpha_q;
  std::vector<double> alpha_t;
  std::vector<double> alpha;
  double p_sel = 0.0;
};

struct AttentionTrace {
  std::vector<AttentionStep> steps;
};

/// Cross-attention that mixes the usual query-key distribution with a
/// query-independent distribution scored by the contrast between informative
/// and other topic vectors of each memory element, gated by p_sel.
class TopicAttention {
 public:
  /// Query-independent part, computed once per memory.
  struct Memory {
    Var values;                 // [J,d]
    Var keys;                   // [J,d]
    std::vector<Var> alpha_t;   // per head, [1,J]
    Var mu_t;                   // [1,d], heads concatenated
    std::size_t size = 0;
  };

  TopicAttention() = default;
  TopicAttention(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
                 std::size_t tau_dim, num::Rng& rng);

  /// memory [J,d]; tau_s and tau_o [J, tau_dim].
  Memory prepare(Graph& g, Var memory, Var tau_s, Var tau_o) const;
  /// queries [n,d] -> fused context [n,d]. Appends one step per query row to
  /// trace when given.
  Var attend(Graph& g, const Memory& mem, Var queries, AttentionTrace* trace) const;

  std::size_t heads() const { return heads_; }
  std::size_t dim() const { return dim_; }
  std::size_t tau_dim() const { return tau_dim_; }

  // Exposed so tests can build controlled cases.
  Linear w_q, w_kq, w_v, w_o, w_t, w_kt;
  Parameter* w_p = nullptr;  // [3d,1]: rows for q, mu^q, mu^t

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  std::size_t tau_dim_ = 0;
};

/// Decoder block: causal self-attention, topic-informed cross-attention,
/// feed-forward; post-LN.
struct DecoderLayer {
  MultiHeadAttention self;
  TopicAttention cross;
  LayerNorm ln1, ln2, ln3;
  FeedForward ff;

  DecoderLayer() = default;
  DecoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
               std::size_t ff_dim, std::size_t tau_dim, num::Rng& rng);
  Var operator()(Graph& g, Var x, const TopicAttention::Memory& mem, AttentionTrace* trace) const;
};

}  // namespace satm::nn

#include "satm/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace satm::nn {

Linear::Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
               bool with_bias, num::Rng& rng) {
  weight = &ps.add(name + ".w", num::xavier(in, out, rng));
  if (with_bias) bias = &ps.add(name + ".b", Tensor(1, out));
}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = num::matmul(x, g.param(*weight));
  return bias ? num::add(y, g.param(*bias)) : y;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, std::size_t dim) {
  gain = &ps.add(name + ".gain", Tensor(1, dim, 1.0));
  bias = &ps.add(name + ".bias", Tensor(1, dim));
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return num::layer_norm(x, g.param(*gain), g.param(*bias));
}

FeedForward::FeedForward(ParameterSet& ps, const std::string& name, std::size_t dim,
                         std::size_t hidden, num::Rng& rng)
    : in(ps, name + ".in", dim, hidden, true, rng), out(ps, name + ".out", hidden, dim, true, rng) {}

Var FeedForward::operator()(Graph& g, Var x) const { return out(g, num::relu(in(g, x))); }

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name,
                                       std::size_t dim, std::size_t h, num::Rng& rng)
    : q(ps, name + ".q", dim, dim, false, rng),
      k(ps, name + ".k", dim, dim, false, rng),
      v(ps, name + ".v", dim, dim, false, rng),
      o(ps, name + ".o", dim, dim, false, rng),
      heads(h) {
  if (h == 0 || dim % h != 0) throw std::invalid_argument("attention: heads must divide dim");
}

Var MultiHeadAttention::operator()(Graph& g, Var queries, Var memory, const Tensor* mask) const {
  Var Q = q(g, queries), K = k(g, memory), V = v(g, memory);
  const std::size_t dh = Q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> out;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = num::slice_cols(Q, h * dh, dh);
    Var kh = num::slice_cols(K, h * dh, dh);
    Var vh = num::slice_cols(V, h * dh, dh);
    Var a = num::softmax_rows(num::scale(num::matmul_nt(qh, kh), scale), mask);
    out.push_back(num::matmul(a, vh));
  }
  return o(g, heads == 1 ? out[0] : num::concat_cols(out));
}

EncoderLayer::EncoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim,
                           std::size_t heads, std::size_t ff_dim, num::Rng& rng)
    : self(ps, name + ".self", dim, heads, rng),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      ff(ps, name + ".ff", dim, ff_dim, rng) {}

Var EncoderLayer::operator()(Graph& g, Var x, const Tensor* mask) const {
  Var h = ln1(g, num::add(x, self(g, x, x, mask)));
  return ln2(g, num::add(h, ff(g, h)));
}

Tensor sinusoidal_positions(std::size_t count, std::size_t dim) {
  Tensor pe(count, dim);
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / dim);
      pe(p, i) = i % 2 == 0 ? std::sin(p / rate) : std::cos(p / rate);
    }
  return pe;
}

Tensor causal_mask(std::size_t n) {
  Tensor m(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c <= r; ++c) m(r, c) = 1.0;
  return m;
}

TopicAttention::TopicAttention(ParameterSet& ps, const std::string& name, std::size_t dim,
                               std::size_t heads, std::size_t tau_dim, num::Rng& rng)
    : w_q(ps, name + ".w_q", dim, dim, false, rng),
      w_kq(ps, name + ".w_kq", dim, dim, false, rng),
      w_v(ps, name + ".w_v", dim, dim, false, rng),
      w_o(ps, name + ".w_o", dim, dim, false, rng),
      w_t(ps, name + ".w_t", tau_dim, dim, false, rng),
      w_kt(ps, name + ".w_kt", dim, dim, false, rng),
      dim_(dim),
      heads_(heads),
      tau_dim_(tau_dim) {
  if (heads == 0 || dim % heads != 0)
    throw std::invalid_argument("topic attention: heads must divide dim");
  w_p = &ps.add(name + ".w_p", num::xavier(3 * dim, 1, rng));
}

TopicAttention::Memory TopicAttention::prepare(Graph& g, Var memory, Var tau_s,
                                               Var tau_o) const {
  if (memory.rows() == 0) throw std::invalid_argument("topic attention: empty memory");
  if (tau_s.rows() != memory.rows() || tau_o.rows() != memory.rows())
    throw std::invalid_argument("topic attention: every memory element needs topic vectors");
  Memory m;
  m.size = memory.rows();
  m.values = w_v(g, memory);
  m.keys = w_kq(g, memory);
  Var contrast = w_t(g, num::sub(tau_s, tau_o));  // (tau_s - tau_o) W_T
  Var topic_keys = w_kt(g, memory);
  const std::size_t dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> mu;
  for (std::size_t h = 0; h < heads_; ++h) {
    Var score = num::sum_cols(num::mul(num::slice_cols(contrast, h * dh, dh),
                                       num::slice_cols(topic_keys, h * dh, dh)));
    Var a = num::softmax_rows(num::transpose(num::scale(score, scale)));
    m.alpha_t.push_back(a);
    mu.push_back(num::matmul(a, num::slice_cols(m.values, h * dh, dh)));
  }
  m.mu_t = heads_ == 1 ? mu[0] : num::concat_cols(mu);
  return m;
}

Var TopicAttention::attend(Graph& g, const Memory& mem, Var queries, AttentionTrace* trace) const {
  Var Q = w_q(g, queries);
  const std::size_t dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> alpha_q, mu_q;
  for (std::size_t h = 0; h < heads_; ++h) {
    Var a = num::softmax_rows(num::scale(
        num::matmul_nt(num::slice_cols(Q, h * dh, dh), num::slice_cols(mem.keys, h * dh, dh)),
        scale));
    alpha_q.push_back(a);
    mu_q.push_back(num::matmul(a, num::slice_cols(mem.values, h * dh, dh)));
  }
  Var mu_q_all = heads_ == 1 ? mu_q[0] : num::concat_cols(mu_q);

  // p_sel = sigmoid([q; mu^q; mu^t] W_P), one gate per query shared by heads.
  Var wp = g.param(*w_p);
  Var gate = num::add(num::add(num::matmul(Q, num::slice_rows(wp, 0, dim_)),
                               num::matmul(mu_q_all, num::slice_rows(wp, dim_, dim_))),
                      num::matmul(mem.mu_t, num::slice_rows(wp, 2 * dim_, dim_)));
  // Squeezed into [eps, 1-eps]: a saturated double sigmoid reaches exactly 0 or
  // 1, which would switch one attention source off entirely.
  constexpr double eps = 1e-12;
  Var p = num::add_scalar(num::scale(num::sigmoid(gate), 1.0 - 2.0 * eps), eps);  // [n,1]
  Var keep = num::add_scalar(num::scale(p, -1.0), 1.0);

  std::vector<Var> fused;
  std::vector<Var> alphas;
  for (std::size_t h = 0; h < heads_; ++h) {
    Var a = num::add(num::mul(alpha_q[h], keep), num::matmul(p, mem.alpha_t[h]));
    alphas.push_back(a);
    fused.push_back(num::matmul(a, num::slice_cols(mem.values, h * dh, dh)));
  }

  if (trace) {
    const std::size_t n = Q.rows(), J = mem.size;
    const double inv = 1.0 / static_cast<double>(heads_);
    for (std::size_t r = 0; r < n; ++r) {
      AttentionStep st;
      st.alpha_q.assign(J, 0.0);
      st.alpha_t.assign(J, 0.0);
      st.alpha.assign(J, 0.0);
      for (std::size_t h = 0; h < heads_; ++h)
        for (std::size_t j = 0; j < J; ++j) {
          st.alpha_q[j] += inv * alpha_q[h].value()(r, j);
          st.alpha_t[j] += inv * mem.alpha_t[h].value()(0, j);
          st.alpha[j] += inv * alphas[h].value()(r, j);
        }
      st.p_sel = p.value()(r, 0);
      trace->steps.push_back(std::move(st));
    }
  }
  return w_o(g, heads_ == 1 ? fused[0] : num::concat_cols(fused));
}

DecoderLayer::DecoderLayer(ParameterSet& ps, const std::string& name, std::size_t dim,
                           std::size_t heads, std::size_t ff_dim, std::size_t tau_dim,
                           num::Rng& rng)
    : self(ps, name + ".self", dim, heads, rng),
      cross(ps, name + ".cross", dim, heads, tau_dim, rng),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      ln3(ps, name + ".ln3", dim),
      ff(ps, name + ".ff", dim, ff_dim, rng) {}

Var DecoderLayer::operator()(Graph& g, Var x, const TopicAttention::Memory& mem,
                             AttentionTrace* trace) const {
  const Tensor mask = causal_mask(x.rows());
  Var h = ln1(g, num::add(x, self(g, x, x, &mask)));
  h = ln2(g, num::add(h, cross.attend(g, mem, h, trace)));
  return ln3(g, num::add(h, ff(g, h)));
}

}  // namespace satm::nn

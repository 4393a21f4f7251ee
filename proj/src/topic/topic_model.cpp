#include "satm/topic_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace satm::topic {

std::string_view topic_mode_name(TopicMode m) { return m == TopicMode::ntm ? "ntm" : "satm"; }

std::string_view topic_group_name(TopicGroup g) {
  switch (g) {
    case TopicGroup::informative: return "informative";
    case TopicGroup::other: return "other";
    case TopicGroup::general: return "general";
  }
  return "?";
}

void TopicConfig::validate() const {
  if (vocab_size == 0) throw std::invalid_argument("topic model: empty vocabulary");
  if (informative_topics == 0) throw std::invalid_argument("topic model: K_s must be >= 1");
  if (mode == TopicMode::satm && other_topics == 0)
    throw std::invalid_argument("topic model: K_o must be >= 1 in SATM mode");
  if (hidden == 0 || embed_dim == 0) throw std::invalid_argument("topic model: zero width");
}

Var topic_word_matrix(Var phi, Var word_vectors) {
  if (phi.cols() != word_vectors.cols())
    throw num::ShapeError("topic_word_matrix: phi " + phi.value().shape_string() +
                          " vs word vectors " + word_vectors.value().shape_string());
  return num::softmax_rows(num::matmul_nt(phi, word_vectors));
}

Var topic_representation(Var theta, Var phi) {
  if (theta.rows() != 1 || theta.cols() != phi.rows())
    throw num::ShapeError("topic_representation: theta " + theta.value().shape_string() +
                          " vs phi " + phi.value().shape_string());
  return num::matmul(theta, phi);
}

Var kl_standard_normal(Var mu, Var logvar) {
  // -1/2 * sum(1 + logvar - mu^2 - exp(logvar))
  Var inner = num::sub(num::add_scalar(logvar, 1.0), num::add(num::square(mu), num::exp(logvar)));
  return num::scale(num::sum(inner), -0.5);
}

Var bag_nll(Graph& g, Var theta, Var beta, const corpus::BagOfWords& bag) {
  if (bag.empty()) return g.constant(Tensor::scalar(0.0));
  Var p = num::matmul(theta, beta);
  const auto idx = bag.indices();
  const auto w = bag.weights();
  if (idx.back() >= p.cols()) throw std::invalid_argument("bag index exceeds vocabulary size");
  return num::scale(num::weighted_entries(num::log(p), idx, w), -1.0);
}

TopicModel::TopicModel(TopicConfig config, std::string name, num::Rng& rng)
    : config_(config), name_(std::move(name)) {
  config_.validate();
  const std::size_t V = config_.vocab_size, Hh = config_.hidden, L = config_.latent_dim();
  const std::size_t H = config_.embed_dim;
  params_.add(name_ + ".enc_w", num::xavier(V, Hh, rng));
  params_.add(name_ + ".enc_b", Tensor(1, Hh));
  params_.add(name_ + ".mu_w", num::xavier(Hh, L, rng));
  params_.add(name_ + ".mu_b", Tensor(1, L));
  params_.add(name_ + ".logvar_w", num::xavier(Hh, L, rng));
  params_.add(name_ + ".logvar_b", Tensor(1, L));
  if (config_.mode == TopicMode::satm) {
    params_.add(name_ + ".head_s_w", num::xavier(L, config_.informative_topics, rng));
    params_.add(name_ + ".head_s_b", Tensor(1, config_.informative_topics));
    params_.add(name_ + ".head_o_w", num::xavier(L, config_.other_topics, rng));
    params_.add(name_ + ".head_o_b", Tensor(1, config_.other_topics));
    params_.add(name_ + ".phi_s", num::xavier(config_.informative_topics, H, rng));
    params_.add(name_ + ".phi_o", num::xavier(config_.other_topics, H, rng));
  } else {
    params_.add(name_ + ".head_w", num::xavier(L, config_.topic_count(), rng));
    params_.add(name_ + ".head_b", Tensor(1, config_.topic_count()));
    params_.add(name_ + ".phi", num::xavier(config_.topic_count(), H, rng));
  }
  params_.add(name_ + ".word_vectors", num::xavier(V, H, rng));
}

num::Parameter& TopicModel::phi_param(TopicGroup group) {
  return const_cast<num::Parameter&>(std::as_const(*this).phi_param(group));
}

const num::Parameter& TopicModel::phi_param(TopicGroup group) const {
  const char* suffix = nullptr;
  if (config_.mode == TopicMode::satm) {
    if (group == TopicGroup::informative) suffix = ".phi_s";
    if (group == TopicGroup::other) suffix = ".phi_o";
  } else if (group == TopicGroup::general) {
    suffix = ".phi";
  }
  if (!suffix)
    throw std::invalid_argument("topic group " + std::string(topic_group_name(group)) +
                                " does not exist in " + std::string(topic_mode_name(config_.mode)) +
                                " mode");
  return *params_.find(name_ + suffix);
}

std::vector<TopicGroup> TopicModel::groups() const {
  if (config_.mode == TopicMode::satm) return {TopicGroup::informative, TopicGroup::other};
  return {TopicGroup::general};
}

Latent TopicModel::infer_latent(Graph& g, const corpus::BagOfWords& bow, num::Rng* rng) {
  if (!bow.empty() && bow.entries().back().first >= config_.vocab_size)
    throw std::invalid_argument("infer_latent: bag index exceeds vocabulary size " +
                                std::to_string(config_.vocab_size));
  std::vector<double> x(config_.vocab_size, 0.0);
  for (const auto& [i, c] : bow.entries()) x[i] = std::log1p(static_cast<double>(c));
  Var input = g.constant(Tensor::row(std::move(x)));
  auto p = [&](const char* s) -> num::Parameter& { return *params_.find(name_ + s); };
  Var h = num::tanh(num::add(num::matmul(input, g.param(p(".enc_w"))), g.param(p(".enc_b"))));
  Var mu = num::add(num::matmul(h, g.param(p(".mu_w"))), g.param(p(".mu_b")));
  Var logvar = num::add(num::matmul(h, g.param(p(".logvar_w"))), g.param(p(".logvar_b")));
  if (!rng) return Latent{mu, logvar, mu};
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor eps(1, config_.latent_dim());
  for (double& e : eps.data()) e = normal(*rng);
  Var sigma = num::exp(num::scale(logvar, 0.5));
  Var z = num::add(mu, num::mul(g.constant(std::move(eps)), sigma));
  return Latent{mu, logvar, z};
}

TopicDistributions TopicModel::topic_distributions(Graph& g, Var z) {
  auto p = [&](const char* s) -> num::Parameter& { return *params_.find(name_ + s); };
  if (config_.mode == TopicMode::ntm) {
    Var theta = num::softmax_rows(num::add(num::matmul(z, g.param(p(".head_w"))), g.param(p(".head_b"))));
    return TopicDistributions{theta, Var()};
  }
  Var ts = num::softmax_rows(
      num::add(num::matmul(z, g.param(p(".head_s_w"))), g.param(p(".head_s_b"))));
  Var to = num::softmax_rows(
      num::add(num::matmul(z, g.param(p(".head_o_w"))), g.param(p(".head_o_b"))));
  return TopicDistributions{ts, to};
}

Var TopicModel::phi(Graph& g, TopicGroup group) { return g.param(phi_param(group)); }

Var TopicModel::word_vectors(Graph& g) {
  return g.param(*params_.find(name_ + ".word_vectors"));
}

Var TopicModel::topic_word_matrix(Graph& g, TopicGroup group) {
  return topic::topic_word_matrix(phi(g, group), word_vectors(g));
}

TopicForward TopicModel::forward(Graph& g, const corpus::BagOfWords& d,
                                 const corpus::BagOfWords* s, num::Rng* rng, bool with_loss) {
  TopicForward out;
  out.latent = infer_latent(g, d, rng);
  out.theta = topic_distributions(g, out.latent.z);
  if (config_.mode == TopicMode::satm) {
    out.t_s = topic_representation(out.theta.informative, phi(g, TopicGroup::informative));
    out.t_o = topic_representation(out.theta.other, phi(g, TopicGroup::other));
    if (with_loss) {
      const corpus::BagOfWords empty;
      out.loss = satm_loss(g, d, s ? *s : empty, out.latent, out.theta,
                           topic_word_matrix(g, TopicGroup::informative),
                           topic_word_matrix(g, TopicGroup::other));
    }
  } else {
    out.t_s = topic_representation(out.theta.informative, phi(g, TopicGroup::general));
    out.t_o = g.constant(Tensor(1, config_.embed_dim));
    if (with_loss)
      out.loss = ntm_loss(g, d, out.latent, out.theta.informative,
                          topic_word_matrix(g, TopicGroup::general));
  }
  return out;
}

TopicState TopicModel::infer_state(const corpus::BagOfWords& d) {
  Graph g(false);
  TopicForward f = forward(g, d, nullptr, nullptr, false);
  TopicState st;
  st.mu = f.latent.mu.value();
  st.logvar = f.latent.logvar.value();
  st.z = f.latent.z.value();
  st.theta_s = f.theta.informative.value();
  if (f.theta.other.valid()) st.theta_o = f.theta.other.value();
  st.t_s = f.t_s.value();
  st.t_o = f.t_o.value();
  return st;
}

Tensor TopicModel::beta(TopicGroup group) {
  Graph g(false);
  return topic_word_matrix(g, group).value();
}

Tensor TopicModel::phi_values(TopicGroup group) const { return phi_param(group).value; }

LossTerms satm_loss(Graph& g, const corpus::BagOfWords& d, const corpus::BagOfWords& s,
                    const Latent& latent, const TopicDistributions& theta, Var beta_s,
                    Var beta_o) {
  if (!corpus::dominated_by(s, d))
    throw std::invalid_argument("satm_loss: s exceeds d for some word");
  const corpus::BagOfWords rest = corpus::subtract(d, s);
  LossTerms t;
  t.informative_nll = bag_nll(g, theta.informative, beta_s, s);
  t.other_nll = bag_nll(g, theta.other, beta_o, rest);
  t.kl = kl_standard_normal(latent.mu, latent.logvar);
  t.total = num::add(num::add(t.informative_nll, t.other_nll), t.kl);
  return t;
}

LossTerms ntm_loss(Graph& g, const corpus::BagOfWords& d, const Latent& latent, Var theta,
                   Var beta) {
  LossTerms t;
  t.informative_nll = bag_nll(g, theta, beta, d);
  t.other_nll = g.constant(Tensor::scalar(0.0));
  t.kl = kl_standard_normal(latent.mu, latent.logvar);
  t.total = num::add(t.informative_nll, t.kl);
  return t;
}

corpus::BagOfWords restrict_to(const corpus::BagOfWords& bag, const corpus::BagOfWords& salient) {
  corpus::BagOfWords out;
  for (const auto& [i, c] : bag.entries())
    if (salient.count(i) > 0) out.add(i, c);
  return out;
}

std::vector<std::uint32_t> top_word_indices(const Tensor& beta, std::size_t topic, std::size_t k,
                                            const corpus::Vocabulary& vocab) {
  if (topic >= beta.rows())
    throw std::out_of_range("topic index " + std::to_string(topic) + " out of range (" +
                            std::to_string(beta.rows()) + " topics)");
  if (beta.cols() != vocab.size()) throw std::invalid_argument("beta/vocabulary size mismatch");
  if (k > beta.cols()) throw std::invalid_argument("k exceeds vocabulary size");
  std::vector<std::uint32_t> order(beta.cols());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      const double pa = beta(topic, a), pb = beta(topic, b);
                      if (pa != pb) return pa > pb;
                      return vocab.token(a) < vocab.token(b);
                    });
  order.resize(k);
  return order;
}

std::vector<std::string> top_words(const Tensor& beta, std::size_t topic, std::size_t k,
                                   const corpus::Vocabulary& vocab) {
  std::vector<std::string> out;
  for (auto i : top_word_indices(beta, topic, k, vocab)) out.push_back(vocab.token(i));
  return out;
}

MultiRoleTopics::MultiRoleTopics(const TopicConfig& config, num::Rng& rng)
    : dialogue_(config, "topic.dialogue", rng),
      customer_(config, "topic.customer", rng),
      agent_(config, "topic.agent", rng) {}

TopicModel& MultiRoleTopics::model(RoleSource r) {
  return const_cast<TopicModel&>(std::as_const(*this).model(r));
}

const TopicModel& MultiRoleTopics::model(RoleSource r) const {
  switch (r) {
    case RoleSource::dialogue: return dialogue_;
    case RoleSource::customer: return customer_;
    case RoleSource::agent: return agent_;
  }
  throw std::invalid_argument("unknown role source");
}

std::vector<num::Parameter*> MultiRoleTopics::all_parameters() {
  std::vector<num::Parameter*> out;
  for (TopicModel* m : {&dialogue_, &customer_, &agent_})
    for (auto* p : m->params().all()) out.push_back(p);
  return out;
}

MultiRoleTopicState infer_multi_role(Graph& g, const corpus::RoleBags& bags,
                                     MultiRoleTopics& models, num::Rng* rng,
                                     const corpus::BagOfWords* salient) {
  MultiRoleTopicState st;
  const bool with_loss = salient != nullptr;
  auto run = [&](RoleSource r, const corpus::BagOfWords& bag, RoleTopicVectors& vecs,
                 std::optional<LossTerms>& loss) {
    corpus::BagOfWords s;
    if (salient) s = restrict_to(bag, *salient);
    TopicForward f = models.model(r).forward(g, bag, salient ? &s : nullptr, rng, with_loss);
    vecs = RoleTopicVectors{f.t_s, f.t_o};
    loss = f.loss;
  };
  run(RoleSource::dialogue, bags.dialogue, st.dialogue, st.loss_dialogue);
  run(RoleSource::customer, bags.customer, st.customer, st.loss_customer);
  run(RoleSource::agent, bags.agent, st.agent, st.loss_agent);
  st.customer_empty = bags.customer.empty();
  st.agent_empty = bags.agent.empty();
  return st;
}

}  // namespace satm::topic

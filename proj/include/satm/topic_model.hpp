#pragma once

#include <optional>
#include <string>
#include <vector>

#include "satm/autodiff.hpp"
#include "satm/corpus.hpp"
#include "satm/optim.hpp"

namespace satm::topic {

using num::Graph;
using num::Tensor;
using num::Var;

enum class TopicMode { ntm, satm };

std::string_view topic_mode_name(TopicMode m);

/// informative: the K_s summary-word topics; other: the K_o remaining
/// topics; general: the single NTM group of K = K_s + K_o topics.
enum class TopicGroup { informative, other, general };

std::string_view topic_group_name(TopicGroup g);

struct TopicConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  /// 0 means "same as the total topic count".
  std::size_t latent = 0;
  std::size_t informative_topics = 3;
  std::size_t other_topics = 2;
  std::size_t embed_dim = 16;
  TopicMode mode = TopicMode::satm;

  std::size_t topic_count() const { return informative_topics + other_topics; }
  std::size_t latent_dim() const { return latent == 0 ? topic_count() : latent; }
  void validate() const;
};

struct Latent {
  Var mu;
  Var logvar;
  Var z;
};

/// SATM: informative (K_s) and other (K_o). NTM: informative holds the
/// general distribution over all K topics and other is invalid.
struct TopicDistributions {
  Var informative;
  Var other;
};

struct LossTerms {
  Var informative_nll;
  Var other_nll;
  Var kl;
  Var total;
};

struct TopicForward {
  Latent latent;
  TopicDistributions theta;
  Var t_s;  // [1,H]
  Var t_o;  // [1,H]; zeros in NTM mode
  std::optional<LossTerms> loss;
};

/// Plain-value snapshot of a forward pass, for inspection and tests.
struct TopicState {
  Tensor mu, logvar, z;
  Tensor theta_s, theta_o;
  Tensor t_s, t_o;
};

// Graph-level building blocks.

/// beta = softmax_rows(phi * e^T), one simplex row per topic.
Var topic_word_matrix(Var phi, Var word_vectors);
/// t = theta * phi, the expected topic vector.
Var topic_representation(Var theta, Var phi);
/// Closed-form KL[N(mu, exp(logvar)) || N(0, I)].
Var kl_standard_normal(Var mu, Var logvar);
/// -sum_w count_w * log((theta * beta)_w). Zero for an empty bag.
Var bag_nll(Graph& g, Var theta, Var beta, const corpus::BagOfWords& bag);

/// One inference network plus topic and word vectors.
class TopicModel {
 public:
  TopicModel(TopicConfig config, std::string name, num::Rng& rng);

  const TopicConfig& config() const { return config_; }
  const std::string& name() const { return name_; }
  num::ParameterSet& params() { return params_; }
  const num::ParameterSet& params() const { return params_; }

  /// z = mu + eps * sigma with eps ~ N(0, I) when rng is given, z = mu otherwise.
  Latent infer_latent(Graph& g, const corpus::BagOfWords& bow, num::Rng* rng);
  TopicDistributions topic_distributions(Graph& g, Var z);
  Var phi(Graph& g, TopicGroup group);
  Var word_vectors(Graph& g);
  Var topic_word_matrix(Graph& g, TopicGroup group);

  /// Full pass. When with_loss is set, the loss follows the model's mode:
  /// SATM splits d into s (informative) and d - s (other); NTM ignores s.
  TopicForward forward(Graph& g, const corpus::BagOfWords& d, const corpus::BagOfWords* s,
                       num::Rng* rng, bool with_loss);

  TopicState infer_state(const corpus::BagOfWords& d);
  Tensor beta(TopicGroup group);
  Tensor phi_values(TopicGroup group) const;
  std::vector<TopicGroup> groups() const;

 private:
  num::Parameter& phi_param(TopicGroup group);
  const num::Parameter& phi_param(TopicGroup group) const;

  TopicConfig config_;
  std::string name_;
  num::ParameterSet params_;
};

/// SATM loss: informative NLL over s, other NLL over d - s, plus KL.
/// Throws std::invalid_argument when s is not dominated by d. An empty s
/// contributes zero to the informative term.
LossTerms satm_loss(Graph& g, const corpus::BagOfWords& d, const corpus::BagOfWords& s,
                    const Latent& latent, const TopicDistributions& theta, Var beta_s,
                    Var beta_o);
LossTerms ntm_loss(Graph& g, const corpus::BagOfWords& d, const Latent& latent,
                   Var theta, Var beta);

/// Words of `bag` restricted to the word types present in `salient`.
corpus::BagOfWords restrict_to(const corpus::BagOfWords& bag, const corpus::BagOfWords& salient);

/// Indices of the k most probable words of one beta row; ties go to the
/// lexicographically smaller token.
std::vector<std::uint32_t> top_word_indices(const Tensor& beta, std::size_t topic, std::size_t k,
                                            const corpus::Vocabulary& vocab);
std::vector<std::string> top_words(const Tensor& beta, std::size_t topic, std::size_t k,
                                   const corpus::Vocabulary& vocab);

enum class RoleSource { dialogue, customer, agent };

struct RoleTopicVectors {
  Var t_s;
  Var t_o;
};

struct MultiRoleTopicState {
  RoleTopicVectors dialogue;
  RoleTopicVectors customer;
  RoleTopicVectors agent;
  bool customer_empty = false;
  bool agent_empty = false;
  /// Topic losses (L_T, L_T^C, L_T^A) when requested.
  std::optional<LossTerms> loss_dialogue, loss_customer, loss_agent;
};

/// Three independent topic models: whole dialogue, customer, agent.
class MultiRoleTopics {
 public:
  MultiRoleTopics(const TopicConfig& config, num::Rng& rng);

  TopicModel& model(RoleSource r);
  const TopicModel& model(RoleSource r) const;
  std::vector<num::Parameter*> all_parameters();
  const TopicConfig& config() const { return dialogue_.config(); }

 private:
  TopicModel dialogue_;
  TopicModel customer_;
  TopicModel agent_;
};

/// Runs the three role models. With `salient` set (the dialogue's s bag) the
/// per-role losses are attached; each role uses its own bag restricted to s.
MultiRoleTopicState infer_multi_role(Graph& g, const corpus::RoleBags& bags,
                                     MultiRoleTopics& models, num::Rng* rng,
                                     const corpus::BagOfWords* salient);

}  // namespace satm::topic

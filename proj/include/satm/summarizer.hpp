#pragma once

#include <optional>
#include <string>
#include <vector>

#include "satm/attention.hpp"
#include "satm/corpus.hpp"
#include "satm/topic_model.hpp"

namespace satm::summ {

using num::Graph;
using num::Tensor;
using num::Var;

struct SummarizerConfig {
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t ff_dim = 64;
  std::size_t word_layers = 1;
  std::size_t utterance_layers = 1;
  std::size_t decoder_layers = 1;
  /// Width H of the topic vectors feeding the attention sites.
  std::size_t topic_dim = 16;
  std::size_t max_utterances = 32;
  std::size_t max_utterance_tokens = 32;
  std::size_t max_extract = 4;
  /// Encoder and refiner share one word embedding table.
  bool share_embeddings = true;

  void validate() const;
};

/// Per-role contrastive inputs: row 0 customer, row 1 agent, each [t_s; t_s^C; 0]
/// or [t_s; 0; t_s^A] (and the same for the other-topic vectors).
struct TopicTables {
  Var tau_s;  // [2, 3H]
  Var tau_o;  // [2, 3H]
};

struct RoleTau {
  Var tau_s;  // [1, 3H]
  Var tau_o;
};

RoleTau build_role_topic_vectors(Graph& g, corpus::Role role,
                                 const topic::MultiRoleTopicState& topics);
/// Zero tables when topics is null.
TopicTables make_topic_tables(Graph& g, const topic::MultiRoleTopicState* topics,
                              std::size_t topic_dim);
/// Row i is the table row for roles[i].
Var role_rows(Var table, const std::vector<corpus::Role>& roles);

struct EncodedDialogue {
  Var utterances;                 // [M,d] after the utterance-level encoder
  Var utterance_inputs;           // [M,d] word-level states at position 0
  std::vector<Var> words;         // per utterance [N_i,d], positions 1..N_i
  std::vector<corpus::Role> roles;
  std::vector<std::vector<std::uint32_t>> token_ids;  // sequence-space ids
  std::size_t size() const { return roles.size(); }
};

enum class ExtractMode { greedy, sample };

struct Extraction {
  /// Selected utterances in the order they were picked.
  std::vector<std::size_t> indices;
  /// Pointer actions actually taken, including the stop index when chosen.
  std::vector<std::size_t> actions;
  bool used_fallback = false;
};

struct DecodeConfig {
  std::size_t beam_width = 1;
  std::size_t max_length = 20;
  std::size_t min_length = 1;
};

struct RefinerMemory {
  Var states;                            // [J,d]
  std::vector<corpus::Role> roles;
  std::vector<nn::TopicAttention::Memory> sites;  // one per decoder layer
};

class Summarizer {
 public:
  Summarizer(SummarizerConfig config, corpus::Vocabulary vocab, num::Rng& rng);
  Summarizer(const Summarizer&) = delete;
  Summarizer& operator=(const Summarizer&) = delete;

  const SummarizerConfig& config() const { return config_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }
  num::ParameterSet& params() { return params_; }
  const num::ParameterSet& params() const { return params_; }

  EncodedDialogue encode(Graph& g, const corpus::Dialogue& d) const;

  /// Pointer index that means "stop" for a dialogue with m utterances.
  static std::size_t stop_index(std::size_t m) { return m; }

  /// Extractor log-probabilities for each step given the previously taken
  /// actions: [prefix.size()+1, M+1]. Already-chosen indices are masked.
  Var extractor_log_probs(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                          const std::vector<std::size_t>& prefix,
                          nn::AttentionTrace* trace = nullptr) const;
  /// Extractor decoder output rows for start + prefix, before the pointer.
  Var extractor_states(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                       const std::vector<std::size_t>& prefix) const;
  /// Mean negative log-likelihood of the action sequence (which must end with
  /// stop unless it hits max_extract).
  Var extractor_nll(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                    const std::vector<std::size_t>& actions) const;
  /// Sum of log-probabilities of the action sequence.
  Var extractor_log_likelihood(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                               const std::vector<std::size_t>& actions) const;
  /// Step-by-step decode. Sampling needs rng. When stop comes first, the
  /// utterance with the largest first-step attention weight is used instead.
  Extraction extract(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                     ExtractMode mode, num::Rng* rng, nn::AttentionTrace* trace = nullptr) const;

  RefinerMemory refiner_memory(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                               std::vector<std::size_t> extracted) const;
  /// Logits [inputs.size(), |seq vocab|] for teacher-forced inputs.
  Var refiner_logits(Graph& g, const RefinerMemory& mem, const std::vector<std::uint32_t>& inputs,
                     nn::AttentionTrace* trace = nullptr) const;
  /// Mean token cross-entropy of target (eos appended) under teacher forcing.
  Var refiner_nll(Graph& g, const RefinerMemory& mem,
                  const std::vector<std::uint32_t>& target) const;
  /// Beam search; token ids without the end marker. Special tokens other
  /// than the end marker are never produced, and the end marker only after
  /// min_length tokens.
  std::vector<std::uint32_t> decode(Graph& g, const RefinerMemory& mem,
                                    const DecodeConfig& cfg) const;

  /// Plain argmax loop under the same token constraints as decode().
  std::vector<std::uint32_t> greedy_decode(Graph& g, const RefinerMemory& mem,
                                           std::size_t max_length, std::size_t min_length) const;
  /// Constrained next-token log-probabilities after bos + prefix: [1, |seq vocab|].
  Tensor next_token_log_probs(Graph& g, const RefinerMemory& mem,
                              const std::vector<std::uint32_t>& prefix,
                              std::size_t min_length) const;

  std::vector<std::uint32_t> to_ids(const std::vector<std::string>& tokens) const;
  std::vector<std::string> to_tokens(const std::vector<std::uint32_t>& ids) const;

 private:
  Var positions(Graph& g, std::size_t n) const;
  Var run_extractor_decoder(Graph& g, const EncodedDialogue& enc,
                            const std::vector<nn::TopicAttention::Memory>& sites,
                            const std::vector<std::size_t>& prefix, nn::AttentionTrace* trace) const;
  std::vector<nn::TopicAttention::Memory> extractor_sites(Graph& g, const EncodedDialogue& enc,
                                                          const TopicTables& topics) const;
  Var pointer_log_probs(Graph& g, const EncodedDialogue& enc, Var states,
                        const std::vector<std::size_t>& prefix) const;

  SummarizerConfig config_;
  corpus::Vocabulary vocab_;
  num::ParameterSet params_;

  num::Parameter* embed_ = nullptr;
  num::Parameter* refiner_embed_ = nullptr;  // == embed_ when shared
  num::Parameter* role_embed_ = nullptr;
  num::Parameter* utt_pos_ = nullptr;
  num::Parameter* ext_start_ = nullptr;
  num::Parameter* ext_stop_ = nullptr;
  nn::Linear pointer_;
  std::vector<nn::EncoderLayer> word_layers_;
  std::vector<nn::EncoderLayer> utt_layers_;
  std::vector<nn::DecoderLayer> ext_layers_;
  std::vector<nn::DecoderLayer> ref_layers_;
  Tensor positions_;
};

}  // namespace satm::summ

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "satm/corpus.hpp"
#include "satm/metrics.hpp"
#include "satm/optim.hpp"
#include "satm/summarizer.hpp"
#include "satm/topic_model.hpp"

namespace satm::train {

using corpus::Dialogue;
using eval::RewardMetric;
using eval::Tokens;

struct TrainConfig {
  // Topic models.
  bool use_topics = true;  // false: no topic models at all
  topic::TopicMode topic_mode = topic::TopicMode::satm;
  std::size_t informative_topics = 3;
  std::size_t other_topics = 2;
  std::size_t topic_hidden = 64;
  std::size_t topic_dim = 16;  // H
  /// Feed zero topic vectors to the attention sites (topic models still train).
  bool detach_topics = false;
  double lambda = 1.0;

  summ::SummarizerConfig summarizer;

  double lr_pretrain = 3e-3;
  double lr_rl = 1e-3;
  double lr_topic = 2e-3;
  double clip_norm = 2.0;
  std::size_t batch_size = 8;
  std::size_t epochs_extractor = 20;
  std::size_t epochs_refiner = 40;
  std::size_t epochs_topic = 100;
  std::size_t epochs_joint = 10;
  std::size_t max_extract = 4;
  std::size_t max_summary_tokens = 20;
  RewardMetric reward_metric = RewardMetric::rouge_l;
  RewardMetric oracle_metric = RewardMetric::rouge_1;
  /// When set, the joint phase starts with a sampled finite-difference check
  /// of the joint loss and logs the worst relative error.
  bool gradient_check = false;
  std::uint64_t seed = 1;
  std::uint32_t min_count = 1;

  void validate() const;
  topic::TopicConfig topic_config(std::size_t vocab_size) const;
};

// ---------------------------------------------------------------------------
// Ext-Oracle

struct OracleResult {
  std::vector<std::size_t> indices;  // dialogue order
  double score = 0.0;
};

/// Tokens of the selected utterances joined in dialogue order.
Tokens selection_tokens(const Dialogue& d, std::vector<std::size_t> indices);

/// Greedy selection: keep adding the utterance that most improves the metric
/// against the summary; stop when nothing improves or max_count is reached.
OracleResult ext_oracle(const Dialogue& d, const Tokens& summary, RewardMetric metric,
                        std::size_t max_count);
/// Best score achievable with exactly one utterance.
OracleResult best_single_utterance(const Dialogue& d, const Tokens& summary, RewardMetric metric);

// ---------------------------------------------------------------------------
// Model bundle

/// Vocabulary, summarizer and (optionally) the three role topic models.
struct Model {
  TrainConfig config;
  corpus::Vocabulary vocab;
  std::unique_ptr<summ::Summarizer> summarizer;
  std::unique_ptr<topic::MultiRoleTopics> topics;

  static std::unique_ptr<Model> create(const TrainConfig& config, corpus::Vocabulary vocab);
  std::vector<num::Parameter*> all_parameters();
  bool feeds_topics() const { return topics && !config.detach_topics; }
};

struct SummaryOutput {
  std::vector<std::size_t> extracted;  // dialogue order
  Tokens extract_tokens;
  Tokens summary;
  nn::AttentionTrace extractor_trace;
};

/// Deterministic inference: topic means, greedy extraction, refiner decode.
SummaryOutput summarize(Model& model, const Dialogue& d, const summ::DecodeConfig& decode);

// ---------------------------------------------------------------------------
// Training

enum class Phase { topic, extractor, refiner, joint, done };
std::string_view phase_name(Phase p);
Phase parse_phase(std::string_view s);

struct RewardRecord {
  std::vector<double> step_rewards;  // one per extraction action
  double reward = 0.0;               // sampled rollout
  double baseline = 0.0;             // greedy rollout
  double advantage = 0.0;
};

struct StepLog {
  Phase phase = Phase::extractor;
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double loss_s = 0.0;
  double loss_t = 0.0;
  double loss_t_c = 0.0;
  double loss_t_a = 0.0;
  double reward = 0.0;
  double total = 0.0;
};

std::string format_log(const StepLog& s);

struct EpochStats {
  Phase phase = Phase::extractor;
  std::size_t epoch = 0;
  double loss = 0.0;      // mean per-dialogue loss
  double accuracy = 0.0;  // extractor: exact label match; refiner: token accuracy
  double reward = 0.0;    // joint: mean sampled reward
};

/// Resumable progress marker.
struct Progress {
  Phase phase = Phase::topic;
  std::size_t epoch = 0;  // completed epochs inside phase
  std::uint64_t step = 0;
};

class NumericDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owns the optimisers and random streams for one training run.
class Trainer {
 public:
  Trainer(Model& model, std::vector<Dialogue> train);

  void set_log(std::ostream* log) { log_ = log; }
  void set_epoch_callback(std::function<void(const Trainer&)> cb) { on_epoch_ = std::move(cb); }

  /// Runs every remaining phase in order.
  void run();
  /// Runs a single epoch of the current phase; returns false once done.
  bool run_epoch();

  EpochStats pretrain_extractor_epoch();
  EpochStats pretrain_refiner_epoch();
  EpochStats topic_epoch();
  EpochStats joint_epoch();

  /// Self-critical rollout for one dialogue inside graph g. Returns the
  /// policy loss -advantage * log p(sampled actions).
  num::Var rl_loss(num::Graph& g, const Dialogue& d, const summ::EncodedDialogue& enc,
                   const summ::TopicTables& tables, RewardRecord& record);

  /// Mean extractor/refiner teacher-forced losses over a corpus (no update).
  double extractor_loss(const std::vector<Dialogue>& corpus);
  double refiner_loss(const std::vector<Dialogue>& corpus);

  const Progress& progress() const { return progress_; }
  const std::vector<EpochStats>& history() const { return history_; }
  const Model& model() const { return model_; }
  std::size_t train_size() const { return items_.size(); }

  // Checkpoint support.
  struct OptimState {
    std::string name;
    std::uint64_t steps = 0;
    std::vector<num::Tensor> m, v;
  };
  std::vector<OptimState> optimizer_state() const;
  std::string rng_state() const;
  void restore(const Progress& p, const std::vector<OptimState>& optim, const std::string& rng);

  const std::vector<std::size_t>& oracle_labels(std::size_t i) const { return items_[i].oracle; }

 private:
  struct Item {
    Dialogue dialogue;
    corpus::RoleBags bags;
    corpus::BagOfWords salient;
    std::vector<std::size_t> oracle;  // pseudo labels, dialogue order
    std::vector<std::uint32_t> target;
    Tokens summary;
  };

  std::vector<std::size_t> epoch_order();
  std::vector<std::size_t> oracle_actions(const Item& it, std::size_t m) const;
  num::Adam& optimizer(const std::string& name);
  void begin_phase(Phase p);
  void emit(const StepLog& s);
  void finish_epoch(EpochStats st);

  Model& model_;
  std::vector<Item> items_;
  std::ostream* log_ = nullptr;
  std::function<void(const Trainer&)> on_epoch_;
  Progress progress_;
  std::vector<EpochStats> history_;
  std::vector<std::pair<std::string, std::unique_ptr<num::Adam>>> optimizers_;
  std::optional<Phase> optimizers_for_;
  num::Rng topic_rng_;
  num::Rng policy_rng_;
};

/// Seeded stream k of a run; streams are independent of each other.
num::Rng make_stream(std::uint64_t seed, std::uint64_t k);

/// Sampled central-difference check over `samples` random parameter entries.
double sampled_gradient_check(const std::function<num::Var(num::Graph&)>& build,
                              const std::vector<num::Parameter*>& params, std::size_t samples,
                              num::Rng& rng, double h = 1e-5);

}  // namespace satm::train

#include "satm/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace satm::train {

using num::Graph;
using num::Tensor;
using num::Var;
using summ::Summarizer;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (informative_topics == 0) fail("informative_topics (K_s) must be >= 1");
  if (topic_mode == topic::TopicMode::satm && other_topics == 0)
    fail("other_topics (K_o) must be >= 1 for satm");
  if (topic_hidden == 0 || topic_dim == 0) fail("topic sizes must be positive");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (max_extract == 0) fail("max_extract must be >= 1");
  if (max_summary_tokens == 0) fail("max_summary_tokens must be >= 1");
  for (double lr : {lr_pretrain, lr_rl, lr_topic})
    if (!(lr >= 0.0)) fail("learning rates must be >= 0");
  summ::SummarizerConfig s = summarizer;
  s.topic_dim = topic_dim;
  s.max_extract = max_extract;
  s.validate();
}

topic::TopicConfig TrainConfig::topic_config(std::size_t vocab_size) const {
  topic::TopicConfig tc;
  tc.vocab_size = vocab_size;
  tc.hidden = topic_hidden;
  tc.informative_topics = informative_topics;
  tc.other_topics = other_topics;
  tc.embed_dim = topic_dim;
  tc.mode = topic_mode;
  return tc;
}

num::Rng make_stream(std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), 0x5a17u};
  return num::Rng(seq);
}

// ---------------------------------------------------------------------------

Tokens selection_tokens(const Dialogue& d, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  Tokens out;
  for (std::size_t i : indices) {
    const auto& t = d.utterances.at(i).tokens;
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

OracleResult ext_oracle(const Dialogue& d, const Tokens& summary, RewardMetric metric,
                        std::size_t max_count) {
  OracleResult res;
  std::vector<bool> used(d.utterances.size(), false);
  while (res.indices.size() < max_count) {
    double best = res.score;
    std::size_t pick = d.utterances.size();
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
      if (used[i]) continue;
      auto cand = res.indices;
      cand.push_back(i);
      const double s = eval::metric_f1(metric, selection_tokens(d, cand), summary);
      if (s > best) {
        best = s;
        pick = i;
      }
    }
    if (pick == d.utterances.size()) break;
    used[pick] = true;
    res.indices.push_back(pick);
    res.score = best;
  }
  std::sort(res.indices.begin(), res.indices.end());
  return res;
}

OracleResult best_single_utterance(const Dialogue& d, const Tokens& summary,
                                   RewardMetric metric) {
  OracleResult res;
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const double s = eval::metric_f1(metric, d.utterances[i].tokens, summary);
    if (res.indices.empty() || s > res.score) {
      res.indices = {i};
      res.score = s;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> Model::create(const TrainConfig& config, corpus::Vocabulary vocab) {
  config.validate();
  auto m = std::make_unique<Model>();
  m->config = config;
  m->config.summarizer.topic_dim = config.topic_dim;
  m->config.summarizer.max_extract = config.max_extract;
  m->vocab = std::move(vocab);
  num::Rng sum_rng = make_stream(config.seed, 0);
  m->summarizer = std::make_unique<Summarizer>(m->config.summarizer, m->vocab, sum_rng);
  if (config.use_topics) {
    num::Rng topic_rng = make_stream(config.seed, 1);
    m->topics = std::make_unique<topic::MultiRoleTopics>(config.topic_config(m->vocab.size()),
                                                         topic_rng);
  }
  return m;
}

std::vector<num::Parameter*> Model::all_parameters() {
  auto out = summarizer->params().all();
  if (topics)
    for (auto* p : topics->all_parameters()) out.push_back(p);
  return out;
}

namespace {

// Topic vectors of a dialogue at the posterior mean, as constants of g.
summ::TopicTables constant_topic_tables(Graph& g, Model& model, const corpus::RoleBags& bags) {
  const std::size_t H = model.config.topic_dim;
  if (!model.feeds_topics()) return summ::make_topic_tables(g, nullptr, H);
  Graph tmp(false);
  auto st = topic::infer_multi_role(tmp, bags, *model.topics, nullptr, nullptr);
  summ::TopicTables t = summ::make_topic_tables(tmp, &st, H);
  return summ::TopicTables{g.constant(t.tau_s.value()), g.constant(t.tau_o.value())};
}

summ::TopicTables copy_tables(Graph& g, const summ::TopicTables& t) {
  return summ::TopicTables{g.constant(t.tau_s.value()), g.constant(t.tau_o.value())};
}

}  // namespace

SummaryOutput summarize(Model& model, const Dialogue& d, const summ::DecodeConfig& decode) {
  Graph g(false);
  const auto& sm = *model.summarizer;
  auto enc = sm.encode(g, d);
  summ::TopicTables tables = summ::make_topic_tables(g, nullptr, model.config.topic_dim);
  if (model.feeds_topics()) {
    auto st = topic::infer_multi_role(g, corpus::bags_for_dialogue(d, model.vocab),
                                      *model.topics, nullptr, nullptr);
    tables = summ::make_topic_tables(g, &st, model.config.topic_dim);
  }
  SummaryOutput out;
  auto ex = sm.extract(g, enc, tables, summ::ExtractMode::greedy, nullptr, &out.extractor_trace);
  out.extracted = ex.indices;
  std::sort(out.extracted.begin(), out.extracted.end());
  out.extract_tokens = selection_tokens(d, out.extracted);
  auto mem = sm.refiner_memory(g, enc, tables, out.extracted);
  out.summary = sm.to_tokens(sm.decode(g, mem, decode));
  return out;
}

// ---------------------------------------------------------------------------

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::extractor: return "extractor";
    case Phase::refiner: return "refiner";
    case Phase::topic: return "topic";
    case Phase::joint: return "joint";
    case Phase::done: return "done";
  }
  return "?";
}

Phase parse_phase(std::string_view s) {
  for (Phase p : {Phase::extractor, Phase::refiner, Phase::topic, Phase::joint, Phase::done})
    if (phase_name(p) == s) return p;
  throw std::invalid_argument("unknown phase '" + std::string(s) + "'");
}

std::string format_log(const StepLog& s) {
  std::ostringstream o;
  o << std::setprecision(17) << "phase=" << phase_name(s.phase) << " epoch=" << s.epoch
    << " step=" << s.step << " L_S=" << s.loss_s << " L_T=" << s.loss_t << " L_T_C=" << s.loss_t_c
    << " L_T_A=" << s.loss_t_a << " reward=" << s.reward << " loss=" << s.total;
  return o.str();
}

Trainer::Trainer(Model& model, std::vector<Dialogue> train)
    : model_(model),
      topic_rng_(make_stream(model.config.seed, 3)),
      policy_rng_(make_stream(model.config.seed, 4)) {
  if (train.empty()) throw std::invalid_argument("training corpus is empty");
  const auto& cfg = model_.config;
  for (auto& d : train) {
    if (!d.summary)
      throw std::invalid_argument("training dialogue '" + d.id + "' has no reference summary");
    Item it;
    it.bags = corpus::bags_for_dialogue(d, model_.vocab);
    it.salient = corpus::summary_subset(d, model_.vocab);
    it.summary = *d.summary;
    const std::size_t m = std::min(d.utterances.size(), cfg.summarizer.max_utterances);
    Dialogue clipped = d;
    clipped.utterances.resize(m);
    it.oracle = ext_oracle(clipped, it.summary, cfg.oracle_metric, cfg.max_extract).indices;
    if (it.oracle.empty()) it.oracle = {0};
    it.target = model_.summarizer->to_ids(it.summary);
    if (it.target.size() > cfg.max_summary_tokens) it.target.resize(cfg.max_summary_tokens);
    it.dialogue = std::move(d);
    items_.push_back(std::move(it));
  }
}

// Each (phase, epoch) shuffles with its own stream, so skipping or resuming a
// phase never shifts the data order of the others.
std::vector<std::size_t> Trainer::epoch_order() {
  std::vector<std::size_t> order(items_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto seed = model_.config.seed;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u,
                    static_cast<std::uint32_t>(progress_.phase),
                    static_cast<std::uint32_t>(progress_.epoch)};
  num::Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::size_t> Trainer::oracle_actions(const Item& it, std::size_t m) const {
  std::vector<std::size_t> a = it.oracle;
  if (a.size() < std::min(model_.config.max_extract, m)) a.push_back(Summarizer::stop_index(m));
  return a;
}

num::Adam& Trainer::optimizer(const std::string& name) {
  for (auto& [n, o] : optimizers_)
    if (n == name) return *o;
  throw std::logic_error("no optimizer named " + name);
}

void Trainer::begin_phase(Phase p) {
  const auto& cfg = model_.config;
  optimizers_.clear();
  auto make = [&](const std::string& name, std::vector<num::Parameter*> params, double lr) {
    num::AdamConfig ac;
    ac.learning_rate = lr;
    ac.clip_norm = cfg.clip_norm;
    optimizers_.emplace_back(name, std::make_unique<num::Adam>(std::move(params), ac));
  };
  switch (p) {
    case Phase::extractor:
    case Phase::refiner:
      make("summarizer", model_.summarizer->params().all(), cfg.lr_pretrain);
      break;
    case Phase::topic:
      make("topic", model_.topics->all_parameters(), cfg.lr_topic);
      break;
    case Phase::joint:
      // One optimiser and one clip over everything: the joint loss is a single scalar.
      make("joint", model_.all_parameters(), cfg.lr_rl);
      break;
    case Phase::done:
      break;
  }
  optimizers_for_ = p;
}

void Trainer::emit(const StepLog& s) {
  if (log_) *log_ << format_log(s) << '\n';
}

void Trainer::finish_epoch(EpochStats st) {
  history_.push_back(st);
  ++progress_.epoch;
  if (on_epoch_) on_epoch_(*this);
}

namespace {

std::size_t epochs_for(const TrainConfig& c, Phase p, bool has_topics) {
  switch (p) {
    case Phase::extractor: return c.epochs_extractor;
    case Phase::refiner: return c.epochs_refiner;
    case Phase::topic: return has_topics ? c.epochs_topic : 0;
    case Phase::joint: return c.epochs_joint;
    case Phase::done: return 0;
  }
  return 0;
}

// Topic warmup touches only topic parameters, so running it first changes
// nothing for it but lets both pretraining phases see trained topic vectors.
Phase next_phase(Phase p) {
  switch (p) {
    case Phase::topic: return Phase::extractor;
    case Phase::extractor: return Phase::refiner;
    case Phase::refiner: return Phase::joint;
    default: return Phase::done;
  }
}

}  // namespace

bool Trainer::run_epoch() {
  // Progress only moves on when another epoch will actually run, so a finished
  // run still records its last phase and can be extended by raising its epochs.
  Progress next = progress_;
  while (next.phase != Phase::done &&
         next.epoch >= epochs_for(model_.config, next.phase, model_.topics != nullptr)) {
    next.phase = next_phase(next.phase);
    next.epoch = 0;
  }
  if (next.phase == Phase::done) return false;
  progress_ = next;
  if (optimizers_for_ != progress_.phase) begin_phase(progress_.phase);
  try {
    switch (progress_.phase) {
      case Phase::extractor: pretrain_extractor_epoch(); break;
      case Phase::refiner: pretrain_refiner_epoch(); break;
      case Phase::topic: topic_epoch(); break;
      case Phase::joint: joint_epoch(); break;
      case Phase::done: break;
    }
  } catch (const num::NumericError& e) {
    throw NumericDivergence("training diverged in phase " +
                            std::string(phase_name(progress_.phase)) + ", epoch " +
                            std::to_string(progress_.epoch + 1) + ", step " +
                            std::to_string(progress_.step) + ": " + e.what());
  }
  return true;
}

void Trainer::run() {
  while (run_epoch()) {
  }
}

EpochStats Trainer::pretrain_extractor_epoch() {
  const auto& sm = *model_.summarizer;
  num::Adam& opt = optimizer("summarizer");
  const auto order = epoch_order();
  const std::size_t B = model_.config.batch_size;
  EpochStats st{Phase::extractor, progress_.epoch + 1};
  for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
    const std::size_t n = std::min(B, order.size() - b0);
    double batch_loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Item& it = items_[order[b0 + k]];
      Graph g;
      auto enc = sm.encode(g, it.dialogue);
      auto tables = constant_topic_tables(g, model_, it.bags);
      const auto actions = oracle_actions(it, enc.size());
      std::vector<std::size_t> prefix(actions.begin(), actions.end() - 1);
      Var lp = sm.extractor_log_probs(g, enc, tables, prefix);
      Var loss = num::scale(num::sum(num::select_cols(lp, actions)),
                            -1.0 / static_cast<double>(actions.size()));
      bool exact = true;
      const Tensor& lpv = lp.value();
      for (std::size_t t = 0; t < actions.size(); ++t) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < lpv.cols(); ++c)
          if (lpv(t, c) > lpv(t, best)) best = c;
        exact = exact && best == actions[t];
      }
      st.accuracy += exact ? 1.0 : 0.0;
      batch_loss += loss.value().item();
      g.backward(num::scale(loss, 1.0 / static_cast<double>(n)));
    }
    opt.step();
    ++progress_.step;
    st.loss += batch_loss;
    emit(StepLog{Phase::extractor, progress_.step, st.epoch, batch_loss / n, 0, 0, 0, 0,
                 batch_loss / n});
  }
  st.loss /= static_cast<double>(order.size());
  st.accuracy /= static_cast<double>(order.size());
  finish_epoch(st);
  return st;
}

EpochStats Trainer::pretrain_refiner_epoch() {
  const auto& sm = *model_.summarizer;
  num::Adam& opt = optimizer("summarizer");
  const auto order = epoch_order();
  const std::size_t B = model_.config.batch_size;
  EpochStats st{Phase::refiner, progress_.epoch + 1};
  std::size_t tokens = 0;
  for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
    const std::size_t n = std::min(B, order.size() - b0);
    double batch_loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Item& it = items_[order[b0 + k]];
      Graph g;
      auto enc = sm.encode(g, it.dialogue);
      auto tables = constant_topic_tables(g, model_, it.bags);
      auto mem = sm.refiner_memory(g, enc, tables, it.oracle);
      std::vector<std::uint32_t> inputs{corpus::Vocabulary::kBos};
      inputs.insert(inputs.end(), it.target.begin(), it.target.end());
      std::vector<std::size_t> gold(it.target.begin(), it.target.end());
      gold.push_back(corpus::Vocabulary::kEos);
      Var lp = num::log_softmax_rows(sm.refiner_logits(g, mem, inputs));
      Var loss = num::scale(num::sum(num::select_cols(lp, gold)),
                            -1.0 / static_cast<double>(gold.size()));
      const Tensor& lpv = lp.value();
      for (std::size_t t = 0; t < gold.size(); ++t) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < lpv.cols(); ++c)
          if (lpv(t, c) > lpv(t, best)) best = c;
        st.accuracy += best == gold[t] ? 1.0 : 0.0;
      }
      tokens += gold.size();
      batch_loss += loss.value().item();
      g.backward(num::scale(loss, 1.0 / static_cast<double>(n)));
    }
    opt.step();
    ++progress_.step;
    st.loss += batch_loss;
    emit(StepLog{Phase::refiner, progress_.step, st.epoch, batch_loss / n, 0, 0, 0, 0,
                 batch_loss / n});
  }
  st.loss /= static_cast<double>(order.size());
  st.accuracy /= static_cast<double>(tokens);
  finish_epoch(st);
  return st;
}

EpochStats Trainer::topic_epoch() {
  num::Adam& opt = optimizer("topic");
  const auto order = epoch_order();
  const std::size_t B = model_.config.batch_size;
  EpochStats st{Phase::topic, progress_.epoch + 1};
  for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
    const std::size_t n = std::min(B, order.size() - b0);
    StepLog log{Phase::topic, 0, st.epoch};
    for (std::size_t k = 0; k < n; ++k) {
      const Item& it = items_[order[b0 + k]];
      Graph g;
      auto ts = topic::infer_multi_role(g, it.bags, *model_.topics, &topic_rng_, &it.salient);
      Var lt = ts.loss_dialogue->total, lc = ts.loss_customer->total, la = ts.loss_agent->total;
      Var sum = num::add(num::add(lt, lc), la);
      log.loss_t += lt.value().item() / n;
      log.loss_t_c += lc.value().item() / n;
      log.loss_t_a += la.value().item() / n;
      g.backward(num::scale(sum, 1.0 / static_cast<double>(n)));
    }
    opt.step();
    log.step = ++progress_.step;
    log.total = log.loss_t + log.loss_t_c + log.loss_t_a;
    st.loss += log.total * n;
    emit(log);
  }
  st.loss /= static_cast<double>(order.size());
  finish_epoch(st);
  return st;
}

Var Trainer::rl_loss(Graph& g, const Dialogue& d, const summ::EncodedDialogue& enc,
                     const summ::TopicTables& tables, RewardRecord& record) {
  const auto& sm = *model_.summarizer;
  const auto& cfg = model_.config;
  // Rollouts only need values, so they run in a separate non-recording graph.
  Graph roll(false);
  auto renc = sm.encode(roll, d);
  auto rtab = copy_tables(roll, tables);
  auto reward_of = [&](const summ::Extraction& ex) {
    auto mem = sm.refiner_memory(roll, renc, rtab, ex.indices);
    auto out = sm.to_tokens(sm.greedy_decode(roll, mem, cfg.max_summary_tokens, 1));
    return eval::metric_f1(cfg.reward_metric, out, *d.summary);
  };
  auto greedy = sm.extract(roll, renc, rtab, summ::ExtractMode::greedy, nullptr);
  auto sample = sm.extract(roll, renc, rtab, summ::ExtractMode::sample, &policy_rng_);
  record.baseline = reward_of(greedy);
  record.reward = sample.actions == greedy.actions ? record.baseline : reward_of(sample);
  record.advantage = record.reward - record.baseline;
  record.step_rewards.assign(sample.actions.size(), record.reward);
  if (record.advantage == 0.0) return g.constant(Tensor::scalar(0.0));
  return num::scale(sm.extractor_log_likelihood(g, enc, tables, sample.actions),
                    -record.advantage);
}

EpochStats Trainer::joint_epoch() {
  const auto& sm = *model_.summarizer;
  const auto& cfg = model_.config;
  num::Adam& opt = optimizer("joint");
  const auto order = epoch_order();
  const std::size_t B = cfg.batch_size;
  EpochStats st{Phase::joint, progress_.epoch + 1};

  if (cfg.gradient_check && progress_.epoch == 0) {
    const Item& it = items_[order.front()];
    const num::Rng saved = topic_rng_;
    auto build = [&](Graph& g) {
      num::Rng eps = saved;
      auto enc = sm.encode(g, it.dialogue);
      summ::TopicTables tables = summ::make_topic_tables(g, nullptr, cfg.topic_dim);
      Var lt = g.constant(Tensor::scalar(0.0));
      if (model_.topics) {
        auto ts = topic::infer_multi_role(g, it.bags, *model_.topics, &eps, &it.salient);
        if (model_.feeds_topics()) tables = summ::make_topic_tables(g, &ts, cfg.topic_dim);
        lt = num::add(num::add(ts.loss_dialogue->total, ts.loss_customer->total),
                      ts.loss_agent->total);
      }
      Var ext = sm.extractor_nll(g, enc, tables, oracle_actions(it, enc.size()));
      Var ref = sm.refiner_nll(g, sm.refiner_memory(g, enc, tables, it.oracle), it.target);
      return num::add(num::add(ext, ref), num::scale(lt, cfg.lambda));
    };
    num::Rng pick = make_stream(cfg.seed, 5);
    const double err = sampled_gradient_check(build, model_.all_parameters(), 32, pick);
    for (auto* p : model_.all_parameters()) p->grad.fill(0.0);
    if (log_) *log_ << "gradcheck phase=joint samples=32 max_rel_error=" << err << '\n';
  }

  double reward_sum = 0.0;
  for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
    const std::size_t n = std::min(B, order.size() - b0);
    StepLog log{Phase::joint, 0, st.epoch};
    for (std::size_t k = 0; k < n; ++k) {
      const Item& it = items_[order[b0 + k]];
      Graph g;
      auto enc = sm.encode(g, it.dialogue);
      summ::TopicTables tables = summ::make_topic_tables(g, nullptr, cfg.topic_dim);
      std::optional<topic::MultiRoleTopicState> ts;
      if (model_.topics) {
        ts = topic::infer_multi_role(g, it.bags, *model_.topics, &topic_rng_, &it.salient);
        if (model_.feeds_topics()) tables = summ::make_topic_tables(g, &*ts, cfg.topic_dim);
      }
      RewardRecord rec;
      Var policy = rl_loss(g, it.dialogue, enc, tables, rec);
      Var mle = sm.refiner_nll(g, sm.refiner_memory(g, enc, tables, it.oracle), it.target);
      Var loss_s = num::add(policy, mle);
      Var total = loss_s;
      if (ts) {
        Var lt = ts->loss_dialogue->total, lc = ts->loss_customer->total,
            la = ts->loss_agent->total;
        total = num::add(loss_s, num::scale(num::add(num::add(lt, lc), la), cfg.lambda));
        log.loss_t += lt.value().item() / n;
        log.loss_t_c += lc.value().item() / n;
        log.loss_t_a += la.value().item() / n;
      }
      log.loss_s += loss_s.value().item() / n;
      log.total += total.value().item() / n;
      log.reward += rec.reward / n;
      reward_sum += rec.reward;
      g.backward(num::scale(total, 1.0 / static_cast<double>(n)));
    }
    opt.step();
    log.step = ++progress_.step;
    st.loss += log.total * n;
    emit(log);
  }
  st.loss /= static_cast<double>(order.size());
  st.reward = reward_sum / static_cast<double>(order.size());
  finish_epoch(st);
  return st;
}

double Trainer::extractor_loss(const std::vector<Dialogue>& corpus) {
  const auto& sm = *model_.summarizer;
  double total = 0.0;
  for (const auto& d : corpus) {
    if (!d.summary) throw std::invalid_argument("dialogue '" + d.id + "' has no summary");
    Graph g(false);
    auto enc = sm.encode(g, d);
    auto tables = constant_topic_tables(g, model_, corpus::bags_for_dialogue(d, model_.vocab));
    Dialogue clipped = d;
    clipped.utterances.resize(enc.size());
    Item it;
    it.oracle = ext_oracle(clipped, *d.summary, model_.config.oracle_metric,
                           model_.config.max_extract).indices;
    if (it.oracle.empty()) it.oracle = {0};
    total += sm.extractor_nll(g, enc, tables, oracle_actions(it, enc.size())).value().item();
  }
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

double Trainer::refiner_loss(const std::vector<Dialogue>& corpus) {
  const auto& sm = *model_.summarizer;
  double total = 0.0;
  for (const auto& d : corpus) {
    if (!d.summary) throw std::invalid_argument("dialogue '" + d.id + "' has no summary");
    Graph g(false);
    auto enc = sm.encode(g, d);
    auto tables = constant_topic_tables(g, model_, corpus::bags_for_dialogue(d, model_.vocab));
    Dialogue clipped = d;
    clipped.utterances.resize(enc.size());
    auto oracle = ext_oracle(clipped, *d.summary, model_.config.oracle_metric,
                             model_.config.max_extract).indices;
    if (oracle.empty()) oracle = {0};
    auto target = sm.to_ids(*d.summary);
    if (target.size() > model_.config.max_summary_tokens)
      target.resize(model_.config.max_summary_tokens);
    total += sm.refiner_nll(g, sm.refiner_memory(g, enc, tables, oracle), target).value().item();
  }
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

std::vector<Trainer::OptimState> Trainer::optimizer_state() const {
  std::vector<OptimState> out;
  for (const auto& [name, o] : optimizers_)
    out.push_back(OptimState{name, o->steps(), o->first_moments(), o->second_moments()});
  return out;
}

std::string Trainer::rng_state() const {
  std::ostringstream o;
  o << topic_rng_ << '\n' << policy_rng_;
  return o.str();
}

void Trainer::restore(const Progress& p, const std::vector<OptimState>& optim,
                      const std::string& rng) {
  progress_ = p;
  std::istringstream in(rng);
  in >> topic_rng_ >> policy_rng_;
  if (!in) throw std::invalid_argument("checkpoint holds a malformed random state");
  optimizers_.clear();
  optimizers_for_.reset();
  if (p.phase == Phase::done || optim.empty()) return;
  begin_phase(p.phase);
  for (const auto& s : optim) optimizer(s.name).restore(s.steps, s.m, s.v);
}

double sampled_gradient_check(const std::function<Var(Graph&)>& build,
                              const std::vector<num::Parameter*>& params, std::size_t samples,
                              num::Rng& rng, double h) {
  for (auto* p : params) p->grad.fill(0.0);
  double loss = 0.0;
  {
    Graph g;
    Var l = build(g);
    loss = l.value().item();
    g.backward(l);
  }
  // Differences below the round-off of the central difference itself carry
  // no information; they are measured against that floor instead.
  const double floor =
      std::max(1e-6, 1e4 * std::numeric_limits<double>::epsilon() * (std::abs(loss) + 1.0) / h);
  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t k = pick(rng);
    num::Parameter* p = nullptr;
    for (auto* q : params) {
      if (k < q->value.size()) {
        p = q;
        break;
      }
      k -= q->value.size();
    }
    const double orig = p->value[k];
    auto eval = [&](double v) {
      p->value[k] = v;
      Graph g(false);
      return build(g).value().item();
    };
    const double numeric = (eval(orig + h) - eval(orig - h)) / (2 * h);
    p->value[k] = orig;
    const double analytic = p->grad.size() ? p->grad[k] : 0.0;
    worst = std::max(worst, std::abs(analytic - numeric) /
                                std::max({std::abs(analytic), std::abs(numeric), floor}));
  }
  return worst;
}

}  // namespace satm::train

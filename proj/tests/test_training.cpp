#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "satm/synthetic.hpp"
#include "satm/training.hpp"

using namespace satm;
using namespace satm::train;
using corpus::Role;

namespace {

corpus::Dialogue make_dialogue(std::vector<std::pair<Role, std::string>> utts, std::string summary) {
  corpus::Dialogue d;
  d.id = "d";
  for (auto& [role, text] : utts) {
    corpus::Utterance u;
    u.role = role;
    std::istringstream in(text);
    for (std::string w; in >> w;) u.tokens.push_back(w);
    d.utterances.push_back(u);
  }
  std::istringstream in(summary);
  d.summary.emplace();
  for (std::string w; in >> w;) d.summary->push_back(w);
  return d;
}

std::vector<corpus::Dialogue> synthetic(std::size_t n, std::uint64_t seed = 1,
                                        std::size_t utterances = 4) {
  corpus::SyntheticSpec spec;
  spec.dialogues = n;
  spec.utterances = utterances;
  spec.tokens_per_utterance = 5;
  spec.summary_length = 6;
  spec.seed = seed;
  return corpus::generate_synthetic(spec).dialogues;
}

TrainConfig small_config() {
  TrainConfig c;
  c.summarizer.d_model = 16;
  c.summarizer.heads = 2;
  c.summarizer.ff_dim = 16;
  c.topic_dim = 4;
  c.topic_hidden = 8;
  c.informative_topics = 2;
  c.other_topics = 2;
  c.max_summary_tokens = 8;
  c.epochs_extractor = 0;
  c.epochs_refiner = 0;
  c.epochs_topic = 0;
  c.epochs_joint = 0;
  c.batch_size = 4;
  return c;
}

struct Run {
  std::unique_ptr<Model> model;
  std::unique_ptr<Trainer> trainer;
  std::ostringstream log;

  Run(const TrainConfig& c, const std::vector<corpus::Dialogue>& data) {
    model = Model::create(c, corpus::build_vocab(data, {}, 1));
    trainer = std::make_unique<Trainer>(*model, data);
    trainer->set_log(&log);
  }
};

std::vector<std::map<std::string, std::string>> parse_log(const std::string& text) {
  std::vector<std::map<std::string, std::string>> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::map<std::string, std::string> kv;
    std::istringstream ls(line);
    for (std::string f; ls >> f;) {
      auto eq = f.find('=');
      if (eq != std::string::npos) kv[f.substr(0, eq)] = f.substr(eq + 1);
    }
    out.push_back(kv);
  }
  return out;
}

double mean_rouge1(Model& m, const std::vector<corpus::Dialogue>& data) {
  double total = 0;
  for (const auto& d : data)
    total += eval::rouge_n(summarize(m, d, {}).summary, *d.summary, 1).f1;
  return total / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("oracle: verbatim summary utterance scores 1") {
  auto d = make_dialogue({{Role::customer, "hello there"},
                          {Role::agent, "how can i help"},
                          {Role::customer, "my card is blocked"},
                          {Role::agent, "reset the card pin now"}},
                         "reset the card pin now");
  auto r = ext_oracle(d, *d.summary, RewardMetric::rouge_1, 4);
  CHECK(std::find(r.indices.begin(), r.indices.end(), 3) != r.indices.end());
  CHECK(r.score == 1.0);
}

TEST_CASE("oracle: zero overlap gives an empty set and the first-utterance fallback") {
  auto d = make_dialogue({{Role::customer, "a b"}, {Role::agent, "c d"}}, "x y z");
  auto r = ext_oracle(d, *d.summary, RewardMetric::rouge_1, 4);
  CHECK(r.indices.empty());
  CHECK(r.score == 0.0);
  Run run(small_config(), {d});
  CHECK(run.trainer->oracle_labels(0) == std::vector<std::size_t>{0});
}

TEST_CASE("oracle dominates the best single utterance on 200 synthetic dialogues") {
  for (const auto& d : synthetic(200, 3, 6)) {
    double single = 0.0;
    for (const auto& u : d.utterances)
      single = std::max(single, eval::rouge_n(u.tokens, *d.summary, 1).f1);
    const auto r = ext_oracle(d, *d.summary, RewardMetric::rouge_1, 4);
    CHECK(r.score >= single);
    CHECK(best_single_utterance(d, *d.summary, RewardMetric::rouge_1).score == single);
    CHECK(r.score == eval::rouge_n(selection_tokens(d, r.indices), *d.summary, 1).f1);
  }
}

TEST_CASE("oracle score strictly improves with each accepted utterance") {
  for (const auto& d : synthetic(50, 4, 6)) {
    double prev = 0.0;
    std::size_t prev_size = 0;
    for (std::size_t k = 1; k <= 4; ++k) {
      auto r = ext_oracle(d, *d.summary, RewardMetric::rouge_l, k);
      if (r.indices.size() > prev_size) CHECK(r.score > prev);
      CHECK(r.score >= prev);
      prev = r.score;
      prev_size = r.indices.size();
    }
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.informative_topics = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.other_topics = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.topic_mode = topic::TopicMode::ntm;
  CHECK_NOTHROW(c.validate());
  CHECK(parse_phase("joint") == Phase::joint);
  CHECK_THROWS(parse_phase("warm"));
}

TEST_CASE("a dialogue without a summary is rejected") {
  auto data = synthetic(3);
  data[1].summary.reset();
  auto c = small_config();
  auto m = Model::create(c, corpus::build_vocab(data, {}, 1));
  CHECK_THROWS_AS(Trainer(*m, data), std::invalid_argument);
}

TEST_CASE("extractor and refiner memorise a single dialogue") {
  auto data = synthetic(1, 9);
  auto c = small_config();
  c.use_topics = false;
  c.epochs_extractor = 60;
  c.epochs_refiner = 150;
  c.lr_pretrain = 1e-2;
  c.batch_size = 1;
  Run run(c, data);
  run.trainer->run();
  const auto& h = run.trainer->history();
  double ext = 0, ref = 0;
  for (const auto& s : h) (s.phase == Phase::extractor ? ext : ref) = s.accuracy;
  CHECK(ext == 1.0);
  CHECK(ref == 1.0);
}

TEST_CASE("learning rate 0 leaves the pretraining losses unchanged") {
  auto data = synthetic(8);
  auto c = small_config();
  c.lr_pretrain = 0.0;
  c.epochs_extractor = 1;
  c.epochs_refiner = 1;
  Run run(c, data);
  const double e0 = run.trainer->extractor_loss(data), r0 = run.trainer->refiner_loss(data);
  run.trainer->run();
  CHECK(run.trainer->extractor_loss(data) == e0);
  CHECK(run.trainer->refiner_loss(data) == r0);
}

TEST_CASE("pretraining losses fall between epoch 1 and epoch 5 on 50 dialogues") {
  auto data = synthetic(50);
  auto c = small_config();
  c.epochs_extractor = 5;
  c.epochs_refiner = 5;
  c.epochs_topic = 5;
  Run run(c, data);
  run.trainer->run();
  std::map<Phase, std::vector<double>> loss;
  for (const auto& s : run.trainer->history()) loss[s.phase].push_back(s.loss);
  REQUIRE(loss[Phase::extractor].size() == 5);
  REQUIRE(loss[Phase::refiner].size() == 5);
  REQUIRE(loss[Phase::topic].size() == 5);
  CHECK(loss[Phase::extractor][4] < loss[Phase::extractor][0]);
  CHECK(loss[Phase::refiner][4] < loss[Phase::refiner][0]);
  CHECK(loss[Phase::topic][4] < loss[Phase::topic][0]);
}

TEST_CASE("phases run topic warmup, extractor, refiner, joint and log key=value lines") {
  auto data = synthetic(6);
  auto c = small_config();
  c.epochs_topic = 1;
  c.epochs_extractor = 1;
  c.epochs_refiner = 1;
  c.epochs_joint = 1;
  c.batch_size = 3;
  Run run(c, data);
  run.trainer->run();
  std::vector<Phase> seen;
  for (const auto& s : run.trainer->history()) seen.push_back(s.phase);
  CHECK(seen == std::vector<Phase>{Phase::topic, Phase::extractor, Phase::refiner, Phase::joint});
  auto lines = parse_log(run.log.str());
  REQUIRE(lines.size() == 8);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(lines[i]["step"] == std::to_string(i + 1));
    for (const char* k : {"phase", "epoch", "L_S", "L_T", "L_T_C", "L_T_A", "reward", "loss"})
      CHECK(lines[i].count(k) == 1);
  }
  CHECK(run.trainer->progress().phase == Phase::joint);
  CHECK_FALSE(run.trainer->run_epoch());

  // Without topic models the warmup phase is skipped.
  c.use_topics = false;
  Run plain(c, data);
  plain.trainer->run();
  CHECK(plain.trainer->history().front().phase == Phase::extractor);
}

TEST_CASE("self-critical advantage is exactly zero when sample equals greedy") {
  // One utterance: both rollouts must pick it and stop.
  auto d = make_dialogue({{Role::customer, "card blocked please help"}}, "card blocked");
  auto c = small_config();
  Run run(c, {d});
  num::Graph g;
  auto& sm = *run.model->summarizer;
  auto enc = sm.encode(g, d);
  auto tables = summ::make_topic_tables(g, nullptr, c.topic_dim);
  RewardRecord rec;
  auto loss = run.trainer->rl_loss(g, d, enc, tables, rec);
  CHECK(rec.advantage == 0.0);
  CHECK(rec.reward == rec.baseline);
  CHECK(rec.advantage == rec.reward - rec.baseline);
  g.backward(loss);
  for (auto* p : run.model->all_parameters())
    for (std::size_t i = 0; i < p->grad.size(); ++i) REQUIRE(p->grad[i] == 0.0);
  CHECK(eval::metric_f1(RewardMetric::rouge_l, *d.summary, *d.summary) == 1.0);
}

TEST_CASE("policy gradient raises the relevant utterance's probability on a toy") {
  // Each dialogue has one utterance carrying the summary words and one of noise;
  // the refiner is pretrained so the reward depends on which one is picked.
  std::vector<corpus::Dialogue> data;
  const char* topics[] = {"alpha beta gamma", "delta eps zeta", "eta theta iota", "kappa mu nu"};
  for (int i = 0; i < 8; ++i) {
    std::string rel = topics[i % 4];
    auto d = i % 2 ? make_dialogue({{Role::customer, rel}, {Role::agent, "ok sure fine"}}, rel)
                   : make_dialogue({{Role::customer, "ok sure fine"}, {Role::agent, rel}}, rel);
    d.id = "t" + std::to_string(i);
    data.push_back(d);
  }
  auto c = small_config();
  c.use_topics = false;
  c.max_extract = 1;
  c.epochs_refiner = 60;
  c.lr_pretrain = 1e-2;
  Run run(c, data);
  run.trainer->run();
  auto& sm = *run.model->summarizer;

  auto relevant_prob = [&] {
    double total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      num::Graph g(false);
      auto enc = sm.encode(g, data[i]);
      auto tables = summ::make_topic_tables(g, nullptr, c.topic_dim);
      auto lp = sm.extractor_log_probs(g, enc, tables, {});
      total += std::exp(lp.value()(0, i % 2 ? 0 : 1));
    }
    return total / static_cast<double>(data.size());
  };
  const double before = relevant_prob();
  num::AdamConfig ac;
  ac.learning_rate = 1e-2;
  num::Adam opt(sm.params().all(), ac);
  for (int step = 0; step < 50; ++step) {
    const auto& d = data[step % data.size()];
    num::Graph g;
    auto enc = sm.encode(g, d);
    auto tables = summ::make_topic_tables(g, nullptr, c.topic_dim);
    RewardRecord rec;
    g.backward(run.trainer->rl_loss(g, d, enc, tables, rec));
    opt.step();
  }
  const double after = relevant_prob();
  MESSAGE("relevant probability " << before << " -> " << after);
  CHECK(after > before);
}

TEST_CASE("lambda 0 with detached topics matches the plain two-stage trainer") {
  auto data = synthetic(12);
  auto c = small_config();
  c.epochs_extractor = 2;
  c.epochs_refiner = 2;
  c.epochs_joint = 3;
  c.epochs_topic = 2;
  c.lambda = 0.0;
  c.detach_topics = true;
  Run detached(c, data);
  // Warmup trains the topic models; snapshot after it to check the joint phase.
  REQUIRE(detached.trainer->run_epoch());
  REQUIRE(detached.trainer->run_epoch());
  std::vector<num::Tensor> topic_before;
  for (auto* p : detached.model->topics->all_parameters()) topic_before.push_back(p->value);
  detached.trainer->run();

  auto plain_cfg = c;
  plain_cfg.use_topics = false;
  Run plain(plain_cfg, data);
  plain.trainer->run();

  std::vector<double> a, b;
  for (auto& kv : parse_log(detached.log.str()))
    if (kv["phase"] != "topic") a.push_back(std::stod(kv["L_S"]));
  for (auto& kv : parse_log(plain.log.str())) b.push_back(std::stod(kv["L_S"]));
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 21);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);

  // The joint phase gives topic parameters no gradient at all.
  auto params = detached.model->topics->all_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value.values() == topic_before[i].values());

  // Without detaching, lambda 0 still moves them through the attention sites.
  c.detach_topics = false;
  Run attached(c, data);
  REQUIRE(attached.trainer->run_epoch());
  REQUIRE(attached.trainer->run_epoch());
  std::vector<num::Tensor> warm;
  for (auto* p : attached.model->topics->all_parameters()) warm.push_back(p->value);
  attached.trainer->run();
  bool moved = false;
  auto ap = attached.model->topics->all_parameters();
  for (std::size_t i = 0; i < ap.size(); ++i) moved = moved || ap[i]->value.values() != warm[i].values();
  CHECK(moved);
}

TEST_CASE("very large lambda degrades the summarizer") {
  auto data = synthetic(40, 11);
  auto c = small_config();
  c.epochs_topic = 5;
  c.epochs_extractor = 5;
  c.epochs_refiner = 10;
  c.epochs_joint = 8;
  c.lr_rl = 3e-3;
  Run base(c, data);
  base.trainer->run();
  c.lambda = 1e6;
  Run heavy(c, data);
  heavy.trainer->run();
  const double r_base = mean_rouge1(*base.model, data), r_heavy = mean_rouge1(*heavy.model, data);
  MESSAGE("rouge-1 lambda=1 " << r_base << ", lambda=1e6 " << r_heavy);
  CHECK(r_heavy < r_base);
}

TEST_CASE("identical seeds give bitwise identical logs and parameters") {
  auto data = synthetic(10);
  auto c = small_config();
  c.epochs_topic = 1;
  c.epochs_extractor = 1;
  c.epochs_refiner = 1;
  c.epochs_joint = 2;
  Run a(c, data), b(c, data);
  a.trainer->run();
  b.trainer->run();
  CHECK(a.log.str() == b.log.str());
  auto pa = a.model->all_parameters(), pb = b.model->all_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.values() == pb[i]->value.values());
  c.seed = 2;
  Run other(c, data);
  other.trainer->run();
  CHECK(other.log.str() != a.log.str());
}

TEST_CASE("gradient check mode logs a small relative error") {
  auto data = synthetic(4);
  auto c = small_config();
  c.epochs_joint = 1;
  c.gradient_check = true;
  Run run(c, data);
  run.trainer->run();
  const std::string log = run.log.str();
  const auto pos = log.find("max_rel_error=");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(log.substr(pos + 14)) < 1e-4);
}

TEST_CASE("summarize produces extracted indices in dialogue order") {
  auto data = synthetic(5);
  auto c = small_config();
  Run run(c, data);
  for (const auto& d : data) {
    auto out = summarize(*run.model, d, {});
    CHECK_FALSE(out.extracted.empty());
    CHECK(std::is_sorted(out.extracted.begin(), out.extracted.end()));
    CHECK(out.extract_tokens == selection_tokens(d, out.extracted));
    CHECK(out.summary.size() <= summ::DecodeConfig{}.max_length);
  }
}

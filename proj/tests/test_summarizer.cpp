#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "satm/summarizer.hpp"
#include "satm/synthetic.hpp"
#include "support/gradcheck.hpp"

using namespace satm;
using namespace satm::summ;
using corpus::Role;
using num::Tensor;

namespace {

struct Fixture {
  corpus::SyntheticCorpus syn;
  corpus::Vocabulary vocab;
  SummarizerConfig cfg;

  explicit Fixture(std::size_t dialogues = 12, std::size_t d_model = 8) {
    corpus::SyntheticSpec spec;
    spec.dialogues = dialogues;
    spec.utterances = 4;
    spec.tokens_per_utterance = 4;
    syn = corpus::generate_synthetic(spec);
    vocab = corpus::build_vocab(syn.dialogues, {}, 1);
    cfg.d_model = d_model;
    cfg.heads = 2;
    cfg.ff_dim = 8;
    cfg.topic_dim = 4;
  }
};

topic::TopicConfig topic_config(const corpus::Vocabulary& v) {
  topic::TopicConfig tc;
  tc.vocab_size = v.size();
  tc.hidden = 6;
  tc.informative_topics = 2;
  tc.other_topics = 2;
  tc.embed_dim = 4;
  return tc;
}

double sum_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("role topic vectors follow the zero-block layout") {
  num::Graph g;
  topic::MultiRoleTopicState st;
  auto row = [&](double v) { return g.constant(Tensor(1, 2, v)); };
  st.dialogue = {row(1), row(-1)};
  st.customer = {row(2), row(-2)};
  st.agent = {row(3), row(-3)};
  auto c = build_role_topic_vectors(g, Role::customer, st);
  auto a = build_role_topic_vectors(g, Role::agent, st);
  CHECK(c.tau_s.value().values() == std::vector<double>{1, 1, 2, 2, 0, 0});
  CHECK(c.tau_o.value().values() == std::vector<double>{-1, -1, -2, -2, 0, 0});
  CHECK(a.tau_s.value().values() == std::vector<double>{1, 1, 0, 0, 3, 3});
  CHECK(a.tau_o.value().values() == std::vector<double>{-1, -1, 0, 0, -3, -3});

  auto tables = make_topic_tables(g, nullptr, 2);
  for (double v : tables.tau_s.value().values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(make_topic_tables(g, &st, 3), num::ShapeError);
}

TEST_CASE("topic attention: uniform alpha_t when tau_s = tau_o, and J = 1") {
  num::Rng rng(1);
  num::ParameterSet ps;
  nn::TopicAttention att(ps, "a", 8, 2, 6, rng);
  num::Graph g;
  auto mem = g.constant(num::normal(5, 8, 1.0, rng));
  auto tau = g.constant(num::normal(5, 6, 1.0, rng));
  auto m = att.prepare(g, mem, tau, tau);
  nn::AttentionTrace trace;
  att.attend(g, m, g.constant(num::normal(3, 8, 1.0, rng)), &trace);
  REQUIRE(trace.steps.size() == 3);
  for (const auto& s : trace.steps)
    for (double a : s.alpha_t) CHECK(a == doctest::Approx(0.2).epsilon(1e-12));

  auto one = g.constant(num::normal(1, 8, 1.0, rng));
  auto t1 = g.constant(num::normal(1, 6, 1.0, rng)), t2 = g.constant(num::normal(1, 6, 1.0, rng));
  nn::AttentionTrace tr1;
  att.attend(g, att.prepare(g, one, t1, t2), g.constant(num::normal(2, 8, 1.0, rng)), &tr1);
  for (const auto& s : tr1.steps) {
    CHECK(s.alpha_q[0] == doctest::Approx(1.0));
    CHECK(s.alpha_t[0] == doctest::Approx(1.0));
    CHECK(s.alpha[0] == doctest::Approx(1.0));
  }

  num::Graph g2;
  CHECK_THROWS_AS(att.prepare(g2, g2.constant(Tensor(3, 8)), g2.constant(Tensor(2, 6)),
                              g2.constant(Tensor(2, 6))),
                  std::invalid_argument);
}

TEST_CASE("topic attention: aligned element beats anti-aligned one, ordering survives scaling") {
  std::mt19937_64 meta(11);
  for (int trial = 0; trial < 100; ++trial) {
    num::Rng rng(meta());
    num::ParameterSet ps;
    const std::size_t d = 8, tau_dim = 6;
    nn::TopicAttention att(ps, "a", d, 2, tau_dim, rng);
    auto& kt = att.w_kt.weight->value;
    kt.fill(0.0);
    for (std::size_t i = 0; i < d; ++i) kt(i, i) = 1.0;

    Tensor ts = num::normal(1, tau_dim, 1.0, rng), to = num::normal(1, tau_dim, 1.0, rng);
    Tensor diff(1, tau_dim);
    for (std::size_t i = 0; i < tau_dim; ++i) diff[i] = ts[i] - to[i];
    Tensor proj(1, d);  // (tau_s - tau_o) W_T
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t i = 0; i < tau_dim; ++i) proj[c] += diff[i] * att.w_t.weight->value(i, c);
    std::uniform_real_distribution<double> mag(0.1, 2.0);
    const double a = mag(rng), b = mag(rng);
    Tensor mem(2, d);
    for (std::size_t c = 0; c < d; ++c) {
      mem(0, c) = a * proj[c];
      mem(1, c) = -b * proj[c];
    }
    Tensor tau_s(2, tau_dim), tau_o(2, tau_dim);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t i = 0; i < tau_dim; ++i) {
        tau_s(r, i) = ts[i];
        tau_o(r, i) = to[i];
      }
    num::Graph g;
    auto m = att.prepare(g, g.constant(mem), g.constant(tau_s), g.constant(tau_o));
    for (const auto& head : m.alpha_t) CHECK(head.value()[0] > head.value()[1]);

    // Scaling the contrast by c > 0 keeps the ordering.
    Tensor s2 = tau_s, o2 = tau_o;
    for (std::size_t i = 0; i < s2.size(); ++i) {
      const double mid = 0.5 * (tau_s[i] + tau_o[i]), half = 0.5 * (tau_s[i] - tau_o[i]);
      s2[i] = mid + 3.5 * half;
      o2[i] = mid - 3.5 * half;
    }
    auto m2 = att.prepare(g, g.constant(mem), g.constant(s2), g.constant(o2));
    for (const auto& head : m2.alpha_t) CHECK(head.value()[0] > head.value()[1]);
  }
}

TEST_CASE("topic attention rows are on the simplex and p_sel is inside (0,1)") {
  std::mt19937_64 meta(3);
  for (int trial = 0; trial < 200; ++trial) {
    num::Rng rng(meta());
    num::ParameterSet ps;
    nn::TopicAttention att(ps, "a", 6, 3, 9, rng);
    const std::size_t J = 1 + meta() % 7, n = 1 + meta() % 4;
    num::Graph g;
    auto m = att.prepare(g, g.constant(num::normal(J, 6, 2.0, rng)),
                         g.constant(num::normal(J, 9, 2.0, rng)),
                         g.constant(num::normal(J, 9, 2.0, rng)));
    nn::AttentionTrace tr;
    att.attend(g, m, g.constant(num::normal(n, 6, 2.0, rng)), &tr);
    for (const auto& s : tr.steps) {
      CHECK(sum_of(s.alpha_q) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(sum_of(s.alpha_t) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(sum_of(s.alpha) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(s.p_sel > 0.0);
      CHECK(s.p_sel < 1.0);
    }
  }
}

TEST_CASE("encode: shapes, role participation and positional context") {
  Fixture f;
  num::Rng rng(5);
  Summarizer model(f.cfg, f.vocab, rng);
  const auto& d = f.syn.dialogues[0];

  num::Graph g(false);
  auto enc = model.encode(g, d);
  CHECK(enc.utterances.rows() == d.utterances.size());
  CHECK(enc.utterances.cols() == f.cfg.d_model);

  corpus::Dialogue single = d;
  single.utterances.resize(1);
  CHECK(model.encode(g, single).utterances.rows() == 1);

  corpus::Dialogue swapped = d;
  swapped.utterances[1].role = Role::customer;
  auto enc2 = model.encode(g, swapped);
  CHECK(num::max_abs_diff(num::slice_rows(enc.utterance_inputs, 1, 1).value(),
                          num::slice_rows(enc2.utterance_inputs, 1, 1).value()) > 1e-6);
  CHECK(num::max_abs_diff(num::slice_rows(enc.utterance_inputs, 0, 1).value(),
                          num::slice_rows(enc2.utterance_inputs, 0, 1).value()) == 0.0);

  corpus::Dialogue rev = d;
  std::reverse(rev.utterances.begin(), rev.utterances.end());
  auto enc3 = model.encode(g, rev);
  const std::size_t M = d.utterances.size();
  bool context_changed = false;
  for (std::size_t i = 0; i < M; ++i) {
    auto a = num::slice_rows(enc.utterance_inputs, i, 1).value();
    auto b = num::slice_rows(enc3.utterance_inputs, M - 1 - i, 1).value();
    CHECK(num::max_abs_diff(a, b) < 1e-12);
    CHECK(num::max_abs_diff(enc.words[i].value(), enc3.words[M - 1 - i].value()) < 1e-12);
    context_changed = context_changed ||
                      num::max_abs_diff(num::slice_rows(enc.utterances, i, 1).value(),
                                        num::slice_rows(enc3.utterances, M - 1 - i, 1).value()) >
                          1e-9;
  }
  CHECK(context_changed);

  corpus::Dialogue empty = d;
  empty.utterances.clear();
  CHECK_THROWS_AS(model.encode(g, empty), std::invalid_argument);
}

TEST_CASE("extract: single utterance, masking and determinism") {
  Fixture f;
  num::Rng rng(9);
  Summarizer model(f.cfg, f.vocab, rng);

  corpus::Dialogue single = f.syn.dialogues[0];
  single.utterances.resize(1);
  {
    num::Graph g(false);
    auto enc = model.encode(g, single);
    auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
    auto ex = model.extract(g, enc, tables, ExtractMode::greedy, nullptr);
    CHECK(ex.indices == std::vector<std::size_t>{0});
  }

  // Stop-first must fall back to the top first-step attention entry.
  for (double& v : model.params().find("ext.stop")->value.data()) v *= 0.0;
  std::mt19937_64 meta(1);
  std::size_t decodes = 0;
  for (int round = 0; round < 84; ++round) {
    for (const auto& d : f.syn.dialogues) {
      num::Graph g(false);
      auto enc = model.encode(g, d);
      auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
      num::Rng sr(meta());
      auto ex = model.extract(g, enc, tables, ExtractMode::sample, &sr);
      std::set<std::size_t> seen(ex.indices.begin(), ex.indices.end());
      CHECK(seen.size() == ex.indices.size());
      CHECK_FALSE(ex.indices.empty());
      CHECK(ex.indices.size() <= f.cfg.max_extract);
      for (auto i : ex.indices) CHECK(i < d.utterances.size());
      ++decodes;
    }
  }
  CHECK(decodes >= 1000);

  const auto& d = f.syn.dialogues[3];
  auto run = [&](std::uint64_t seed) {
    num::Graph g(false);
    auto enc = model.encode(g, d);
    auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
    num::Rng sr(seed);
    return model.extract(g, enc, tables, ExtractMode::sample, &sr).actions;
  };
  CHECK(run(7) == run(7));
}

TEST_CASE("extract: fallback picks the first-step attention argmax") {
  Fixture f;
  num::Rng rng(4);
  Summarizer model(f.cfg, f.vocab, rng);
  const auto& d = f.syn.dialogues[2];
  {
    // The first-step query does not depend on the stop vector, so a stop
    // vector along that query's pointer projection wins step one.
    num::Graph g(false);
    auto enc = model.encode(g, d);
    auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
    Tensor q = model.extractor_states(g, enc, tables, {}).value();
    const Tensor& w = model.params().find("ext.pointer.w")->value;
    auto& stop = model.params().find("ext.stop")->value;
    for (std::size_t c = 0; c < stop.cols(); ++c) {
      double r = 0;
      for (std::size_t k = 0; k < q.cols(); ++k) r += q(0, k) * w(k, c);
      stop(0, c) = 100.0 * r;
    }
  }
  num::Graph g(false);
  auto enc = model.encode(g, d);
  auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
  nn::AttentionTrace trace;
  auto ex = model.extract(g, enc, tables, ExtractMode::greedy, nullptr, &trace);
  REQUIRE(ex.used_fallback);
  const auto& a = trace.steps.front().alpha;
  const auto best = static_cast<std::size_t>(std::max_element(a.begin(), a.end()) - a.begin());
  CHECK(ex.indices == std::vector<std::size_t>{best});
  CHECK(ex.actions == std::vector<std::size_t>{Summarizer::stop_index(d.utterances.size())});
}

TEST_CASE("alpha_t stays fixed across extractor decode steps") {
  Fixture f;
  num::Rng rng(12);
  Summarizer model(f.cfg, f.vocab, rng);
  topic::MultiRoleTopics topics(topic_config(f.vocab), rng);
  const auto& d = f.syn.dialogues[1];
  num::Graph g(false);
  auto enc = model.encode(g, d);
  auto st = topic::infer_multi_role(g, corpus::bags_for_dialogue(d, f.vocab), topics, nullptr,
                                    nullptr);
  auto tables = make_topic_tables(g, &st, f.cfg.topic_dim);
  nn::AttentionTrace tr;
  model.extractor_log_probs(g, enc, tables, {2, 0, 3}, &tr);
  REQUIRE(tr.steps.size() == 4);
  for (const auto& s : tr.steps) CHECK(s.alpha_t == tr.steps.front().alpha_t);
}

TEST_CASE("refine: length limits, closed vocabulary and beam width 1") {
  Fixture f;
  num::Rng rng(21);
  Summarizer model(f.cfg, f.vocab, rng);
  for (const auto& d : f.syn.dialogues) {
    num::Graph g(false);
    auto enc = model.encode(g, d);
    auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
    auto mem = model.refiner_memory(g, enc, tables, {2, 0});
    CHECK(mem.states.rows() == enc.token_ids[0].size() + enc.token_ids[2].size() + 1);

    auto one = model.decode(g, mem, DecodeConfig{1, 1, 1});
    CHECK(one.size() == 1);
    auto greedy = model.greedy_decode(g, mem, 6, 1);
    CHECK(model.decode(g, mem, DecodeConfig{1, 6, 1}) == greedy);
    auto beam = model.decode(g, mem, DecodeConfig{3, 6, 2});
    CHECK(beam.size() >= 2);
    CHECK(beam.size() <= 6);
    for (auto t : beam) {
      CHECK(t >= corpus::Vocabulary::kSpecialCount);
      CHECK(t < f.vocab.seq_size());
    }
  }
  num::Graph g(false);
  auto enc = model.encode(g, f.syn.dialogues[0]);
  auto tables = make_topic_tables(g, nullptr, f.cfg.topic_dim);
  CHECK_THROWS_AS(model.refiner_memory(g, enc, tables, {}), std::invalid_argument);
}

TEST_CASE("summarizer and topic gradients match finite differences") {
  Fixture f(4, 4);
  f.cfg.ff_dim = 4;
  f.cfg.topic_dim = 2;
  num::Rng rng(31);
  Summarizer model(f.cfg, f.vocab, rng);
  auto tc = topic_config(f.vocab);
  tc.embed_dim = 2;
  tc.hidden = 3;
  topic::MultiRoleTopics topics(tc, rng);
  const auto& d = f.syn.dialogues[0];
  const auto bags = corpus::bags_for_dialogue(d, f.vocab);
  const auto target = model.to_ids(*d.summary);

  auto build = [&](num::Graph& g) {
    auto enc = model.encode(g, d);
    auto st = topic::infer_multi_role(g, bags, topics, nullptr, nullptr);
    auto tables = make_topic_tables(g, &st, f.cfg.topic_dim);
    const std::size_t stop = Summarizer::stop_index(enc.size());
    Var ext = model.extractor_nll(g, enc, tables, {1, 0, stop});
    Var ref = model.refiner_nll(g, model.refiner_memory(g, enc, tables, {0, 1}), target);
    return num::add(ext, ref);
  };
  std::vector<num::Parameter*> params = model.params().all();
  for (auto* p : topics.all_parameters()) params.push_back(p);
  auto res = testing::check_gradients(build, params);
  CAPTURE(res.worst_param);
  CAPTURE(res.analytic);
  CAPTURE(res.numeric);
  CHECK(res.max_rel_error < 1e-4);
}

#include "satm/summarizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace satm::summ {

using corpus::Role;
using corpus::Vocabulary;

namespace {

constexpr std::size_t kMaxPositions = 512;

std::size_t role_row(Role r) { return r == Role::customer ? 0 : 1; }

std::size_t argmax(const Tensor& row_tensor, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row_tensor.cols(); ++c)
    if (row_tensor(row, c) > row_tensor(row, best)) best = c;
  return best;
}

}  // namespace

void SummarizerConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("summarizer: " + m); };
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    fail("heads must divide d_model (" + std::to_string(d_model) + "/" + std::to_string(heads) +
         ")");
  if (ff_dim == 0) fail("ff_dim must be positive");
  if (word_layers == 0 || utterance_layers == 0 || decoder_layers == 0)
    fail("every stack needs at least one layer");
  if (topic_dim == 0) fail("topic_dim must be positive");
  if (max_utterances == 0 || max_utterance_tokens == 0) fail("max lengths must be positive");
  if (max_utterance_tokens + 1 > kMaxPositions) fail("max_utterance_tokens too large");
  if (max_extract == 0) fail("max_extract must be >= 1");
}

RoleTau build_role_topic_vectors(Graph& g, Role role, const topic::MultiRoleTopicState& t) {
  const std::size_t H = t.dialogue.t_s.cols();
  Var zero = g.constant(Tensor(1, H));
  auto layout = [&](Var whole, Var customer, Var agent) {
    std::vector<Var> parts =
        role == Role::customer ? std::vector<Var>{whole, customer, zero}
                               : std::vector<Var>{whole, zero, agent};
    return num::concat_cols(parts);
  };
  return RoleTau{layout(t.dialogue.t_s, t.customer.t_s, t.agent.t_s),
                 layout(t.dialogue.t_o, t.customer.t_o, t.agent.t_o)};
}

TopicTables make_topic_tables(Graph& g, const topic::MultiRoleTopicState* topics,
                              std::size_t topic_dim) {
  if (!topics) {
    Var z = g.constant(Tensor(2, 3 * topic_dim));
    return TopicTables{z, z};
  }
  if (topics->dialogue.t_s.cols() != topic_dim)
    throw num::ShapeError("topic vectors have width " +
                          std::to_string(topics->dialogue.t_s.cols()) + ", summarizer expects " +
                          std::to_string(topic_dim));
  RoleTau c = build_role_topic_vectors(g, Role::customer, *topics);
  RoleTau a = build_role_topic_vectors(g, Role::agent, *topics);
  std::vector<Var> s{c.tau_s, a.tau_s}, o{c.tau_o, a.tau_o};
  return TopicTables{num::concat_rows(s), num::concat_rows(o)};
}

Var role_rows(Var table, const std::vector<Role>& roles) {
  std::vector<std::size_t> idx;
  idx.reserve(roles.size());
  for (Role r : roles) idx.push_back(role_row(r));
  return num::gather_rows(table, idx);
}

Summarizer::Summarizer(SummarizerConfig config, Vocabulary vocab, num::Rng& rng)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.seq_size() <= Vocabulary::kSpecialCount)
    throw std::invalid_argument("summarizer: sequence vocabulary has no ordinary tokens");
  const std::size_t d = config_.d_model, V = vocab_.seq_size();
  const std::size_t tau = 3 * config_.topic_dim;
  embed_ = &params_.add("sum.embed", num::normal(V, d, 0.1, rng));
  role_embed_ = &params_.add("sum.role", num::normal(2, d, 0.1, rng));
  utt_pos_ = &params_.add("sum.utt_pos", num::normal(config_.max_utterances, d, 0.1, rng));
  for (std::size_t l = 0; l < config_.word_layers; ++l)
    word_layers_.emplace_back(params_, "sum.word" + std::to_string(l), d, config_.heads,
                              config_.ff_dim, rng);
  for (std::size_t l = 0; l < config_.utterance_layers; ++l)
    utt_layers_.emplace_back(params_, "sum.utt" + std::to_string(l), d, config_.heads,
                             config_.ff_dim, rng);
  ext_start_ = &params_.add("ext.start", num::normal(1, d, 0.1, rng));
  ext_stop_ = &params_.add("ext.stop", num::normal(1, d, 0.1, rng));
  for (std::size_t l = 0; l < config_.decoder_layers; ++l)
    ext_layers_.emplace_back(params_, "ext.dec" + std::to_string(l), d, config_.heads,
                             config_.ff_dim, tau, rng);
  pointer_ = nn::Linear(params_, "ext.pointer", d, d, false, rng);
  refiner_embed_ = config_.share_embeddings ? embed_
                                            : &params_.add("ref.embed", num::normal(V, d, 0.1, rng));
  for (std::size_t l = 0; l < config_.decoder_layers; ++l)
    ref_layers_.emplace_back(params_, "ref.dec" + std::to_string(l), d, config_.heads,
                             config_.ff_dim, tau, rng);
  positions_ = nn::sinusoidal_positions(kMaxPositions, d);
}

Var Summarizer::positions(Graph& g, std::size_t n) const {
  if (n > kMaxPositions) throw std::invalid_argument("sequence longer than position table");
  Tensor p(n, config_.d_model);
  std::copy_n(positions_.data().begin(), n * config_.d_model, p.data().begin());
  return g.constant(std::move(p));
}

std::vector<std::uint32_t> Summarizer::to_ids(const std::vector<std::string>& tokens) const {
  std::vector<std::uint32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab_.seq_index(t));
  return out;
}

std::vector<std::string> Summarizer::to_tokens(const std::vector<std::uint32_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(vocab_.seq_token(i));
  return out;
}

EncodedDialogue Summarizer::encode(Graph& g, const corpus::Dialogue& d) const {
  if (d.utterances.empty()) throw std::invalid_argument("encode: dialogue has no utterances");
  EncodedDialogue enc;
  const std::size_t M = std::min(d.utterances.size(), config_.max_utterances);
  const std::size_t V = vocab_.seq_size();

  // All utterances run through the word-level stack at once; a block-diagonal
  // mask keeps them independent. Row layout per utterance: role, tokens.
  std::vector<std::size_t> rows, offsets;
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < M; ++i) {
    const auto& u = d.utterances[i];
    auto ids = to_ids(u.tokens);
    if (ids.size() > config_.max_utterance_tokens) ids.resize(config_.max_utterance_tokens);
    offsets.push_back(rows.size());
    rows.push_back(V + role_row(u.role));
    pos.push_back(0);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      rows.push_back(ids[t]);
      pos.push_back(t + 1);
    }
    enc.roles.push_back(u.role);
    enc.token_ids.push_back(std::move(ids));
  }
  const std::size_t L = rows.size();
  std::vector<Var> tables{g.param(*embed_), g.param(*role_embed_)};
  Var x = num::gather_rows(num::concat_rows(tables), rows);
  Tensor pe(L, config_.d_model);
  for (std::size_t r = 0; r < L; ++r)
    for (std::size_t c = 0; c < config_.d_model; ++c) pe(r, c) = positions_(pos[r], c);
  x = num::add(x, g.constant(std::move(pe)));

  Tensor mask(L, L);
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t b = offsets[i], n = enc.token_ids[i].size() + 1;
    for (std::size_t r = b; r < b + n; ++r)
      for (std::size_t c = b; c < b + n; ++c) mask(r, c) = 1.0;
  }
  for (const auto& layer : word_layers_) x = layer(g, x, &mask);

  enc.utterance_inputs = num::gather_rows(x, offsets);
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t n = enc.token_ids[i].size();
    enc.words.push_back(n ? num::slice_rows(x, offsets[i] + 1, n) : Var());
  }
  Var u = num::add(enc.utterance_inputs, num::slice_rows(g.param(*utt_pos_), 0, M));
  for (const auto& layer : utt_layers_) u = layer(g, u, nullptr);
  enc.utterances = u;
  return enc;
}

std::vector<nn::TopicAttention::Memory> Summarizer::extractor_sites(
    Graph& g, const EncodedDialogue& enc, const TopicTables& topics) const {
  Var ts = role_rows(topics.tau_s, enc.roles), to = role_rows(topics.tau_o, enc.roles);
  std::vector<nn::TopicAttention::Memory> sites;
  for (const auto& layer : ext_layers_) sites.push_back(layer.cross.prepare(g, enc.utterances, ts, to));
  return sites;
}

Var Summarizer::run_extractor_decoder(Graph& g, const EncodedDialogue& enc,
                                      const std::vector<nn::TopicAttention::Memory>& sites,
                                      const std::vector<std::size_t>& prefix,
                                      nn::AttentionTrace* trace) const {
  Var x = g.param(*ext_start_);
  if (!prefix.empty()) {
    std::vector<Var> parts{x, num::gather_rows(enc.utterances, prefix)};
    x = num::concat_rows(parts);
  }
  x = num::add(x, positions(g, prefix.size() + 1));
  for (std::size_t l = 0; l < ext_layers_.size(); ++l)
    x = ext_layers_[l](g, x, sites[l], l + 1 == ext_layers_.size() ? trace : nullptr);
  return x;
}

Var Summarizer::pointer_log_probs(Graph& g, const EncodedDialogue& enc, Var states,
                                  const std::vector<std::size_t>& prefix) const {
  const std::size_t M = enc.size();
  std::vector<Var> cand{enc.utterances, g.param(*ext_stop_)};
  Var c = num::concat_rows(cand);
  Var logits = num::scale(num::matmul_nt(pointer_(g, states), c),
                          1.0 / std::sqrt(static_cast<double>(config_.d_model)));
  Tensor mask(states.rows(), M + 1, 1.0);
  for (std::size_t t = 0; t < states.rows(); ++t)
    for (std::size_t k = 0; k < t && k < prefix.size(); ++k) mask(t, prefix[k]) = 0.0;
  return num::log_softmax_rows(logits, &mask);
}

Var Summarizer::extractor_log_probs(Graph& g, const EncodedDialogue& enc,
                                    const TopicTables& topics,
                                    const std::vector<std::size_t>& prefix,
                                    nn::AttentionTrace* trace) const {
  for (std::size_t i : prefix)
    if (i >= enc.size()) throw std::out_of_range("extractor prefix holds a non-utterance index");
  auto sites = extractor_sites(g, enc, topics);
  return pointer_log_probs(g, enc, run_extractor_decoder(g, enc, sites, prefix, trace), prefix);
}

Var Summarizer::extractor_states(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                                  const std::vector<std::size_t>& prefix) const {
  return run_extractor_decoder(g, enc, extractor_sites(g, enc, topics), prefix, nullptr);
}

Var Summarizer::extractor_log_likelihood(Graph& g, const EncodedDialogue& enc,
                                         const TopicTables& topics,
                                         const std::vector<std::size_t>& actions) const {
  if (actions.empty()) throw std::invalid_argument("extractor: empty action sequence");
  const std::size_t stop = stop_index(enc.size());
  std::vector<std::size_t> prefix(actions.begin(), actions.end() - 1);
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (prefix[i] == stop) throw std::invalid_argument("extractor: stop before the last action");
  Var lp = extractor_log_probs(g, enc, topics, prefix);
  return num::sum(num::select_cols(lp, actions));
}

Var Summarizer::extractor_nll(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                              const std::vector<std::size_t>& actions) const {
  return num::scale(extractor_log_likelihood(g, enc, topics, actions),
                    -1.0 / static_cast<double>(actions.size()));
}

Extraction Summarizer::extract(Graph& g, const EncodedDialogue& enc, const TopicTables& topics,
                               ExtractMode mode, num::Rng* rng, nn::AttentionTrace* trace) const {
  if (mode == ExtractMode::sample && !rng)
    throw std::invalid_argument("extract: sampling needs an rng");
  const std::size_t M = enc.size(), stop = stop_index(M);
  const std::size_t limit = std::min(config_.max_extract, M);
  auto sites = extractor_sites(g, enc, topics);
  Extraction out;
  std::vector<double> first_alpha;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (out.indices.size() < limit) {
    nn::AttentionTrace local;
    Var states = run_extractor_decoder(g, enc, sites, out.indices, &local);
    Var lp = pointer_log_probs(g, enc, states, out.indices);
    Tensor row = num::slice_rows(lp, lp.rows() - 1, 1).value();
    if (first_alpha.empty()) first_alpha = local.steps.back().alpha;
    if (trace) trace->steps.push_back(local.steps.back());

    std::size_t choice = 0;
    if (mode == ExtractMode::greedy) {
      choice = argmax(row, 0);
    } else {
      double total = 0.0;
      std::vector<double> p(M + 1);
      for (std::size_t k = 0; k <= M; ++k)
        total += p[k] = row(0, k) <= num::kMaskedLogProb ? 0.0 : std::exp(row(0, k));
      double u = unit(*rng) * total;
      choice = M;
      for (std::size_t k = 0; k <= M; ++k) {
        if (p[k] == 0.0) continue;
        if (u < p[k]) {
          choice = k;
          break;
        }
        u -= p[k];
      }
    }
    out.actions.push_back(choice);
    if (choice == stop) break;
    out.indices.push_back(choice);
  }
  if (out.indices.empty()) {
    out.used_fallback = true;
    out.indices.push_back(static_cast<std::size_t>(
        std::max_element(first_alpha.begin(), first_alpha.end()) - first_alpha.begin()));
  }
  return out;
}

RefinerMemory Summarizer::refiner_memory(Graph& g, const EncodedDialogue& enc,
                                         const TopicTables& topics,
                                         std::vector<std::size_t> extracted) const {
  if (extracted.empty()) throw std::invalid_argument("refine: no extracted utterances");
  std::sort(extracted.begin(), extracted.end());
  extracted.erase(std::unique(extracted.begin(), extracted.end()), extracted.end());
  RefinerMemory mem;
  std::vector<Var> parts;
  Var sep = num::gather_rows(g.param(*refiner_embed_), std::vector<std::size_t>{Vocabulary::kSep});
  for (std::size_t k = 0; k < extracted.size(); ++k) {
    const std::size_t i = extracted[k];
    if (i >= enc.size()) throw std::out_of_range("refine: utterance index out of range");
    if (k > 0) {
      parts.push_back(sep);
      mem.roles.push_back(enc.roles[extracted[k - 1]]);
    }
    if (enc.words[i].valid()) {
      parts.push_back(enc.words[i]);
      mem.roles.insert(mem.roles.end(), enc.token_ids[i].size(), enc.roles[i]);
    }
  }
  if (parts.empty()) throw std::invalid_argument("refine: extracted utterances hold no tokens");
  mem.states = parts.size() == 1 ? parts[0] : num::concat_rows(parts);
  Var ts = role_rows(topics.tau_s, mem.roles), to = role_rows(topics.tau_o, mem.roles);
  for (const auto& layer : ref_layers_) mem.sites.push_back(layer.cross.prepare(g, mem.states, ts, to));
  return mem;
}

Var Summarizer::refiner_logits(Graph& g, const RefinerMemory& mem,
                               const std::vector<std::uint32_t>& inputs,
                               nn::AttentionTrace* trace) const {
  if (inputs.empty()) throw std::invalid_argument("refiner: empty input sequence");
  std::vector<std::size_t> idx(inputs.begin(), inputs.end());
  Var table = g.param(*refiner_embed_);
  Var x = num::add(num::gather_rows(table, idx), positions(g, idx.size()));
  for (std::size_t l = 0; l < ref_layers_.size(); ++l)
    x = ref_layers_[l](g, x, mem.sites[l], l + 1 == ref_layers_.size() ? trace : nullptr);
  return num::matmul_nt(x, table);
}

Var Summarizer::refiner_nll(Graph& g, const RefinerMemory& mem,
                            const std::vector<std::uint32_t>& target) const {
  std::vector<std::uint32_t> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), target.begin(), target.end());
  std::vector<std::size_t> gold(target.begin(), target.end());
  gold.push_back(Vocabulary::kEos);
  Var lp = num::log_softmax_rows(refiner_logits(g, mem, inputs));
  return num::scale(num::sum(num::select_cols(lp, gold)), -1.0 / static_cast<double>(gold.size()));
}

Tensor Summarizer::next_token_log_probs(Graph& g, const RefinerMemory& mem,
                                        const std::vector<std::uint32_t>& prefix,
                                        std::size_t min_length) const {
  std::vector<std::uint32_t> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), prefix.begin(), prefix.end());
  Var logits = refiner_logits(g, mem, inputs);
  Tensor mask(1, vocab_.seq_size(), 1.0);
  for (std::uint32_t s : {Vocabulary::kPad, Vocabulary::kUnk, Vocabulary::kBos, Vocabulary::kSep})
    mask[s] = 0.0;
  if (prefix.size() < min_length) mask[Vocabulary::kEos] = 0.0;
  return num::log_softmax_rows(num::slice_rows(logits, inputs.size() - 1, 1), &mask).value();
}

std::vector<std::uint32_t> Summarizer::greedy_decode(Graph& g, const RefinerMemory& mem,
                                                     std::size_t max_length,
                                                     std::size_t min_length) const {
  std::vector<std::uint32_t> out;
  while (out.size() < max_length) {
    Tensor lp = next_token_log_probs(g, mem, out, min_length);
    const auto t = static_cast<std::uint32_t>(argmax(lp, 0));
    if (t == Vocabulary::kEos) break;
    out.push_back(t);
  }
  return out;
}

std::vector<std::uint32_t> Summarizer::decode(Graph& g, const RefinerMemory& mem,
                                              const DecodeConfig& cfg) const {
  if (cfg.beam_width == 0) throw std::invalid_argument("decode: beam width must be >= 1");
  if (cfg.max_length == 0) throw std::invalid_argument("decode: max length must be >= 1");
  if (cfg.min_length > cfg.max_length)
    throw std::invalid_argument("decode: min length exceeds max length");
  const std::size_t V = vocab_.seq_size();

  struct Hyp {
    std::vector<std::uint32_t> ids;  // without bos / eos
    double score = 0.0;
  };
  std::vector<Hyp> beams{Hyp{}}, finished;
  for (std::size_t step = 0; step < cfg.max_length && !beams.empty(); ++step) {
    struct Cand {
      std::size_t beam;
      std::uint32_t token;
      double score;
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      Tensor lp = next_token_log_probs(g, mem, beams[b].ids, cfg.min_length);
      for (std::uint32_t t = 0; t < V; ++t)
        if (lp[t] > num::kMaskedLogProb) cands.push_back({b, t, beams[b].score + lp[t]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.score > b.score; });
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      if (next.size() + finished.size() >= cfg.beam_width) break;
      Hyp h{beams[c.beam].ids, c.score};
      if (c.token == Vocabulary::kEos) {
        finished.push_back(std::move(h));
      } else {
        h.ids.push_back(c.token);
        if (h.ids.size() == cfg.max_length) finished.push_back(std::move(h));
        else next.push_back(std::move(h));
      }
    }
    beams = std::move(next);
  }
  finished.insert(finished.end(), beams.begin(), beams.end());
  auto best = std::max_element(finished.begin(), finished.end(),
                               [](const Hyp& a, const Hyp& b) { return a.score < b.score; });
  return best->ids;
}

}  // namespace satm::summ

#include "satm/report.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace satm::eval {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

// CSV field quoting for tokens that might contain a comma or quote.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Tokens as_characters(const Tokens& t) {
  return corpus::tokenize(corpus::detokenize(t, corpus::TokenMode::whitespace),
                          corpus::TokenMode::character);
}

}  // namespace

Scores score_pair(const Tokens& candidate, const Tokens& reference, BleuMode bleu_mode) {
  return Scores{rouge_n(candidate, reference, 1).f1, rouge_n(candidate, reference, 2).f1,
                rouge_l(candidate, reference).f1, bleu(candidate, reference, bleu_mode)};
}

MetricReport evaluate_corpus(const std::vector<std::string>& ids,
                             const std::vector<Tokens>& outputs,
                             const std::vector<Tokens>& references, corpus::TokenMode mode,
                             BleuMode bleu_mode) {
  if (outputs.size() != references.size() || ids.size() != outputs.size())
    throw std::invalid_argument("evaluate: " + std::to_string(outputs.size()) + " outputs, " +
                                std::to_string(references.size()) + " references and " +
                                std::to_string(ids.size()) + " ids must match");
  MetricReport r;
  r.token_mode = mode;
  r.bleu_mode = bleu_mode;
  r.ids = ids;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const bool chars = mode == corpus::TokenMode::character;
    const Scores s = chars ? score_pair(as_characters(outputs[i]), as_characters(references[i]),
                                        bleu_mode)
                           : score_pair(outputs[i], references[i], bleu_mode);
    r.per_dialogue.push_back(s);
    r.mean.rouge_1 += s.rouge_1;
    r.mean.rouge_2 += s.rouge_2;
    r.mean.rouge_l += s.rouge_l;
    r.mean.bleu += s.bleu;
  }
  if (const double n = static_cast<double>(r.count()); n > 0) {
    r.mean.rouge_1 /= n;
    r.mean.rouge_2 /= n;
    r.mean.rouge_l /= n;
    r.mean.bleu /= n;
  }
  return r;
}

void write_report_summary(std::ostream& out, const MetricReport& r) {
  out << "count=" << r.count() << '\n'
      << "token_mode=" << corpus::token_mode_name(r.token_mode) << '\n'
      << "bleu_mode=" << bleu_mode_name(r.bleu_mode) << '\n'
      << "rouge_1=" << shortest(r.mean.rouge_1) << '\n'
      << "rouge_2=" << shortest(r.mean.rouge_2) << '\n'
      << "rouge_l=" << shortest(r.mean.rouge_l) << '\n'
      << "bleu=" << shortest(r.mean.bleu) << '\n';
}

void write_report_csv(std::ostream& out, const MetricReport& r) {
  out << "id,rouge_1,rouge_2,rouge_l,bleu\n";
  for (std::size_t i = 0; i < r.count(); ++i) {
    const auto& s = r.per_dialogue[i];
    out << csv_field(r.ids[i]) << ',' << shortest(s.rouge_1) << ',' << shortest(s.rouge_2) << ','
        << shortest(s.rouge_l) << ',' << shortest(s.bleu) << '\n';
  }
}

std::vector<TopicVectorRow> topic_vector_rows(const topic::TopicModel& model) {
  std::vector<TopicVectorRow> rows;
  for (auto group : model.groups()) {
    const num::Tensor phi = model.phi_values(group);
    for (std::size_t k = 0; k < phi.rows(); ++k) {
      auto v = phi.row_view(k);
      rows.push_back({std::string(topic::topic_group_name(group)), k, {v.begin(), v.end()}});
    }
  }
  return rows;
}

void write_topic_vectors(std::ostream& out, const std::vector<TopicVectorRow>& rows) {
  const std::size_t h = rows.empty() ? 0 : rows.front().values.size();
  out << "group,topic_id";
  for (std::size_t j = 0; j < h; ++j) out << ",v" << j;
  out << '\n';
  for (const auto& r : rows) {
    if (r.values.size() != h) throw std::invalid_argument("topic vectors differ in width");
    out << r.group << ',' << r.topic_id;
    for (double v : r.values) out << ',' << shortest(v);
    out << '\n';
  }
}

std::vector<TopicVectorRow> read_topic_vectors(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("group,topic_id", 0) != 0)
    throw std::invalid_argument("topic vector file lacks its header");
  const std::size_t h = split(line, ',').size() - 2;
  std::vector<TopicVectorRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != h + 2)
      throw std::invalid_argument("topic vector line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(h + 2) + " fields");
    TopicVectorRow r;
    r.group = std::string(f[0]);
    r.topic_id = static_cast<std::size_t>(parse_double(f[1]));
    for (std::size_t j = 0; j < h; ++j) r.values.push_back(parse_double(f[j + 2]));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_topic_words(std::ostream& out, topic::TopicModel& model,
                       const corpus::Vocabulary& vocab, std::size_t k) {
  out << "group,topic_id,rank,token,prob\n";
  for (auto group : model.groups()) {
    const num::Tensor beta = model.beta(group);
    for (std::size_t t = 0; t < beta.rows(); ++t) {
      const auto top = topic::top_word_indices(beta, t, k, vocab);
      for (std::size_t r = 0; r < top.size(); ++r)
        out << topic::topic_group_name(group) << ',' << t << ',' << r + 1 << ','
            << csv_field(vocab.token(top[r])) << ',' << shortest(beta(t, top[r])) << '\n';
    }
  }
}

void write_attention_csv(std::ostream& out, const nn::AttentionTrace& trace) {
  out << "step,element,alpha_q,alpha_t,alpha,p_sel\n";
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    const auto& st = trace.steps[s];
    for (std::size_t j = 0; j < st.alpha.size(); ++j)
      out << s << ',' << j << ',' << shortest(st.alpha_q[j]) << ',' << shortest(st.alpha_t[j])
          << ',' << shortest(st.alpha[j]) << ',' << shortest(st.p_sel) << '\n';
  }
}

BootstrapResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t samples, num::Rng& rng) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("paired bootstrap needs two non-empty lists of equal length");
  if (samples == 0) throw std::invalid_argument("paired bootstrap needs samples >= 1");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  BootstrapResult res;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    res.mean_difference += diff[i];
  }
  res.mean_difference /= static_cast<double>(n);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> means(samples);
  std::size_t not_better = 0;
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += diff[pick(rng)];
    m = s / static_cast<double>(n);
    if (m <= 0.0) ++not_better;
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(samples - 1) + 0.5);
    return means[std::min(idx, samples - 1)];
  };
  res.ci_low = quantile(0.025);
  res.ci_high = quantile(0.975);
  res.p_value = static_cast<double>(not_better) / static_cast<double>(samples);
  return res;
}

}  // namespace satm::eval

#include "satm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace satm::eval {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Ngram, std::size_t> out;
  if (n == 0 || t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Ngram(t.begin() + i, t.begin() + i + n)];
  return out;
}

std::size_t clipped_overlap(const std::map<Ngram, std::size_t>& cand,
                            const std::map<Ngram, std::size_t>& ref) {
  std::size_t hits = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) hits += std::min(c, it->second);
  }
  return hits;
}

Prf from_counts(std::size_t hits, std::size_t cand_total, std::size_t ref_total) {
  Prf s;
  s.precision = cand_total ? static_cast<double>(hits) / cand_total : 0.0;
  s.recall = ref_total ? static_cast<double>(hits) / ref_total : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

}  // namespace

double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

Prf rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be >= 1");
  auto c = ngram_counts(candidate, n);
  auto r = ngram_counts(reference, n);
  const std::size_t ct = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  const std::size_t rt = reference.size() >= n ? reference.size() - n + 1 : 0;
  return from_counts(clipped_overlap(c, r), ct, rt);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  // Two-row DP.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf rouge_l(const Tokens& candidate, const Tokens& reference) {
  return from_counts(lcs_length(candidate, reference), candidate.size(), reference.size());
}

NgramPrecision modified_precision(const Tokens& candidate, const Tokens& reference,
                                  std::size_t n) {
  NgramPrecision p;
  if (n == 0 || candidate.size() < n) return p;
  p.total = candidate.size() - n + 1;
  p.matches = clipped_overlap(ngram_counts(candidate, n), ngram_counts(reference, n));
  return p;
}

std::string_view bleu_mode_name(BleuMode m) {
  return m == BleuMode::arithmetic ? "arithmetic" : "geometric";
}

double brevity_penalty(std::size_t c, std::size_t r) {
  if (c == 0) return 0.0;
  if (c > r) return 1.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

double bleu(const Tokens& candidate, const Tokens& reference, BleuMode mode) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double bp = brevity_penalty(candidate.size(), reference.size());
  if (mode == BleuMode::arithmetic) {
    const std::size_t m = std::min<std::size_t>(4, candidate.size());
    double total = 0.0;
    for (std::size_t n = 1; n <= m; ++n) {
      auto p = modified_precision(candidate, reference, n);
      total += static_cast<double>(p.matches) / static_cast<double>(p.total);
    }
    return bp * total / static_cast<double>(m);
  }
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto p = modified_precision(candidate, reference, n);
    if (p.matches == 0) return 0.0;
    log_sum += std::log(static_cast<double>(p.matches) / static_cast<double>(p.total));
  }
  return bp * std::exp(log_sum / 4.0);
}

std::string_view reward_metric_name(RewardMetric m) {
  switch (m) {
    case RewardMetric::rouge_1: return "rouge-1";
    case RewardMetric::rouge_2: return "rouge-2";
    case RewardMetric::rouge_l: return "rouge-l";
  }
  return "?";
}

RewardMetric parse_reward_metric(std::string_view s) {
  if (s == "rouge-1") return RewardMetric::rouge_1;
  if (s == "rouge-2") return RewardMetric::rouge_2;
  if (s == "rouge-l") return RewardMetric::rouge_l;
  throw std::invalid_argument("unknown metric '" + std::string(s) +
                              "' (expected rouge-1, rouge-2 or rouge-l)");
}

double metric_f1(RewardMetric m, const Tokens& c, const Tokens& r) {
  switch (m) {
    case RewardMetric::rouge_1: return rouge_n(c, r, 1).f1;
    case RewardMetric::rouge_2: return rouge_n(c, r, 2).f1;
    case RewardMetric::rouge_l: return rouge_l(c, r).f1;
  }
  return 0.0;
}

}  // namespace satm::eval

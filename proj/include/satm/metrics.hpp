#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace satm::eval {

using Tokens = std::vector<std::string>;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// F1 from precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

/// Clipped n-gram overlap. Empty sequences (or n longer than either) give 0.
Prf rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n);
std::size_t lcs_length(const Tokens& a, const Tokens& b);
Prf rouge_l(const Tokens& candidate, const Tokens& reference);

struct NgramPrecision {
  std::size_t matches = 0;
  std::size_t total = 0;
};
NgramPrecision modified_precision(const Tokens& candidate, const Tokens& reference, std::size_t n);

enum class BleuMode {
  /// Arithmetic mean of p_1..p_m with m = min(4, |candidate|), times the
  /// brevity penalty.
  arithmetic,
  /// Standard BLEU-4: geometric mean of p_1..p_4, times the brevity penalty.
  geometric,
};

std::string_view bleu_mode_name(BleuMode m);
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);
double bleu(const Tokens& candidate, const Tokens& reference,
            BleuMode mode = BleuMode::arithmetic);

enum class RewardMetric { rouge_1, rouge_2, rouge_l };

std::string_view reward_metric_name(RewardMetric m);
RewardMetric parse_reward_metric(std::string_view s);
double metric_f1(RewardMetric m, const Tokens& candidate, const Tokens& reference);

}  // namespace satm::eval

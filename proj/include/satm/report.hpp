#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "satm/attention.hpp"
#include "satm/corpus.hpp"
#include "satm/metrics.hpp"
#include "satm/optim.hpp"
#include "satm/topic_model.hpp"

namespace satm::eval {

struct Scores {
  double rouge_1 = 0.0;
  double rouge_2 = 0.0;
  double rouge_l = 0.0;
  double bleu = 0.0;
};

Scores score_pair(const Tokens& candidate, const Tokens& reference, BleuMode bleu_mode);

struct MetricReport {
  corpus::TokenMode token_mode = corpus::TokenMode::whitespace;
  BleuMode bleu_mode = BleuMode::arithmetic;
  std::vector<std::string> ids;
  std::vector<Scores> per_dialogue;
  Scores mean;  // arithmetic mean of per_dialogue
  std::size_t count() const { return per_dialogue.size(); }
};

/// Scores aligned outputs against references. Character mode re-splits both
/// sides into code points with whitespace removed. Throws std::invalid_argument
/// when the lists differ in length.
MetricReport evaluate_corpus(const std::vector<std::string>& ids,
                             const std::vector<Tokens>& outputs,
                             const std::vector<Tokens>& references, corpus::TokenMode mode,
                             BleuMode bleu_mode = BleuMode::arithmetic);

/// key=value lines: counts, modes and the four corpus means.
void write_report_summary(std::ostream& out, const MetricReport& r);
/// id,rouge_1,rouge_2,rouge_l,bleu
void write_report_csv(std::ostream& out, const MetricReport& r);

// Topic exports. Rows follow the model's groups in order: informative then
// other for SATM, general for NTM.

struct TopicVectorRow {
  std::string group;
  std::size_t topic_id = 0;
  std::vector<double> values;
};

std::vector<TopicVectorRow> topic_vector_rows(const topic::TopicModel& model);
/// CSV header group,topic_id,v0..v{H-1}; values printed round-trip exact.
void write_topic_vectors(std::ostream& out, const std::vector<TopicVectorRow>& rows);
std::vector<TopicVectorRow> read_topic_vectors(std::istream& in);

/// group,topic_id,rank,token,prob with k rows per topic (fewer if |V| < k).
void write_topic_words(std::ostream& out, topic::TopicModel& model,
                       const corpus::Vocabulary& vocab, std::size_t k);

/// step,element,alpha_q,alpha_t,alpha,p_sel; one row per memory element per step.
void write_attention_csv(std::ostream& out, const nn::AttentionTrace& trace);

struct BootstrapResult {
  double mean_difference = 0.0;  // mean(a - b)
  double ci_low = 0.0;           // 2.5% quantile of resampled mean differences
  double ci_high = 0.0;          // 97.5% quantile
  double p_value = 0.0;          // fraction of resamples with mean difference <= 0
};

/// Paired bootstrap over per-dialogue scores of two systems.
BootstrapResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t samples, num::Rng& rng);

}  // namespace satm::eval

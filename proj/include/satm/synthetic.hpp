#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "satm/corpus.hpp"

namespace satm::corpus {

/// Planted-topic dialogue generator. Informative utterances draw words from
/// the dialogue's active groups; chit-chat utterances draw only from the
/// noise pool. Summaries list the distinct group words of the informative
/// utterances in order of first appearance.
struct SyntheticSpec {
  std::size_t groups = 3;
  std::size_t words_per_group = 10;
  std::size_t noise_pool = 10;
  std::size_t dialogues = 200;
  std::size_t utterances = 6;
  std::size_t tokens_per_utterance = 8;
  std::size_t active_groups = 1;
  /// Per-token probability that an informative utterance token is noise.
  double noise_rate = 0.2;
  /// Per-utterance probability of an all-noise chit-chat utterance.
  double chitchat_rate = 0.4;
  std::size_t summary_length = 12;
  std::uint64_t seed = 1;
};

/// Throws std::invalid_argument with an actionable message.
void validate(const SyntheticSpec& spec);

struct SyntheticCorpus {
  std::vector<Dialogue> dialogues;
  std::vector<std::vector<std::string>> group_words;
  std::vector<std::string> noise_words;
  /// Ground truth: dialogue id -> active group ids (ascending).
  std::map<std::string, std::vector<std::size_t>> active_groups;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Sidecar format: one line per dialogue, "<id>\t<g1>,<g2>,...".
void write_ground_truth(std::ostream& out, const SyntheticCorpus& corpus);
std::map<std::string, std::vector<std::size_t>> read_ground_truth(std::istream& in);
/// Group listing: "group\t<g>\t<w1> <w2> ..." lines then "noise\t-\t<w...>".
void write_groups(std::ostream& out, const SyntheticCorpus& corpus);

std::string group_word(std::size_t group, std::size_t word);
std::string noise_word(std::size_t index);

}  // namespace satm::corpus

#include "satm/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace satm::corpus {

std::string group_word(std::size_t group, std::size_t word) {
  return "g" + std::to_string(group) + "w" + std::to_string(word);
}

std::string noise_word(std::size_t index) { return "n" + std::to_string(index); }

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic spec: " + msg); };
  if (spec.groups == 0) fail("at least one informative group is required");
  if (spec.active_groups == 0) fail("active_groups must be >= 1");
  if (spec.active_groups > spec.groups)
    fail("active_groups (" + std::to_string(spec.active_groups) + ") exceeds groups (" +
         std::to_string(spec.groups) + ")");
  if (spec.words_per_group == 0) fail("words_per_group must be >= 1");
  if (spec.utterances == 0) fail("utterances must be >= 1");
  if (spec.tokens_per_utterance == 0) fail("tokens_per_utterance must be >= 1");
  if (spec.summary_length == 0) fail("summary_length must be >= 1");
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate <= 1.0)) fail("noise_rate must be in [0,1]");
  if (!(spec.chitchat_rate >= 0.0 && spec.chitchat_rate <= 1.0))
    fail("chitchat_rate must be in [0,1]");
  if (spec.noise_rate >= 1.0)
    fail("noise_rate 1 leaves no informative words, so summaries would be empty");
  if ((spec.noise_rate > 0.0 || spec.chitchat_rate > 0.0) && spec.noise_pool == 0)
    fail("noise rates are positive but the noise pool is empty");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticCorpus out;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    std::vector<std::string> words;
    for (std::size_t w = 0; w < spec.words_per_group; ++w) words.push_back(group_word(g, w));
    out.group_words.push_back(std::move(words));
  }
  for (std::size_t n = 0; n < spec.noise_pool; ++n) out.noise_words.push_back(noise_word(n));

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };

  const std::size_t width = std::to_string(spec.dialogues).size();
  for (std::size_t d = 0; d < spec.dialogues; ++d) {
    std::vector<std::size_t> groups(spec.groups);
    for (std::size_t g = 0; g < spec.groups; ++g) groups[g] = g;
    std::shuffle(groups.begin(), groups.end(), rng);
    groups.resize(spec.active_groups);
    std::sort(groups.begin(), groups.end());

    std::vector<std::string> pool;
    for (std::size_t g : groups)
      pool.insert(pool.end(), out.group_words[g].begin(), out.group_words[g].end());

    std::vector<bool> chitchat(spec.utterances);
    for (std::size_t u = 0; u < spec.utterances; ++u)
      chitchat[u] = spec.noise_pool > 0 && unit(rng) < spec.chitchat_rate;
    if (std::all_of(chitchat.begin(), chitchat.end(), [](bool b) { return b; }))
      chitchat[pick(spec.utterances)] = false;
    if (spec.chitchat_rate > 0.0 && spec.noise_pool > 0 && spec.utterances >= 2 &&
        std::none_of(chitchat.begin(), chitchat.end(), [](bool b) { return b; }))
      chitchat[pick(spec.utterances)] = true;

    Dialogue dlg;
    std::string id = std::to_string(d);
    dlg.id = "syn" + std::string(width - id.size(), '0') + id;
    std::vector<std::string> summary;
    std::set<std::string> seen;
    for (std::size_t u = 0; u < spec.utterances; ++u) {
      Utterance utt;
      utt.role = u % 2 == 0 ? Role::customer : Role::agent;
      bool has_group_word = false;
      for (std::size_t t = 0; t < spec.tokens_per_utterance; ++t) {
        const bool noise = chitchat[u] || (spec.noise_pool > 0 && unit(rng) < spec.noise_rate);
        if (noise) {
          utt.tokens.push_back(out.noise_words[pick(spec.noise_pool)]);
        } else {
          utt.tokens.push_back(pool[pick(pool.size())]);
          has_group_word = true;
        }
      }
      if (!chitchat[u] && !has_group_word) utt.tokens.back() = pool[pick(pool.size())];
      if (!chitchat[u]) {
        for (const auto& tok : utt.tokens) {
          if (tok.front() != 'g' || seen.count(tok)) continue;
          seen.insert(tok);
          if (summary.size() < spec.summary_length) summary.push_back(tok);
        }
      }
      dlg.utterances.push_back(std::move(utt));
    }
    dlg.summary = std::move(summary);
    out.active_groups[dlg.id] = groups;
    out.dialogues.push_back(std::move(dlg));
  }
  return out;
}

void write_ground_truth(std::ostream& out, const SyntheticCorpus& corpus) {
  for (const Dialogue& d : corpus.dialogues) {
    out << d.id << '\t';
    const auto& groups = corpus.active_groups.at(d.id);
    for (std::size_t i = 0; i < groups.size(); ++i) out << (i ? "," : "") << groups[i];
    out << '\n';
  }
}

std::map<std::string, std::vector<std::size_t>> read_ground_truth(std::istream& in) {
  std::map<std::string, std::vector<std::size_t>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw CorpusError(n, "ground-truth line lacks a tab");
    std::vector<std::size_t> groups;
    std::stringstream ss(line.substr(tab + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        groups.push_back(std::stoul(item));
      } catch (const std::exception&) {
        throw CorpusError(n, "bad group id '" + item + "'");
      }
    }
    out[line.substr(0, tab)] = std::move(groups);
  }
  return out;
}

void write_groups(std::ostream& out, const SyntheticCorpus& corpus) {
  for (std::size_t g = 0; g < corpus.group_words.size(); ++g) {
    out << "group\t" << g << '\t';
    for (std::size_t i = 0; i < corpus.group_words[g].size(); ++i)
      out << (i ? " " : "") << corpus.group_words[g][i];
    out << '\n';
  }
  out << "noise\t-\t";
  for (std::size_t i = 0; i < corpus.noise_words.size(); ++i)
    out << (i ? " " : "") << corpus.noise_words[i];
  out << '\n';
}

}  // namespace satm::corpus

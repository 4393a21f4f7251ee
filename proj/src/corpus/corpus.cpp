#include "satm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include "json.hpp"

namespace satm::corpus {

using json = nlohmann::json;

std::string_view role_name(Role r) { return r == Role::customer ? "customer" : "agent"; }

std::optional<Role> parse_role(std::string_view s) {
  if (s == "customer") return Role::customer;
  if (s == "agent") return Role::agent;
  return std::nullopt;
}

std::string_view token_mode_name(TokenMode m) {
  return m == TokenMode::whitespace ? "whitespace" : "character";
}

std::optional<TokenMode> parse_token_mode(std::string_view s) {
  if (s == "whitespace" || s == "word") return TokenMode::whitespace;
  if (s == "character" || s == "char") return TokenMode::character;
  return std::nullopt;
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte, keep as-is
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenMode mode) {
  std::vector<std::string> out;
  if (mode == TokenMode::whitespace) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    const std::size_t n =
        std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    out.emplace_back(text.substr(i, n));
    i += n;
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens, TokenMode mode) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && mode == TokenMode::whitespace) out += ' ';
    out += tokens[i];
  }
  return out;
}

CorpusError::CorpusError(std::size_t line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

namespace {

Dialogue parse_record(const std::string& text, std::size_t line, TokenMode mode) {
  json rec;
  try {
    rec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorpusError(line, std::string("malformed JSON: ") + e.what());
  }
  if (!rec.is_object()) throw CorpusError(line, "record is not an object");
  Dialogue d;
  const auto id = rec.find("id");
  if (id == rec.end() || !id->is_string()) throw CorpusError(line, "missing string field 'id'");
  d.id = id->get<std::string>();
  const auto utts = rec.find("utterances");
  if (utts == rec.end() || !utts->is_array() || utts->empty())
    throw CorpusError(line, "'utterances' must be a non-empty array");
  for (std::size_t k = 0; k < utts->size(); ++k) {
    const json& u = (*utts)[k];
    const std::string where = "utterance " + std::to_string(k);
    if (!u.is_object()) throw CorpusError(line, where + " is not an object");
    const auto role = u.find("role");
    if (role == u.end() || !role->is_string()) throw CorpusError(line, where + ": missing role");
    const auto parsed = parse_role(role->get<std::string>());
    if (!parsed)
      throw CorpusError(line, where + ": unknown role '" + role->get<std::string>() + "'");
    const auto txt = u.find("text");
    if (txt == u.end() || !txt->is_string()) throw CorpusError(line, where + ": missing text");
    Utterance utt{*parsed, tokenize(txt->get<std::string>(), mode)};
    if (utt.tokens.empty()) throw CorpusError(line, where + ": empty text");
    d.utterances.push_back(std::move(utt));
  }
  if (const auto s = rec.find("summary"); s != rec.end() && !s->is_null()) {
    if (!s->is_string()) throw CorpusError(line, "'summary' must be a string");
    d.summary = tokenize(s->get<std::string>(), mode);
  }
  return d;
}

}  // namespace

std::vector<Dialogue> parse_corpus(std::istream& in, TokenMode mode) {
  std::vector<Dialogue> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), is_space)) continue;
    out.push_back(parse_record(text, line, mode));
  }
  return out;
}

std::vector<Dialogue> load_corpus(const std::string& path, TokenMode mode) {
  std::ifstream in(path);
  if (!in) throw CorpusError(0, "cannot open corpus file " + path);
  return parse_corpus(in, mode);
}

void write_corpus(std::ostream& out, const std::vector<Dialogue>& corpus, TokenMode mode) {
  for (const Dialogue& d : corpus) {
    json rec;
    rec["id"] = d.id;
    json utts = json::array();
    for (const Utterance& u : d.utterances)
      utts.push_back({{"role", std::string(role_name(u.role))}, {"text", detokenize(u.tokens, mode)}});
    rec["utterances"] = std::move(utts);
    if (d.summary) rec["summary"] = detokenize(*d.summary, mode);
    out << rec.dump() << '\n';
  }
}

void save_corpus(const std::string& path, const std::vector<Dialogue>& corpus, TokenMode mode) {
  std::ofstream out(path);
  if (!out) throw CorpusError(0, "cannot write corpus file " + path);
  write_corpus(out, corpus, mode);
}

StopWords default_stop_words(TokenMode mode) {
  if (mode == TokenMode::character) {
    return {"的", "了", "是", "在", "我", "你", "他", "她", "它", "们", "这", "那", "吗",
            "呢", "吧", "啊", "嗯", "哦", "和", "与", "就", "也", "都", "而", "及", "着",
            "或", "，", "。", "？", "！", "、"};
  }
  return {"a",    "an",   "and", "are",  "as",   "at",   "be",   "but", "by",  "for",
          "from", "has",  "have", "he",  "i",    "if",   "in",   "is",  "it",  "its",
          "me",   "my",   "no",  "not",  "of",   "on",   "or",   "our", "she", "so",
          "that", "the",  "their", "them", "then", "there", "they", "this", "to",  "was",
          "we",   "were", "what", "when", "which", "who", "will", "with", "you", "your"};
}

StopWords load_stop_words(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError(0, "cannot open stop-word file " + path);
  StopWords out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line, TokenMode::whitespace);
    if (!toks.empty()) out.insert(toks.front());
  }
  return out;
}

BagOfWords::BagOfWords(std::vector<std::pair<std::uint32_t, std::uint32_t>> entries) {
  for (auto [i, c] : entries) add(i, c);
}

void BagOfWords::add(std::uint32_t index, std::uint32_t count) {
  if (count == 0) return;
  auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                             [](const auto& e, std::uint32_t i) { return e.first < i; });
  if (it != entries_.end() && it->first == index)
    it->second += count;
  else
    entries_.insert(it, {index, count});
  total_ += count;
}

std::uint32_t BagOfWords::count(std::uint32_t index) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                             [](const auto& e, std::uint32_t i) { return e.first < i; });
  return (it != entries_.end() && it->first == index) ? it->second : 0;
}

std::vector<std::size_t> BagOfWords::indices() const {
  std::vector<std::size_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::vector<double> BagOfWords::weights() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(static_cast<double>(e.second));
  return out;
}

std::vector<double> BagOfWords::dense(std::size_t vocab_size) const {
  std::vector<double> out(vocab_size, 0.0);
  for (const auto& [i, c] : entries_) {
    if (i >= vocab_size) throw std::out_of_range("bag index exceeds vocabulary size");
    out[i] = c;
  }
  return out;
}

BagOfWords operator+(const BagOfWords& a, const BagOfWords& b) {
  BagOfWords out = a;
  for (const auto& [i, c] : b.entries()) out.add(i, c);
  return out;
}

BagOfWords subtract(const BagOfWords& a, const BagOfWords& b) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (const auto& [i, c] : a.entries()) {
    const std::uint32_t take = b.count(i);
    if (take > c) throw std::invalid_argument("bag subtraction would go negative");
    if (c > take) out.emplace_back(i, c - take);
  }
  for (const auto& [i, c] : b.entries())
    if (a.count(i) == 0) throw std::invalid_argument("bag subtraction would go negative");
  return BagOfWords(std::move(out));
}

bool dominated_by(const BagOfWords& small, const BagOfWords& big) {
  return std::all_of(small.entries().begin(), small.entries().end(),
                     [&](const auto& e) { return e.second <= big.count(e.first); });
}

Vocabulary::Vocabulary(std::vector<std::string> bow_tokens, std::vector<std::string> seq_tokens,
                       StopWords stop_words, std::uint32_t min_count)
    : bow_tokens_(std::move(bow_tokens)),
      seq_tokens_(std::move(seq_tokens)),
      stop_words_(std::move(stop_words)),
      min_count_(min_count) {
  for (std::uint32_t i = 0; i < bow_tokens_.size(); ++i)
    if (!bow_index_.emplace(bow_tokens_[i], i).second)
      throw std::invalid_argument("duplicate vocabulary token " + bow_tokens_[i]);
  if (seq_tokens_.size() < kSpecialCount)
    throw std::invalid_argument("sequence vocabulary lacks special tokens");
  for (std::uint32_t i = 0; i < seq_tokens_.size(); ++i)
    if (!seq_index_.emplace(seq_tokens_[i], i).second)
      throw std::invalid_argument("duplicate sequence token " + seq_tokens_[i]);
}

std::optional<std::uint32_t> Vocabulary::index(std::string_view token) const {
  auto it = bow_index_.find(std::string(token));
  if (it == bow_index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::seq_index(std::string_view token) const {
  auto it = seq_index_.find(std::string(token));
  return it == seq_index_.end() ? kUnk : it->second;
}

namespace {

std::vector<std::string> ranked(const std::map<std::string, std::uint64_t>& counts,
                                std::uint64_t min_count, const StopWords* skip) {
  std::vector<std::pair<std::string, std::uint64_t>> items;
  for (const auto& [tok, c] : counts) {
    if (c < min_count) continue;
    if (skip && skip->count(tok)) continue;
    items.emplace_back(tok, c);
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [tok, c] : items) out.push_back(tok);
  return out;
}

}  // namespace

Vocabulary build_vocab(const std::vector<Dialogue>& corpus, const StopWords& stop_words,
                       std::uint32_t min_count) {
  if (corpus.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  // std::map iteration gives lexicographic order; stable_sort keeps it as the tie-break.
  std::map<std::string, std::uint64_t> dialogue_counts;
  std::map<std::string, std::uint64_t> all_counts;
  for (const Dialogue& d : corpus) {
    for (const Utterance& u : d.utterances)
      for (const auto& t : u.tokens) {
        ++dialogue_counts[t];
        ++all_counts[t];
      }
    if (d.summary)
      for (const auto& t : *d.summary) ++all_counts[t];
  }
  std::vector<std::string> seq = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
  for (auto& t : ranked(all_counts, 1, nullptr))
    if (std::find(seq.begin(), seq.begin() + Vocabulary::kSpecialCount, t) ==
        seq.begin() + Vocabulary::kSpecialCount)
      seq.push_back(std::move(t));
  return Vocabulary(ranked(dialogue_counts, std::max<std::uint32_t>(min_count, 1), &stop_words),
                    std::move(seq), stop_words, min_count);
}

RoleBags bags_for_dialogue(const Dialogue& d, const Vocabulary& vocab) {
  RoleBags bags;
  for (const Utterance& u : d.utterances) {
    BagOfWords& role_bag = u.role == Role::customer ? bags.customer : bags.agent;
    for (const auto& t : u.tokens) {
      if (const auto i = vocab.index(t)) {
        role_bag.add(*i);
        bags.dialogue.add(*i);
      }
    }
  }
  return bags;
}

BagOfWords summary_subset(const Dialogue& d, const Vocabulary& vocab) {
  if (!d.summary) throw std::invalid_argument("dialogue " + d.id + " has no summary");
  std::set<std::uint32_t> in_summary;
  for (const auto& t : *d.summary)
    if (const auto i = vocab.index(t)) in_summary.insert(*i);
  const BagOfWords whole = bags_for_dialogue(d, vocab).dialogue;
  BagOfWords s;
  for (const auto& [i, c] : whole.entries())
    if (in_summary.count(i)) s.add(i, c);
  return s;
}

}  // namespace satm::corpus

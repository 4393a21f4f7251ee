#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace satm::corpus {

enum class Role : std::uint8_t { customer = 0, agent = 1 };

std::string_view role_name(Role r);
/// Strict: only the exact strings "customer" and "agent" are accepted.
std::optional<Role> parse_role(std::string_view s);

enum class TokenMode { whitespace, character };

std::string_view token_mode_name(TokenMode m);
std::optional<TokenMode> parse_token_mode(std::string_view s);

/// Whitespace mode splits on ASCII whitespace; character mode yields one
/// token per UTF-8 code point and drops whitespace.
std::vector<std::string> tokenize(std::string_view text, TokenMode mode);
std::string detokenize(const std::vector<std::string>& tokens, TokenMode mode);

struct Utterance {
  Role role = Role::customer;
  std::vector<std::string> tokens;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
  std::optional<std::vector<std::string>> summary;
};

/// Parse failure; line() is 1-based, 0 when not tied to a line.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::vector<Dialogue> parse_corpus(std::istream& in, TokenMode mode);
std::vector<Dialogue> load_corpus(const std::string& path, TokenMode mode);
void write_corpus(std::ostream& out, const std::vector<Dialogue>& corpus, TokenMode mode);
void save_corpus(const std::string& path, const std::vector<Dialogue>& corpus, TokenMode mode);

using StopWords = std::set<std::string>;

StopWords default_stop_words(TokenMode mode);
StopWords load_stop_words(const std::string& path);

/// Sparse count vector over the bag-of-words vocabulary, sorted by index.
class BagOfWords {
 public:
  BagOfWords() = default;
  explicit BagOfWords(std::vector<std::pair<std::uint32_t, std::uint32_t>> entries);

  void add(std::uint32_t index, std::uint32_t count = 1);
  std::uint32_t count(std::uint32_t index) const;
  bool empty() const { return entries_.empty(); }
  std::uint64_t total() const { return total_; }
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& entries() const {
    return entries_;
  }
  std::vector<std::size_t> indices() const;
  std::vector<double> weights() const;
  /// Dense [1, vocab_size] row of counts.
  std::vector<double> dense(std::size_t vocab_size) const;

  friend bool operator==(const BagOfWords&, const BagOfWords&) = default;

 private:
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries_;
  std::uint64_t total_ = 0;
};

BagOfWords operator+(const BagOfWords& a, const BagOfWords& b);
/// a - b; throws std::invalid_argument if any count would go negative.
BagOfWords subtract(const BagOfWords& a, const BagOfWords& b);
bool dominated_by(const BagOfWords& small, const BagOfWords& big);

/// Two index spaces over one corpus: the bag-of-words space (stop words and
/// rare tokens removed) and the sequence space (every token plus specials).
class Vocabulary {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kUnk = 1;
  static constexpr std::uint32_t kBos = 2;
  static constexpr std::uint32_t kEos = 3;
  static constexpr std::uint32_t kSep = 4;
  static constexpr std::uint32_t kSpecialCount = 5;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> bow_tokens, std::vector<std::string> seq_tokens,
             StopWords stop_words, std::uint32_t min_count);

  std::size_t size() const { return bow_tokens_.size(); }
  const std::string& token(std::uint32_t index) const { return bow_tokens_.at(index); }
  std::optional<std::uint32_t> index(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return bow_tokens_; }

  std::size_t seq_size() const { return seq_tokens_.size(); }
  const std::string& seq_token(std::uint32_t index) const { return seq_tokens_.at(index); }
  /// Unknown tokens map to kUnk.
  std::uint32_t seq_index(std::string_view token) const;
  const std::vector<std::string>& seq_tokens() const { return seq_tokens_; }

  const StopWords& stop_words() const { return stop_words_; }
  std::uint32_t min_count() const { return min_count_; }

 private:
  std::vector<std::string> bow_tokens_;
  std::vector<std::string> seq_tokens_;
  std::unordered_map<std::string, std::uint32_t> bow_index_;
  std::unordered_map<std::string, std::uint32_t> seq_index_;
  StopWords stop_words_;
  std::uint32_t min_count_ = 1;
};

/// Index order is (count desc, token asc) in both spaces. Counts for the
/// bag-of-words space come from dialogue utterances only.
Vocabulary build_vocab(const std::vector<Dialogue>& corpus, const StopWords& stop_words,
                       std::uint32_t min_count);

struct RoleBags {
  BagOfWords dialogue;
  BagOfWords customer;
  BagOfWords agent;
};

RoleBags bags_for_dialogue(const Dialogue& d, const Vocabulary& vocab);

/// Words present in both summary and dialogue, carrying their full dialogue
/// counts. Throws std::invalid_argument if the dialogue has no summary.
BagOfWords summary_subset(const Dialogue& d, const Vocabulary& vocab);

}  // namespace satm::corpus

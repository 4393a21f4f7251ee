#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "satm/app.hpp"

namespace satm::app {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Binds one config key to a TrainConfig field in both directions.
struct Field {
  std::string key;
  std::function<void(train::TrainConfig&, const RunConfig&, const std::string&)> read;
  std::function<std::string(const train::TrainConfig&)> write;
};

template <class T>
Field size_field(std::string key, T train::TrainConfig::*m) {
  return {key,
          [m](train::TrainConfig& t, const RunConfig& c, const std::string& k) {
            t.*m = static_cast<T>(c.get_uint(k, t.*m));
          },
          [m](const train::TrainConfig& t) { return std::to_string(t.*m); }};
}

template <class T>
Field summ_field(std::string key, T summ::SummarizerConfig::*m) {
  return {key,
          [m](train::TrainConfig& t, const RunConfig& c, const std::string& k) {
            if constexpr (std::is_same_v<T, bool>)
              t.summarizer.*m = c.get_bool(k, t.summarizer.*m);
            else
              t.summarizer.*m = static_cast<T>(c.get_uint(k, t.summarizer.*m));
          },
          [m](const train::TrainConfig& t) {
            if constexpr (std::is_same_v<T, bool>)
              return std::string(t.summarizer.*m ? "true" : "false");
            else
              return std::to_string(t.summarizer.*m);
          }};
}

Field double_field(std::string key, double train::TrainConfig::*m) {
  return {key,
          [m](train::TrainConfig& t, const RunConfig& c, const std::string& k) {
            t.*m = c.get_double(k, t.*m);
          },
          [m](const train::TrainConfig& t) { return shortest(t.*m); }};
}

Field bool_field(std::string key, bool train::TrainConfig::*m) {
  return {key,
          [m](train::TrainConfig& t, const RunConfig& c, const std::string& k) {
            t.*m = c.get_bool(k, t.*m);
          },
          [m](const train::TrainConfig& t) { return std::string(t.*m ? "true" : "false"); }};
}

Field metric_field(std::string key, eval::RewardMetric train::TrainConfig::*m) {
  return {key,
          [m](train::TrainConfig& t, const RunConfig& c, const std::string& k) {
            if (!c.has(k)) return;
            try {
              t.*m = eval::parse_reward_metric(c.get(k));
            } catch (const std::invalid_argument&) {
              throw ConfigError(k + ": expected rouge-1, rouge-2 or rouge-l, got '" + c.get(k) +
                                "'");
            }
          },
          [m](const train::TrainConfig& t) { return std::string(eval::reward_metric_name(t.*m)); }};
}

const std::vector<Field>& fields() {
  using T = train::TrainConfig;
  using S = summ::SummarizerConfig;
  static const std::vector<Field> f = {
      summ_field("model.d_model", &S::d_model),
      summ_field("model.heads", &S::heads),
      summ_field("model.ff_dim", &S::ff_dim),
      summ_field("model.word_layers", &S::word_layers),
      summ_field("model.utterance_layers", &S::utterance_layers),
      summ_field("model.decoder_layers", &S::decoder_layers),
      summ_field("model.max_utterances", &S::max_utterances),
      summ_field("model.max_utterance_tokens", &S::max_utterance_tokens),
      summ_field("model.share_embeddings", &S::share_embeddings),
      bool_field("topic.enabled", &T::use_topics),
      {"topic.mode",
       [](T& t, const RunConfig& c, const std::string& k) {
         const std::string v = c.get(k, std::string(topic::topic_mode_name(t.topic_mode)));
         if (v == "satm") t.topic_mode = topic::TopicMode::satm;
         else if (v == "ntm") t.topic_mode = topic::TopicMode::ntm;
         else throw ConfigError(k + ": expected ntm or satm, got '" + v + "'");
       },
       [](const T& t) { return std::string(topic::topic_mode_name(t.topic_mode)); }},
      size_field("topic.informative", &T::informative_topics),
      size_field("topic.other", &T::other_topics),
      size_field("topic.hidden", &T::topic_hidden),
      size_field("topic.dim", &T::topic_dim),
      bool_field("topic.detach", &T::detach_topics),
      double_field("train.lambda", &T::lambda),
      double_field("train.lr_pretrain", &T::lr_pretrain),
      double_field("train.lr_rl", &T::lr_rl),
      double_field("train.lr_topic", &T::lr_topic),
      double_field("train.clip_norm", &T::clip_norm),
      size_field("train.batch_size", &T::batch_size),
      size_field("train.epochs_extractor", &T::epochs_extractor),
      size_field("train.epochs_refiner", &T::epochs_refiner),
      size_field("train.epochs_topic", &T::epochs_topic),
      size_field("train.epochs_joint", &T::epochs_joint),
      size_field("train.max_extract", &T::max_extract),
      size_field("train.max_summary_tokens", &T::max_summary_tokens),
      metric_field("train.reward_metric", &T::reward_metric),
      metric_field("train.oracle_metric", &T::oracle_metric),
      bool_field("train.gradient_check", &T::gradient_check),
      size_field("train.seed", &T::seed),
      size_field("train.min_count", &T::min_count),
  };
  return f;
}

}  // namespace

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig c;
  std::string section;
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError(where() + "malformed section header '" + line + "'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where() + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError(where() + "empty key");
    c.set(section.empty() ? key : section + "." + key,
          trim(std::string_view(line).substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void RunConfig::merge(const RunConfig& over) {
  for (const auto& [k, v] : over.values_) values_[k] = v;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty())
    throw ConfigError("missing required setting " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t RunConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  std::uint64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

void RunConfig::check_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : values_)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown setting '" + k + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  // Keys without a section must precede every header to parse back the same.
  for (const auto& [k, v] : values_)
    if (k.find('.') == std::string::npos) out << k << " = " << v << '\n';
  std::string section = "\x01";
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = k.substr(0, dot), key = k.substr(dot + 1);
    if (sec != section) {
      if (out.tellp() > 0) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key << " = " << v << '\n';
  }
  return out.str();
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    for (const char* s :
         {"corpus.token_mode", "paths.corpus", "paths.dev", "paths.input", "paths.stoplist",
          "paths.checkpoint", "paths.resume", "paths.output", "paths.log", "paths.summaries",
          "decode.beam_width", "decode.max_length", "decode.min_length", "eval.bleu_mode",
          "inspect.k", "inspect.role", "inspect.dialogue", "data.dialogues", "data.groups",
          "data.words_per_group", "data.noise_pool", "data.utterances",
          "data.tokens_per_utterance", "data.active_groups", "data.noise_rate",
          "data.chitchat_rate", "data.summary_length", "data.seed", "data.train_ratio",
          "data.dev_ratio", "sweep.kind", "sweep.repeats", "sweep.values", "sweep.total"})
      k.emplace_back(s);
    return k;
  }();
  return keys;
}

train::TrainConfig train_config_from(const RunConfig& c) {
  train::TrainConfig t;
  for (const auto& f : fields()) f.read(t, c, f.key);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

corpus::TokenMode token_mode_from(const RunConfig& c) {
  const std::string v = c.get("corpus.token_mode", "whitespace");
  auto m = corpus::parse_token_mode(v);
  if (!m) throw ConfigError("corpus.token_mode: expected whitespace or character, got '" + v + "'");
  return *m;
}

RunConfig model_run_config(const train::TrainConfig& t, corpus::TokenMode mode) {
  RunConfig c;
  for (const auto& f : fields()) c.set(f.key, f.write(t));
  c.set("corpus.token_mode", std::string(corpus::token_mode_name(mode)));
  return c;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace satm::app

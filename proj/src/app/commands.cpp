#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "satm/app.hpp"
#include "satm/report.hpp"
#include "satm/synthetic.hpp"

namespace fs = std::filesystem;

namespace satm::app {

namespace {

std::string existing_file(const RunConfig& c, const std::string& key) {
  const std::string path = c.require(key);
  if (!fs::is_regular_file(path)) throw ConfigError(key + ": no such file '" + path + "'");
  return path;
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// Provenance: the fully resolved settings of every run sit next to its outputs.
void write_resolved(const RunConfig& c, const std::string& output) {
  const std::string path =
      fs::is_directory(output) ? (fs::path(output) / "resolved.config").string() : output + ".config";
  auto out = open_output(path);
  out << c.to_text();
}

std::vector<corpus::Dialogue> load(const RunConfig& c, const std::string& key,
                                   corpus::TokenMode mode) {
  return corpus::load_corpus(existing_file(c, key), mode);
}

LoadedModel load_model(const RunConfig& c) {
  return restore_model(load_checkpoint(existing_file(c, "paths.checkpoint")));
}

summ::DecodeConfig decode_config(const RunConfig& c) {
  summ::DecodeConfig d;
  d.beam_width = c.get_uint("decode.beam_width", d.beam_width);
  d.max_length = c.get_uint("decode.max_length", d.max_length);
  d.min_length = c.get_uint("decode.min_length", d.min_length);
  if (d.beam_width == 0) throw ConfigError("decode.beam_width must be >= 1");
  if (d.max_length == 0) throw ConfigError("decode.max_length must be >= 1");
  if (d.min_length > d.max_length) throw ConfigError("decode.min_length exceeds decode.max_length");
  return d;
}

eval::BleuMode bleu_mode_from(const RunConfig& c) {
  const std::string v = c.get("eval.bleu_mode", "arithmetic");
  if (v == "arithmetic") return eval::BleuMode::arithmetic;
  if (v == "geometric") return eval::BleuMode::geometric;
  throw ConfigError("eval.bleu_mode: expected arithmetic or geometric, got '" + v + "'");
}

topic::RoleSource role_from(const RunConfig& c) {
  const std::string v = c.get("inspect.role", "dialogue");
  if (v == "dialogue") return topic::RoleSource::dialogue;
  if (v == "customer") return topic::RoleSource::customer;
  if (v == "agent") return topic::RoleSource::agent;
  throw ConfigError("inspect.role: expected dialogue, customer or agent, got '" + v + "'");
}

topic::TopicModel& topic_model(LoadedModel& m, const RunConfig& c) {
  if (!m.model->topics) throw ConfigError("the checkpoint was trained without topic models");
  return m.model->topics->model(role_from(c));
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a comma-separated list of integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + " is empty");
  return out;
}

void save(train::Model& m, corpus::TokenMode mode, const train::Trainer* t,
          const std::string& path) {
  save_checkpoint(path, make_checkpoint(m, mode, t));
}

}  // namespace

void cmd_gen_data(const RunConfig& c, std::ostream& log) {
  corpus::SyntheticSpec spec;
  spec.dialogues = c.get_uint("data.dialogues", spec.dialogues);
  spec.groups = c.get_uint("data.groups", spec.groups);
  spec.words_per_group = c.get_uint("data.words_per_group", spec.words_per_group);
  spec.noise_pool = c.get_uint("data.noise_pool", spec.noise_pool);
  spec.utterances = c.get_uint("data.utterances", spec.utterances);
  spec.tokens_per_utterance = c.get_uint("data.tokens_per_utterance", spec.tokens_per_utterance);
  spec.active_groups = c.get_uint("data.active_groups", spec.active_groups);
  spec.noise_rate = c.get_double("data.noise_rate", spec.noise_rate);
  spec.chitchat_rate = c.get_double("data.chitchat_rate", spec.chitchat_rate);
  spec.summary_length = c.get_uint("data.summary_length", spec.summary_length);
  spec.seed = c.get_uint("data.seed", spec.seed);
  const double train_ratio = c.get_double("data.train_ratio", 0.9);
  const double dev_ratio = c.get_double("data.dev_ratio", 0.05);
  if (!(train_ratio >= 0 && dev_ratio >= 0 && train_ratio + dev_ratio <= 1.0))
    throw ConfigError("data.train_ratio and data.dev_ratio must be >= 0 and sum to <= 1");
  try {
    corpus::validate(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string dir = c.require("paths.output");
  fs::create_directories(dir);

  const auto syn = corpus::generate_synthetic(spec);
  const std::size_t n = syn.dialogues.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
  const auto n_dev = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(dev_ratio * static_cast<double>(n))));
  auto slice = [&](std::size_t from, std::size_t count) {
    return std::vector<corpus::Dialogue>(syn.dialogues.begin() + static_cast<long>(from),
                                         syn.dialogues.begin() + static_cast<long>(from + count));
  };
  const auto mode = corpus::TokenMode::whitespace;
  corpus::save_corpus((fs::path(dir) / "train.jsonl").string(), slice(0, n_train), mode);
  corpus::save_corpus((fs::path(dir) / "dev.jsonl").string(), slice(n_train, n_dev), mode);
  corpus::save_corpus((fs::path(dir) / "test.jsonl").string(),
                      slice(n_train + n_dev, n - n_train - n_dev), mode);
  {
    auto out = open_output((fs::path(dir) / "groundtruth.tsv").string());
    corpus::write_ground_truth(out, syn);
  }
  {
    auto out = open_output((fs::path(dir) / "groups.tsv").string());
    corpus::write_groups(out, syn);
  }
  write_resolved(c, dir);
  log << "wrote " << n_train << " train, " << n_dev << " dev, " << n - n_train - n_dev
      << " test dialogues to " << dir << '\n';
}

void cmd_train(const RunConfig& c, std::ostream& log) {
  const std::string ck_path = c.require("paths.checkpoint");
  std::unique_ptr<train::Model> model;
  corpus::TokenMode mode = corpus::TokenMode::whitespace;
  std::optional<Checkpoint> resume_from;
  if (c.has("paths.resume")) {
    auto loaded = restore_model(load_checkpoint(existing_file(c, "paths.resume")));
    model = std::move(loaded.model);
    mode = loaded.token_mode;
    resume_from = std::move(loaded.checkpoint);
    // Epoch counts may be raised on resume; everything else comes from the checkpoint.
    auto& t = model->config;
    t.epochs_topic = c.get_uint("train.epochs_topic", t.epochs_topic);
    t.epochs_extractor = c.get_uint("train.epochs_extractor", t.epochs_extractor);
    t.epochs_refiner = c.get_uint("train.epochs_refiner", t.epochs_refiner);
    t.epochs_joint = c.get_uint("train.epochs_joint", t.epochs_joint);
  }
  if (!model) mode = token_mode_from(c);
  auto data = load(c, "paths.corpus", mode);
  if (!model) {
    const auto config = train_config_from(c);
    const auto stop = c.has("paths.stoplist")
                          ? corpus::load_stop_words(existing_file(c, "paths.stoplist"))
                          : corpus::default_stop_words(mode);
    model = train::Model::create(config, corpus::build_vocab(data, stop, config.min_count));
  }
  std::vector<corpus::Dialogue> dev;
  if (c.has("paths.dev")) dev = load(c, "paths.dev", mode);

  train::Trainer trainer(*model, std::move(data));
  if (resume_from)
    trainer.restore(resume_from->progress, resume_from->optimizers, resume_from->rng_state);

  const std::string log_path = c.get("paths.log", ck_path + ".log");
  auto step_log = open_output(log_path, resume_from ? std::ios::app : std::ios::trunc);
  trainer.set_log(&step_log);
  write_resolved(c, ck_path);

  trainer.set_epoch_callback([&](const train::Trainer& t) {
    const auto& s = t.history().back();
    log << "phase=" << train::phase_name(s.phase) << " epoch=" << s.epoch
        << " step=" << t.progress().step << " loss=" << fmt(s.loss);
    if (s.phase == train::Phase::extractor || s.phase == train::Phase::refiner)
      log << " accuracy=" << fmt(s.accuracy);
    if (s.phase == train::Phase::joint) log << " reward=" << fmt(s.reward);
    if (!dev.empty() && s.phase == train::Phase::extractor)
      log << " dev_loss=" << fmt(trainer.extractor_loss(dev));
    if (!dev.empty() && s.phase == train::Phase::refiner) {
      const double nll = trainer.refiner_loss(dev);
      log << " dev_loss=" << fmt(nll) << " dev_perplexity=" << fmt(std::exp(nll));
    }
    log << '\n';
    step_log.flush();
    save(*model, mode, &t, ck_path);
  });
  trainer.run();
  save(*model, mode, &trainer, ck_path);
  log << "checkpoint " << ck_path << " at step " << trainer.progress().step << '\n';
}

void cmd_summarize(const RunConfig& c, std::ostream& log) {
  auto m = load_model(c);
  const auto decode = decode_config(c);
  const auto input = load(c, "paths.input", m.token_mode);
  const std::string out_path = c.require("paths.output");
  auto out = open_output(out_path);
  for (const auto& d : input) {
    const auto s = train::summarize(*m.model, d, decode);
    out << d.id << '\t' << corpus::detokenize(s.summary, m.token_mode) << '\n';
  }
  write_resolved(c, out_path);
  log << "summarized " << input.size() << " dialogues into " << out_path << '\n';
}

void cmd_evaluate(const RunConfig& c, std::ostream& log) {
  const auto bleu_mode = bleu_mode_from(c);
  std::optional<LoadedModel> m;
  corpus::TokenMode mode = token_mode_from(c);
  if (!c.has("paths.summaries")) {
    m = load_model(c);
    mode = m->token_mode;
  }
  const auto refs = load(c, "paths.input", mode);
  const std::string out_path = c.require("paths.output");
  std::vector<std::string> ids;
  std::vector<eval::Tokens> outputs, references;
  for (const auto& d : refs) {
    if (!d.summary) throw ConfigError("paths.input: dialogue '" + d.id + "' has no reference summary");
    ids.push_back(d.id);
    references.push_back(*d.summary);
  }
  double extract_r1 = 0.0, oracle_r1 = 0.0;
  if (m) {
    const auto decode = decode_config(c);
    for (const auto& d : refs) {
      const auto s = train::summarize(*m->model, d, decode);
      outputs.push_back(s.summary);
      extract_r1 += eval::rouge_n(s.extract_tokens, *d.summary, 1).f1;
      oracle_r1 += train::ext_oracle(d, *d.summary, eval::RewardMetric::rouge_1,
                                     m->model->config.max_extract)
                       .score;
    }
  } else {
    std::ifstream in(existing_file(c, "paths.summaries"));
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw ConfigError("paths.summaries line " + std::to_string(lineno) +
                          ": expected '<id>\\t<summary>'");
      if (lineno > ids.size() || line.substr(0, tab) != ids[lineno - 1])
        throw ConfigError("paths.summaries line " + std::to_string(lineno) + ": id '" +
                          line.substr(0, tab) + "' does not match the reference order");
      outputs.push_back(corpus::tokenize(std::string_view(line).substr(tab + 1), mode));
    }
  }
  const auto report = eval::evaluate_corpus(ids, outputs, references, mode, bleu_mode);
  {
    auto out = open_output(out_path);
    eval::write_report_summary(out, report);
    if (m && !refs.empty()) {
      const double n = static_cast<double>(refs.size());
      out << "extract_rouge_1=" << fmt(extract_r1 / n) << '\n'
          << "oracle_rouge_1=" << fmt(oracle_r1 / n) << '\n';
    }
  }
  {
    auto csv = open_output(out_path + ".csv");
    eval::write_report_csv(csv, report);
  }
  write_resolved(c, out_path);
  log << "rouge_1=" << fmt(report.mean.rouge_1) << " rouge_2=" << fmt(report.mean.rouge_2)
      << " rouge_l=" << fmt(report.mean.rouge_l) << " bleu=" << fmt(report.mean.bleu) << '\n';
}

void cmd_inspect_topics(const RunConfig& c, std::ostream& log) {
  auto m = load_model(c);
  auto& tm = topic_model(m, c);
  const auto k = c.get_uint("inspect.k", 10);
  if (k == 0) throw ConfigError("inspect.k must be >= 1");
  const std::string out_path = c.require("paths.output");
  auto out = open_output(out_path);
  eval::write_topic_words(out, tm, m.model->vocab, k);
  write_resolved(c, out_path);
  log << "top-" << k << " words of " << tm.name() << " written to " << out_path << '\n';
}

void cmd_export_attention(const RunConfig& c, std::ostream& log) {
  auto m = load_model(c);
  const auto input = load(c, "paths.input", m.token_mode);
  if (input.empty()) throw ConfigError("paths.input holds no dialogues");
  const corpus::Dialogue* d = &input.front();
  if (c.has("inspect.dialogue")) {
    const std::string id = c.get("inspect.dialogue");
    auto it = std::find_if(input.begin(), input.end(), [&](const auto& x) { return x.id == id; });
    if (it == input.end()) throw ConfigError("inspect.dialogue: no dialogue with id '" + id + "'");
    d = &*it;
  }
  const auto s = train::summarize(*m.model, *d, decode_config(c));
  const std::string out_path = c.require("paths.output");
  auto out = open_output(out_path);
  eval::write_attention_csv(out, s.extractor_trace);
  write_resolved(c, out_path);
  log << "extractor attention of " << d->id << " (" << s.extractor_trace.steps.size()
      << " steps) written to " << out_path << '\n';
}

void cmd_export_topic_vectors(const RunConfig& c, std::ostream& log) {
  auto m = load_model(c);
  auto& tm = topic_model(m, c);
  const std::string out_path = c.require("paths.output");
  auto out = open_output(out_path);
  const auto rows = eval::topic_vector_rows(tm);
  eval::write_topic_vectors(out, rows);
  write_resolved(c, out_path);
  log << rows.size() << " topic vectors of " << tm.name() << " written to " << out_path << '\n';
}

// Each point trains a fresh model per repeat (seed, seed+1, ...) and reports
// the mean and population variance of the test scores.
void cmd_sweep(const RunConfig& c, std::ostream& log) {
  const std::string kind = c.get("sweep.kind", "k");
  if (kind != "k" && kind != "ko") throw ConfigError("sweep.kind: expected k or ko, got '" + kind + "'");
  const auto base = train_config_from(c);
  const auto mode = token_mode_from(c);
  const auto data = load(c, "paths.corpus", mode);
  const auto test = load(c, "paths.input", mode);
  for (const auto& d : test)
    if (!d.summary) throw ConfigError("paths.input: dialogue '" + d.id + "' has no reference summary");
  const auto repeats = c.get_uint("sweep.repeats", 1);
  if (repeats == 0) throw ConfigError("sweep.repeats must be >= 1");
  const auto total = c.get_uint("sweep.total", 50);
  std::vector<std::size_t> values =
      kind == "k" ? std::vector<std::size_t>{20, 50, 100, 150}
                  : std::vector<std::size_t>{5, 10, 15, 20, 25, 30, 35, 40, 45};
  if (c.has("sweep.values")) values = parse_list("sweep.values", c.get("sweep.values"));
  const bool ntm = base.topic_mode == topic::TopicMode::ntm;
  if (kind == "ko" && ntm) throw ConfigError("a K_o sweep needs topic.mode = satm");
  if (!base.use_topics) throw ConfigError("a topic-number sweep needs topic.enabled = true");

  const std::string out_path = c.require("paths.output");
  auto out = open_output(out_path);
  out << "sweep,K,K_s,K_o,repeats,rouge_1_mean,rouge_1_var,rouge_2_mean,rouge_2_var,rouge_l_mean,"
         "rouge_l_var\n";
  const auto stop = c.has("paths.stoplist")
                        ? corpus::load_stop_words(existing_file(c, "paths.stoplist"))
                        : corpus::default_stop_words(mode);
  const auto vocab = corpus::build_vocab(data, stop, base.min_count);
  for (std::size_t v : values) {
    train::TrainConfig cfg = base;
    if (kind == "k") {
      cfg.informative_topics = ntm ? v : v - v / 2;
      cfg.other_topics = ntm ? 0 : v / 2;
    } else {
      if (v == 0 || v >= total) throw ConfigError("sweep.values: K_o must lie in [1, K-1]");
      cfg.informative_topics = total - v;
      cfg.other_topics = v;
    }
    std::vector<eval::Scores> scores;
    for (std::size_t r = 0; r < repeats; ++r) {
      cfg.seed = base.seed + r;
      auto model = train::Model::create(cfg, vocab);
      train::Trainer trainer(*model, data);
      trainer.run();
      std::vector<std::string> ids;
      std::vector<eval::Tokens> outs, refs;
      for (const auto& d : test) {
        ids.push_back(d.id);
        outs.push_back(train::summarize(*model, d, decode_config(c)).summary);
        refs.push_back(*d.summary);
      }
      scores.push_back(eval::evaluate_corpus(ids, outs, refs, mode).mean);
    }
    auto stats = [&](double eval::Scores::*f) {
      double mean = 0, var = 0;
      for (const auto& s : scores) mean += s.*f;
      mean /= static_cast<double>(scores.size());
      for (const auto& s : scores) var += (s.*f - mean) * (s.*f - mean);
      return fmt(mean) + "," + fmt(var / static_cast<double>(scores.size()));
    };
    const std::size_t k_total = cfg.informative_topics + cfg.other_topics;
    out << kind << ',' << k_total << ',' << cfg.informative_topics << ',' << cfg.other_topics << ','
        << repeats << ',' << stats(&eval::Scores::rouge_1) << ',' << stats(&eval::Scores::rouge_2)
        << ',' << stats(&eval::Scores::rouge_l) << '\n';
    out.flush();
    log << "sweep " << kind << " K=" << k_total << " K_s=" << cfg.informative_topics
        << " K_o=" << cfg.other_topics << " done\n";
  }
  write_resolved(c, out_path);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "gen-data", "train", "summarize", "evaluate", "inspect-topics", "export-attention",
      "export-topic-vectors", "sweep"};
  return names;
}

int run_command(const std::string& name, const RunConfig& c, std::ostream& log,
                std::string* error) {
  using Fn = void (*)(const RunConfig&, std::ostream&);
  static const std::map<std::string, Fn> table = {
      {"gen-data", cmd_gen_data},
      {"train", cmd_train},
      {"summarize", cmd_summarize},
      {"evaluate", cmd_evaluate},
      {"inspect-topics", cmd_inspect_topics},
      {"export-attention", cmd_export_attention},
      {"export-topic-vectors", cmd_export_topic_vectors},
      {"sweep", cmd_sweep}};
  auto fail = [&](int code, const std::string& msg) {
    if (error) *error = msg;
    return code;
  };
  auto it = table.find(name);
  if (it == table.end()) return fail(1, "unknown command '" + name + "'");
  try {
    c.check_known(known_keys());
    it->second(c, log);
    return 0;
  } catch (const std::invalid_argument& e) {
    return fail(1, e.what());
  } catch (const corpus::CorpusError& e) {
    // Malformed input files are the caller's to fix, like bad settings.
    return fail(1, e.what());
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
}

}  // namespace satm::app

// Command-line front end. Everything goes through the C interface.
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "satm/satm.h"

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

// Convenience flags; each is shorthand for one config key.
const std::map<std::string, std::vector<Flag>> kFlags = {
    {"gen-data",
     {{"--output", "paths.output", "output directory"},
      {"--dialogues", "data.dialogues", "number of dialogues"},
      {"--seed", "data.seed", "generator seed"}}},
    {"train",
     {{"--corpus", "paths.corpus", "training corpus (JSON lines)"},
      {"--dev", "paths.dev", "development corpus"},
      {"--checkpoint", "paths.checkpoint", "checkpoint to write"},
      {"--resume", "paths.resume", "checkpoint to resume from"},
      {"--log", "paths.log", "step log path"},
      {"--stoplist", "paths.stoplist", "stop word list"},
      {"--seed", "train.seed", "training seed"},
      {"--lambda", "train.lambda", "topic loss weight"},
      {"--token-mode", "corpus.token_mode", "whitespace or character"}}},
    {"summarize",
     {{"--checkpoint", "paths.checkpoint", "trained model"},
      {"--input", "paths.input", "dialogues to summarize"},
      {"--output", "paths.output", "output TSV"},
      {"--beam", "decode.beam_width", "beam width"}}},
    {"evaluate",
     {{"--checkpoint", "paths.checkpoint", "trained model"},
      {"--input", "paths.input", "reference corpus"},
      {"--summaries", "paths.summaries", "precomputed summaries TSV"},
      {"--output", "paths.output", "report path"},
      {"--bleu", "eval.bleu_mode", "BLEU variant"}}},
    {"inspect-topics",
     {{"--checkpoint", "paths.checkpoint", "trained model"},
      {"--output", "paths.output", "output CSV"},
      {"--k", "inspect.k", "words per topic"},
      {"--role", "inspect.role", "dialogue, customer or agent"}}},
    {"export-attention",
     {{"--checkpoint", "paths.checkpoint", "trained model"},
      {"--input", "paths.input", "corpus holding the dialogue"},
      {"--dialogue", "inspect.dialogue", "dialogue id"},
      {"--output", "paths.output", "output CSV"}}},
    {"export-topic-vectors",
     {{"--checkpoint", "paths.checkpoint", "trained model"},
      {"--output", "paths.output", "output CSV"}}},
    {"sweep",
     {{"--corpus", "paths.corpus", "training corpus"},
      {"--input", "paths.input", "evaluation corpus"},
      {"--output", "paths.output", "output CSV"},
      {"--kind", "sweep.kind", "k or ko"},
      {"--repeats", "sweep.repeats", "seeds per point"}}},
};

const char* kDescriptions[][2] = {
    {"gen-data", "Generate a synthetic corpus with planted topics"},
    {"train", "Train a model and write a checkpoint"},
    {"summarize", "Summarize dialogues with a trained model"},
    {"evaluate", "Score summaries against references"},
    {"inspect-topics", "List the top words of each topic"},
    {"export-attention", "Dump extractor attention for one dialogue"},
    {"export-topic-vectors", "Dump topic-word vectors"},
    {"sweep", "Train over a grid of topic counts"},
};

struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
};

int report(satm_status s) {
  std::cerr << "error: " << satm_last_error() << '\n';
  return static_cast<int>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-aware dialogue summarization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(satm_version()));

  std::map<std::string, Options> options;
  for (const auto& [name, description] : kDescriptions) {
    auto* sub = app.add_subcommand(name, description);
    auto& o = options[name];
    sub->add_option("-c,--config", o.config_file, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", o.sets, "override a setting: section.key=value");
    for (const auto& f : kFlags.at(name)) sub->add_option(f.name, o.flag_values[f.key], f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const Options& o = options.at(command);

  satm_config* config = nullptr;
  satm_status s = o.config_file.empty() ? satm_config_new(&config)
                                        : satm_config_load(o.config_file.c_str(), &config);
  if (s != SATM_OK) return report(s);

  // File first, then flags, then --set, so the most specific source wins.
  auto apply = [&](const std::string& key, const std::string& value) {
    return satm_config_set(config, key.c_str(), value.c_str());
  };
  for (const auto& [key, value] : o.flag_values)
    if (!value.empty() && (s = apply(key, value)) != SATM_OK) break;
  for (const auto& kv : o.sets) {
    if (s != SATM_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      satm_config_free(config);
      return 1;
    }
    s = apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (s != SATM_OK) {
    satm_config_free(config);
    return report(s);
  }

  char* log = nullptr;
  s = satm_run_command(command.c_str(), config, &log);
  if (log) std::cout << log;
  satm_string_free(log);
  satm_config_free(config);
  return s == SATM_OK ? 0 : report(s);
}

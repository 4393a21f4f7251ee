#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "satm/corpus.hpp"
#include "satm/training.hpp"

namespace satm::app {

/// Invalid configuration or arguments; maps to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Plain-text key/value tree:
///
///   # comment
///   [train]
///   lambda = 1.0
///
/// Keys are addressed as "section.key". Later assignments win, so command-line
/// flags are applied with set() after the file is loaded.
class RunConfig {
 public:
  static RunConfig parse(std::istream& in, const std::string& source = "<config>");
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void merge(const RunConfig& over);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void erase(const std::string& key) { values_.erase(key); }

  std::string get(const std::string& key, const std::string& fallback = "") const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws ConfigError naming the first key that is not in `known`.
  void check_known(const std::vector<std::string>& known) const;
  /// Sections in sorted order, keys sorted inside each.
  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Every key any command understands.
const std::vector<std::string>& known_keys();

/// Reads the model.*, topic.* and train.* keys over TrainConfig defaults and validates.
train::TrainConfig train_config_from(const RunConfig& c);
/// Canonical model/topic/train/corpus keys; the checkpoint hashes this text.
RunConfig model_run_config(const train::TrainConfig& t, corpus::TokenMode mode);
corpus::TokenMode token_mode_from(const RunConfig& c);

std::uint64_t fnv1a(std::string_view bytes);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  corpus::Vocabulary vocab;
  train::Progress progress;
  std::vector<std::pair<std::string, num::Tensor>> tensors;
  std::vector<train::Trainer::OptimState> optimizers;
  std::string rng_state;
};

/// Snapshot of a model and, when given, the trainer state needed to resume.
Checkpoint make_checkpoint(train::Model& model, corpus::TokenMode mode,
                           const train::Trainer* trainer);
void write_checkpoint(std::ostream& out, const Checkpoint& ck);
/// Throws std::runtime_error on bad magic, unsupported version, hash
/// mismatch or truncation.
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

struct LoadedModel {
  std::unique_ptr<train::Model> model;
  corpus::TokenMode token_mode = corpus::TokenMode::whitespace;
  Checkpoint checkpoint;
};

/// Rebuilds the model described by a checkpoint and copies its tensors in.
LoadedModel restore_model(Checkpoint ck);

// ---------------------------------------------------------------------------
// Commands. Each reads what it needs from the config, writes its outputs and
// a "<output>.config" file with the resolved configuration.

void cmd_gen_data(const RunConfig& c, std::ostream& log);
void cmd_train(const RunConfig& c, std::ostream& log);
void cmd_summarize(const RunConfig& c, std::ostream& log);
void cmd_evaluate(const RunConfig& c, std::ostream& log);
void cmd_inspect_topics(const RunConfig& c, std::ostream& log);
void cmd_export_attention(const RunConfig& c, std::ostream& log);
void cmd_export_topic_vectors(const RunConfig& c, std::ostream& log);
void cmd_sweep(const RunConfig& c, std::ostream& log);

const std::vector<std::string>& command_names();

/// Dispatches by name. Returns 0 on success, 1 on validation errors and 2 on
/// runtime failures; the message goes to *error.
int run_command(const std::string& name, const RunConfig& c, std::ostream& log,
                std::string* error);

}  // namespace satm::app

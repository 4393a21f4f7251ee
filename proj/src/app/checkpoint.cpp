#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "satm/app.hpp"

namespace satm::app {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'T', 'M', 'C', 'K', 'P', 'T'};

// Little-endian fixed-width encoding, independent of the host.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 8);
  }
  void u32(std::uint32_t v) { u64(v); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void strings(const std::vector<std::string>& v) {
    u64(v.size());
    for (const auto& s : v) str(s);
  }
  void tensor(const num::Tensor& t) {
    u64(t.rows());
    u64(t.cols());
    for (double x : t.values()) f64(x);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint64_t u64() {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), 8);
    if (!in_) throw std::runtime_error("checkpoint is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u64()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::size_t count(std::size_t limit = 1u << 30) {
    const auto n = u64();
    if (n > limit) throw std::runtime_error("checkpoint holds an implausible length");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    std::string s(count(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw std::runtime_error("checkpoint is truncated");
    return s;
  }
  std::vector<std::string> strings() {
    std::vector<std::string> v(count());
    for (auto& s : v) s = str();
    return v;
  }
  num::Tensor tensor() {
    const std::size_t r = count(), c = count();
    std::vector<double> data(r * c);
    for (auto& x : data) x = f64();
    return num::Tensor(r, c, std::move(data));
  }

 private:
  std::istream& in_;
};

}  // namespace

Checkpoint make_checkpoint(train::Model& model, corpus::TokenMode mode,
                           const train::Trainer* trainer) {
  Checkpoint ck;
  ck.config_text = model_run_config(model.config, mode).to_text();
  ck.config_hash = fnv1a(ck.config_text);
  ck.vocab = model.vocab;
  for (auto* p : model.all_parameters()) ck.tensors.emplace_back(p->name, p->value);
  if (trainer) {
    ck.progress = trainer->progress();
    ck.optimizers = trainer->optimizer_state();
    ck.rng_state = trainer->rng_state();
  } else {
    ck.progress.phase = train::Phase::done;
  }
  return ck;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write(kMagic, sizeof kMagic);
  Writer w(out);
  w.u32(kCheckpointVersion);
  w.u64(ck.config_hash);
  w.str(ck.config_text);
  w.u32(ck.vocab.min_count());
  w.strings(ck.vocab.tokens());
  w.strings(ck.vocab.seq_tokens());
  w.strings({ck.vocab.stop_words().begin(), ck.vocab.stop_words().end()});
  w.u32(static_cast<std::uint32_t>(ck.progress.phase));
  w.u64(ck.progress.epoch);
  w.u64(ck.progress.step);
  w.u64(ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.tensor(t);
  }
  w.u64(ck.optimizers.size());
  for (const auto& o : ck.optimizers) {
    w.str(o.name);
    w.u64(o.steps);
    w.u64(o.m.size());
    for (const auto& t : o.m) w.tensor(t);
    w.u64(o.v.size());
    for (const auto& t : o.v) w.tensor(t);
  }
  w.str(ck.rng_state);
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  Reader r(in);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint format version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.config_text = r.str();
  if (fnv1a(ck.config_text) != ck.config_hash)
    throw std::runtime_error("checkpoint config hash does not match its config text");
  const auto min_count = r.u32();
  auto bow = r.strings();
  auto seq = r.strings();
  auto stop = r.strings();
  ck.vocab = corpus::Vocabulary(std::move(bow), std::move(seq),
                                corpus::StopWords(stop.begin(), stop.end()), min_count);
  const auto phase = r.u32();
  if (phase > static_cast<std::uint32_t>(train::Phase::done))
    throw std::runtime_error("checkpoint holds an unknown phase");
  ck.progress.phase = static_cast<train::Phase>(phase);
  ck.progress.epoch = r.u64();
  ck.progress.step = r.u64();
  ck.tensors.resize(r.count());
  for (auto& [name, t] : ck.tensors) {
    name = r.str();
    t = r.tensor();
  }
  ck.optimizers.resize(r.count());
  for (auto& o : ck.optimizers) {
    o.name = r.str();
    o.steps = r.u64();
    o.m.resize(r.count());
    for (auto& t : o.m) t = r.tensor();
    o.v.resize(r.count());
    for (auto& t : o.v) t = r.tensor();
  }
  ck.rng_state = r.str();
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  // Write then rename so an interrupted save never leaves a torn checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    write_checkpoint(out, ck);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place at " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  try {
    return read_checkpoint(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

LoadedModel restore_model(Checkpoint ck) {
  std::istringstream text(ck.config_text);
  const RunConfig rc = RunConfig::parse(text, "checkpoint config");
  LoadedModel out;
  out.token_mode = token_mode_from(rc);
  out.model = train::Model::create(train_config_from(rc), ck.vocab);
  std::unordered_map<std::string, const num::Tensor*> by_name;
  for (const auto& [name, t] : ck.tensors) by_name[name] = &t;
  auto params = out.model->all_parameters();
  if (params.size() != ck.tensors.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(ck.tensors.size()) +
                             " tensors but the model has " + std::to_string(params.size()));
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks tensor " + p->name);
    if (!it->second->same_shape(p->value))
      throw std::runtime_error("checkpoint tensor " + p->name + " has shape " +
                               it->second->shape_string() + ", model expects " +
                               p->value.shape_string());
    p->value = *it->second;
  }
  out.checkpoint = std::move(ck);
  return out;
}

}  // namespace satm::app

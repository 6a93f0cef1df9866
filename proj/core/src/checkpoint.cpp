// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seqcoder/errors.hpp"

namespace seqcoder {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'C', '1'};
constexpr std::uint8_t kDtypeF64 = 1;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void tag(const char (&t)[5]) { out_.append(t, 4); }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void doubles(const std::vector<double>& v) {
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void section(const char* name) { section_ = name; }

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void expect_tag(const char (&t)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, t, 4) != 0) {
      fail("expected section tag \"" + std::string(t, 4) + "\"");
    }
    pos_ += 4;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::uint64_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) fail("truncated data");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("checkpoint section " + section_ + ": " + what);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated data");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
  std::string section_ = "MAGIC";
};

}  // namespace

Checkpoint make_checkpoint(const SequenceModel& model, const TrainConfig& train,
                           std::uint64_t tokenizer_hash, const Trainer* trainer) {
  Checkpoint c;
  c.model = model.config();
  c.train = train;
  c.tokenizer_hash = tokenizer_hash;
  for (const auto& e : model.params().entries()) {
    c.params.push_back({e.name, e.tensor.shape(), {e.tensor.values().begin(), e.tensor.values().end()}});
  }
  if (trainer != nullptr) {
    c.trainer = TrainerSnapshot{trainer->optimizer_state(), trainer->global_step(), trainer->epoch(),
                                trainer->batch_in_epoch()};
    c.rng_state = serialize_rng(trainer->rng());
  }
  return c;
}

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.tag("SQC1");
  w.pod<std::uint32_t>(kCheckpointVersion);

  w.tag("HEAD");
  const nlohmann::json header{{"model", c.model.to_json()}, {"train", c.train.to_json()}};
  w.str(header.dump());
  w.pod<std::uint64_t>(c.tokenizer_hash);

  w.tag("PARM");
  w.pod<std::uint64_t>(c.params.size());
  for (const auto& p : c.params) {
    w.str(p.name);
    w.pod<std::uint8_t>(kDtypeF64);
    w.pod<std::uint32_t>(2);
    w.pod<std::uint64_t>(p.shape.rows);
    w.pod<std::uint64_t>(p.shape.cols);
    w.doubles(p.values);
  }

  w.tag("OPTS");
  w.pod<std::uint8_t>(c.trainer ? 1 : 0);
  if (c.trainer) {
    const auto& t = *c.trainer;
    w.pod<std::uint64_t>(t.adam.step);
    w.pod<std::uint64_t>(t.global_step);
    w.pod<std::uint64_t>(t.epoch);
    w.pod<std::uint64_t>(t.batch);
    w.pod<std::uint64_t>(t.adam.m.size());
    for (std::size_t i = 0; i < t.adam.m.size(); ++i) {
      w.pod<std::uint64_t>(t.adam.m[i].size());
      w.doubles(t.adam.m[i]);
      w.doubles(t.adam.v[i]);
    }
  }

  w.tag("RNGS");
  w.str(c.rng_state);
  w.tag("END!");
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  Checkpoint c;
  r.expect_tag("SQC1");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }

  r.section("HEAD");
  r.expect_tag("HEAD");
  try {
    const auto header = nlohmann::json::parse(r.str());
    c.model = ModelConfig::from_json(header.at("model"));
    c.train = TrainConfig::from_json(header.at("train"));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad header JSON (") + e.what() + ")");
  } catch (const ConfigError& e) {
    r.fail(std::string("bad header config (") + e.what() + ")");
  }
  c.tokenizer_hash = r.pod<std::uint64_t>();

  r.section("PARM");
  r.expect_tag("PARM");
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    ParameterRecord p;
    p.name = r.str();
    if (r.pod<std::uint8_t>() != kDtypeF64) r.fail("unsupported dtype for " + p.name);
    if (r.pod<std::uint32_t>() != 2) r.fail("expected rank 2 for " + p.name);
    p.shape.rows = r.pod<std::uint64_t>();
    p.shape.cols = r.pod<std::uint64_t>();
    if (p.shape.cols != 0 && p.shape.rows > UINT64_MAX / p.shape.cols) r.fail("bad shape for " + p.name);
    p.values = r.doubles(p.shape.size());
    c.params.push_back(std::move(p));
  }

  r.section("OPTS");
  r.expect_tag("OPTS");
  if (r.pod<std::uint8_t>() != 0) {
    TrainerSnapshot t;
    t.adam.step = r.pod<std::uint64_t>();
    t.global_step = r.pod<std::uint64_t>();
    t.epoch = r.pod<std::uint64_t>();
    t.batch = r.pod<std::uint64_t>();
    const auto n = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto len = r.pod<std::uint64_t>();
      t.adam.m.push_back(r.doubles(len));
      t.adam.v.push_back(r.doubles(len));
    }
    c.trainer = std::move(t);
  }

  r.section("RNGS");
  r.expect_tag("RNGS");
  c.rng_state = r.str();
  if (!c.rng_state.empty()) {
    Rng probe;
    try {
      deserialize_rng(c.rng_state, probe);
    } catch (const Error&) {
      r.fail("malformed engine state");
    }
  }

  r.section("END!");
  r.expect_tag("END!");
  if (!r.at_end()) r.fail("trailing bytes after end marker");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  try {
    return decode_checkpoint(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void check_tokenizer(const Checkpoint& ckpt, std::uint64_t tokenizer_hash) {
  if (ckpt.tokenizer_hash != tokenizer_hash) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "checkpoint tokenizer %016llx, supplied tokenizer %016llx",
                  static_cast<unsigned long long>(ckpt.tokenizer_hash),
                  static_cast<unsigned long long>(tokenizer_hash));
    throw CompatibilityError(std::string("tokenizer mismatch: ") + buf);
  }
}

void load_parameters(SequenceModel& model, const Checkpoint& ckpt) {
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.params.size()) {
    throw FormatError("checkpoint has " + std::to_string(ckpt.params.size()) +
                      " parameters, model expects " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& p = ckpt.params[i];
    if (p.name != entries[i].name || !(p.shape == entries[i].tensor.shape())) {
      throw FormatError("parameter table mismatch at " + std::to_string(i) + ": checkpoint " +
                        p.name + " " + p.shape.str() + ", model " + entries[i].name + " " +
                        entries[i].tensor.shape().str());
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto dst = entries[i].tensor.mutable_values();
    std::copy(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), dst.begin());
  }
}

SequenceModel model_from_checkpoint(const Checkpoint& ckpt) {
  SequenceModel model(ckpt.model, 0);
  load_parameters(model, ckpt);
  return model;
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
  if (!ckpt.trainer || ckpt.rng_state.empty()) throw FormatError("checkpoint holds no trainer state");
  Rng rng;
  deserialize_rng(ckpt.rng_state, rng);
  const auto& t = *ckpt.trainer;
  trainer.restore_state(t.adam, t.global_step, t.epoch, t.batch, rng);
}

}  // namespace seqcoder

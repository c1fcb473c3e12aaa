// SPDX-License-Identifier: Apache-2.0
#include "longimam/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "longimam/errors.hpp"
#include "longimam/numerics/rng.hpp"

namespace longimam::model {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > end_) throw DataError("checkpoint '" + path_ + "' is truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (pos_ + n > end_) throw DataError("checkpoint '" + path_ + "' is truncated");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::string_view bytes) { return numerics::fnv1a(bytes); }

}  // namespace

void save_checkpoint(const std::string& path, const LongiMamParams& params, const std::string& provenance) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(params.config.to_json());
  w.u64(params.config.fingerprint());
  w.str(provenance);
  const auto state = params.named_state();
  w.u32(static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) w.u64(d);
    w.bytes(t->raw(), t->size() * sizeof(double));
  }
  const std::uint64_t sum = checksum(w.buffer());
  w.u64(sum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof kCheckpointMagic + 12) throw DataError("checkpoint '" + path + "' is truncated");
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, 8);
  if (checksum(std::string_view(buf.data(), body)) != stored) {
    throw DataError("checkpoint '" + path + "' failed its checksum");
  }
  Reader r(buf, body, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError("'" + path + "' is not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  }
  const ModelConfig config = ModelConfig::from_json(r.str());
  if (r.u64() != config.fingerprint()) throw DataError("checkpoint '" + path + "': config fingerprint mismatch");
  Checkpoint ck{LongiMamParams::init(config, 0), r.str()};

  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : ck.params.named_state()) slots[name] = t;
  const std::uint32_t count = r.u32();
  if (count != slots.size()) {
    throw DataError("checkpoint '" + path + "' holds " + std::to_string(count) + " tensors, expected " +
                    std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    auto it = slots.find(name);
    if (it == slots.end()) throw DataError("checkpoint '" + path + "': unexpected tensor '" + name + "'");
    Tensor* t = it->second;
    numerics::Shape shape(r.u32());
    for (std::size_t& d : shape) d = r.u64();
    if (shape != t->shape()) {
      throw DataError("checkpoint '" + path + "': tensor '" + name + "' has shape " + numerics::shape_string(shape) +
                      ", expected " + numerics::shape_string(t->shape()));
    }
    r.bytes(t->raw(), t->size() * sizeof(double));
    slots.erase(it);
  }
  if (!r.done()) throw DataError("checkpoint '" + path + "' has trailing bytes");
  return ck;
}

void copy_state(LongiMamParams& dst, const LongiMamParams& src) {
  if (!(dst.config == src.config)) throw UsageError("copy_state: model configs differ");
  auto d = dst.named_state();
  auto s = src.named_state();
  for (std::size_t i = 0; i < d.size(); ++i) *d[i].second = *s[i].second;
}

}  // namespace longimam::model

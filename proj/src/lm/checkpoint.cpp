// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/lm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/json_io.hpp"

namespace pvtrace::lm {
namespace {

static_assert(sizeof(float) == 4);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw UsageError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_tensor(std::string& out, const std::string& name, const DenseArray& a) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
  for (auto d : a.shape) put_u64(out, d);
  for (float f : a.data) put_f32(out, f);
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& model) {
  model.validate();
  Json cfg = model.config.to_json();
  Json ads = Json::object();
  for (const auto& [name, ad] : model.adapters) ads[name] = Json{{"rank", ad.rank}, {"scale", ad.scale}};
  cfg["adapters"] = ads;
  const std::string cfg_text = canonical_line(cfg);

  std::map<std::string, const DenseArray*> tensors;
  for (const auto& [name, a] : model.params) tensors[name] = &a;
  for (const auto& [name, ad] : model.adapters) {
    tensors["adapters/" + name + ".a"] = &ad.a;
    tensors["adapters/" + name + ".b"] = &ad.b;
  }

  std::string out = "PTRC";
  put_u32(out, kCheckpointVersion);
  put_u64(out, cfg_text.size());
  out += cfg_text;
  put_u64(out, tensors.size());
  for (const auto& [name, a] : tensors) put_tensor(out, name, *a);
  return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != "PTRC") throw UsageError("not a checkpoint (bad magic)");
  const auto version = r.u(4);
  if (version != kCheckpointVersion) throw UsageError("unsupported checkpoint version " + std::to_string(version));
  const auto cfg_len = r.u(8);
  const Json cfg = Json::parse(r.str(cfg_len));
  ModelParams m;
  m.config = ModelConfig::from_json(cfg);
  const Json ads = cfg.value("adapters", Json::object());
  const auto count = r.u(8);
  std::map<std::string, DenseArray> adapter_tensors;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string name = r.str(r.u(4));
    DenseArray a;
    const auto rank = r.u(4);
    if (rank > 8) throw UsageError("checkpoint tensor rank too large: " + name);
    for (std::uint64_t k = 0; k < rank; ++k) a.shape.push_back(r.u(8));
    const std::size_t n = element_count(a.shape);
    if (n > (std::size_t{1} << 32)) throw UsageError("checkpoint tensor too large: " + name);
    a.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(r.u(4)));
    if (name.rfind("adapters/", 0) == 0) {
      adapter_tensors.emplace(name.substr(9), std::move(a));
    } else {
      m.params.emplace(name, std::move(a));
    }
  }
  if (!r.done()) throw UsageError("checkpoint has trailing bytes");
  for (const auto& [name, meta] : ads.items()) {
    LoraAdapter ad;
    ad.rank = meta.at("rank").get<int>();
    ad.scale = meta.at("scale").get<float>();
    auto ia = adapter_tensors.find(name + ".a");
    auto ib = adapter_tensors.find(name + ".b");
    if (ia == adapter_tensors.end() || ib == adapter_tensors.end()) {
      throw UsageError("checkpoint missing adapter tensors for " + name);
    }
    ad.a = std::move(ia->second);
    ad.b = std::move(ib->second);
    m.adapters.emplace(name, std::move(ad));
  }
  m.validate();
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model) {
  write_text_file(path, serialize_checkpoint(model));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_text_file(path));
}

}  // namespace pvtrace::lm

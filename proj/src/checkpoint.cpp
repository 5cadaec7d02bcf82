#include "cooper/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cooper/rng.hpp"

namespace cooper {

namespace {

constexpr char kMagic[8] = {'C', 'P', 'R', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  template <typename T>
  T get_le() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck, bool with_optimizer) {
  nlohmann::json header;
  header["kind"] = ck.kind;
  header["step"] = ck.params.step();
  header["meta"] = ck.meta;
  header["params"] = nlohmann::json::array();
  for (const auto& [name, e] : ck.params) header["params"].push_back({{"name", name}, {"shape", e.value.shape()}});
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, with_optimizer ? 1u : 0u);
  put_le<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& [name, e] : ck.params) {
    for (double v : e.value.values()) put_f64(out, v);
    if (with_optimizer) {
      for (double v : e.m.values()) put_f64(out, v);
      for (double v : e.v.values()) put_f64(out, v);
    }
  }
  put_le<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 16 + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a checkpoint file (bad magic or too short)");
  const std::string body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes);
  (void)tail.get_bytes(bytes.size() - 8);
  if (tail.get_le<std::uint64_t>() != fnv1a(body)) throw FormatError("checkpoint checksum mismatch (corrupted or truncated)");

  Reader r(body);
  (void)r.get_bytes(sizeof(kMagic));
  const auto version = r.get_le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto flags = r.get_le<std::uint32_t>();
  const auto hlen = r.get_le<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  ck.kind = header.at("kind").get<std::string>();
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& p : header.at("params")) {
    Shape shape = p.at("shape").get<Shape>();
    const std::size_t n = shape_numel(shape);
    std::vector<double> vals(n);
    for (auto& v : vals) v = r.get_f64();
    const std::string name = p.at("name").get<std::string>();
    ck.params.add(name, Tensor(shape, std::move(vals)));
    if (flags & 1u) {
      auto& e = ck.params.entry_mut(name);
      for (auto& v : e.m.values()) v = r.get_f64();
      for (auto& v : e.v.values()) v = r.get_f64();
    }
  }
  if (r.pos() != body.size()) throw FormatError("checkpoint has trailing bytes after payload");
  ck.params.set_step(header.at("step").get<std::uint64_t>());
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck, bool with_optimizer) {
  const std::string bytes = encode_checkpoint(ck, with_optimizer);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace cooper

#include "ape/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ape/config.hpp"
#include "ape/errors.hpp"

namespace ape {

namespace {

constexpr char kMagic[8] = {'A', 'P', 'E', 'M', 'O', 'D', 'E', 'L'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint '" + path_ + "' is truncated at byte " +
                                     std::to_string(bytes_.size()));
    }
  }
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Parsed {
  CheckpointHeader header;
  std::size_t payload = 0;  // byte offset of the first blob
};

Parsed parse(const std::string& bytes, const std::string& path) {
  Reader r(bytes, path);
  if (r.take(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw CheckpointFormatError("'" + path + "' is not a checkpoint (bad magic)");
  }
  Parsed p;
  p.header.version = r.get<std::uint32_t>();
  if (p.header.version != kCheckpointVersion) {
    throw CheckpointFormatError("checkpoint '" + path + "' has unsupported version " +
                                std::to_string(p.header.version));
  }
  const auto header_len = r.get<std::uint32_t>();
  const std::string text = r.take(header_len);
  p.payload = r.pos();

  // The hash covers the header too, so verify it before trusting anything.
  if (bytes.size() < p.payload + sizeof(std::uint64_t)) {
    throw CheckpointTruncatedError("checkpoint '" + path + "' is truncated");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError("checkpoint '" + path + "' has a malformed header: " + e.what());
  }
  try {
    p.header.config = model_config_from_json(j.at("config"));
  } catch (const ConfigError& e) {
    throw CheckpointConfigError("checkpoint '" + path + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointConfigError("checkpoint '" + path + "': " + e.what());
  }
  try {
    p.header.names = j.at("names").get<std::vector<std::string>>();
    p.header.shapes = j.at("shapes").get<std::vector<Shape>>();
    if (j.contains("vocab") && !j.at("vocab").is_null()) {
      p.header.vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    }
    if (j.contains("meta")) p.header.meta = j.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError("checkpoint '" + path + "' has a malformed header: " + e.what());
  } catch (const InputError& e) {
    throw CheckpointFormatError("checkpoint '" + path + "' has an invalid vocabulary: " + e.what());
  }
  if (p.header.names.size() != p.header.shapes.size()) {
    throw CheckpointFormatError("checkpoint '" + path + "': names and shapes differ in length");
  }
  if (p.header.vocab && p.header.vocab->size() != p.header.config.vocab_size) {
    throw CheckpointConfigError("checkpoint '" + path + "': vocabulary has " +
                                std::to_string(p.header.vocab->size()) + " tokens, config says " +
                                std::to_string(p.header.config.vocab_size));
  }

  const std::size_t width = p.header.config.precision == Precision::f32 ? 4 : 8;
  std::size_t expected = 0;
  for (const auto& s : p.header.shapes) expected += shape_numel(s) * width;
  if (bytes.size() - p.payload < expected + sizeof(std::uint64_t)) {
    throw CheckpointTruncatedError("checkpoint '" + path + "' is truncated: expected " +
                                   std::to_string(p.payload + expected + 8) + " bytes, found " +
                                   std::to_string(bytes.size()));
  }
  if (bytes.size() - p.payload > expected + sizeof(std::uint64_t)) {
    throw CheckpointFormatError("checkpoint '" + path + "' has trailing bytes");
  }
  const std::size_t body = p.payload + expected;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (stored != fnv1a(bytes.data(), body)) {
    throw CheckpointFormatError("checkpoint '" + path + "' failed its integrity check");
  }
  return p;
}

template <typename T>
Transformer<T> build(const std::string& bytes, const Parsed& p, const std::string& path) {
  Transformer<T> model(p.header.config, std::uint64_t{0});
  const auto named = model.params().named();
  if (named.size() != p.header.names.size()) {
    throw CheckpointConfigError("checkpoint '" + path + "' stores " +
                                std::to_string(p.header.names.size()) +
                                " tensors, the config implies " + std::to_string(named.size()));
  }
  using Stored = std::conditional_t<std::is_same_v<T, float>, float, double>;
  std::size_t offset = p.payload;
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto tensor = named[i].second;
    if (named[i].first != p.header.names[i] || tensor.shape() != p.header.shapes[i]) {
      throw CheckpointConfigError("checkpoint '" + path + "': tensor " + std::to_string(i) + " is " +
                                  p.header.names[i] + " " + shape_str(p.header.shapes[i]) +
                                  ", expected " + named[i].first + " " +
                                  shape_str(tensor.shape()));
    }
    auto data = tensor.data();
    for (auto& v : data) {
      Stored s;
      std::memcpy(&s, bytes.data() + offset, sizeof s);
      offset += sizeof s;
      v = static_cast<T>(s);
    }
  }
  return model;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Transformer<T>& model, const Vocabulary* vocab,
                     const nlohmann::json& meta) {
  nlohmann::json j;
  j["config"] = to_json(model.config());
  j["vocab"] = vocab ? nlohmann::json(vocab->tokens()) : nlohmann::json(nullptr);
  j["meta"] = meta;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  const auto named = model.params().named();
  for (const auto& [name, t] : named) {
    names.push_back(name);
    shapes.push_back(t.shape());
  }
  j["names"] = names;
  j["shapes"] = shapes;
  const std::string header = j.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& [name, t] : named)
    for (T v : t.data()) put<T>(out, v);
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write checkpoint '" + tmp + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("write failed for checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw InputError("cannot move checkpoint into place at '" + path + "'");
  }
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  return parse(slurp(path), path).header;
}

template <typename T>
Transformer<T> load_checkpoint(const std::string& path, CheckpointHeader* header) {
  const std::string bytes = slurp(path);
  const auto p = parse(bytes, path);
  const Precision want = std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
  if (p.header.config.precision != want) {
    throw CheckpointConfigError("checkpoint '" + path + "' stores " +
                                to_string(p.header.config.precision) + " weights, " +
                                to_string(want) + " requested");
  }
  auto model = build<T>(bytes, p, path);
  if (header) *header = p.header;
  return model;
}

AnyModel load_any_checkpoint(const std::string& path, CheckpointHeader* header) {
  const std::string bytes = slurp(path);
  const auto p = parse(bytes, path);
  if (header) *header = p.header;
  if (p.header.config.precision == Precision::f32) return build<float>(bytes, p, path);
  return build<double>(bytes, p, path);
}

template void save_checkpoint(const std::string&, const Transformer<float>&, const Vocabulary*,
                              const nlohmann::json&);
template void save_checkpoint(const std::string&, const Transformer<double>&, const Vocabulary*,
                              const nlohmann::json&);
template Transformer<float> load_checkpoint(const std::string&, CheckpointHeader*);
template Transformer<double> load_checkpoint(const std::string&, CheckpointHeader*);

}  // namespace ape

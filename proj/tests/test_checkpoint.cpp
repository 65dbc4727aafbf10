#include <doctest.h>

#include <fstream>
#include <iterator>

#include "ape/checkpoint.hpp"
#include "ape/errors.hpp"
#include "ape/io.hpp"
#include "ape/training.hpp"

using namespace ape;

namespace {

ModelConfig tiny(Precision p) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.vocab_size = 10;
  c.dropout = 0.0;
  c.precision = p;
  return c;
}

std::string bytes_of(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void check_identical_forward(const Transformer<T>& a, const Transformer<T>& b) {
  const TokenSequence x{{4, 5, 6}, Role::src}, y{{7, 8}, Role::mt}, z{{token::kBos, 9}, Role::pe};
  ForwardContext ctx;
  auto la = a.forward(x, y, z, ctx), lb = b.forward(x, y, z, ctx);
  CHECK(std::equal(la.data().begin(), la.data().end(), lb.data().begin()));
}

}  // namespace

TEST_CASE("save then load reproduces the forward pass bit for bit in both widths") {
  auto v = Vocabulary::build({"a b c d e f"}, 10);
  auto m32 = make_model<float>(tiny(Precision::f32), 1);
  save_checkpoint("m32.ckpt", m32, &v, {{"note", "x"}});
  CheckpointHeader h;
  auto back32 = load_checkpoint<float>("m32.ckpt", &h);
  check_identical_forward(m32, back32);
  REQUIRE(h.vocab.has_value());
  CHECK(h.vocab->tokens() == v.tokens());
  CHECK(h.config == m32.config());
  CHECK(h.meta["note"] == "x");

  auto m64 = make_model<double>(tiny(Precision::f64), 2);
  save_checkpoint("m64.ckpt", m64);
  auto back64 = load_checkpoint<double>("m64.ckpt");
  check_identical_forward(m64, back64);
  CHECK_FALSE(read_checkpoint_header("m64.ckpt").vocab.has_value());
  auto any = load_any_checkpoint("m64.ckpt");
  CHECK(std::holds_alternative<Transformer<double>>(any));
  CHECK_THROWS_AS(load_checkpoint<float>("m64.ckpt"), CheckpointConfigError);
}

TEST_CASE("damaged checkpoints raise the matching error class") {
  auto m = make_model<float>(tiny(Precision::f32), 3);
  save_checkpoint("good.ckpt", m);
  const auto good = bytes_of("good.ckpt");

  auto bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes("bad_magic.ckpt", bad_magic);
  CHECK_THROWS_AS(load_checkpoint<float>("bad_magic.ckpt"), CheckpointFormatError);

  auto bad_version = good;
  bad_version[8] = 9;
  write_bytes("bad_version.ckpt", bad_version);
  CHECK_THROWS_AS(load_checkpoint<float>("bad_version.ckpt"), CheckpointFormatError);

  write_bytes("short.ckpt", good.substr(0, good.size() - 100));
  CHECK_THROWS_AS(load_checkpoint<float>("short.ckpt"), CheckpointTruncatedError);
  write_bytes("tiny.ckpt", good.substr(0, 10));
  CHECK_THROWS_AS(load_checkpoint<float>("tiny.ckpt"), CheckpointTruncatedError);

  auto flipped = good;
  flipped[flipped.size() - 20] ^= 0x40;
  write_bytes("flipped.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint<float>("flipped.ckpt"), CheckpointFormatError);

  write_bytes("trailing.ckpt", good + "zz");
  CHECK_THROWS_AS(load_checkpoint<float>("trailing.ckpt"), CheckpointFormatError);

  // A header whose config cannot be valid.
  auto bad_config = good;
  const auto pos = bad_config.find("\"n_heads\":2");
  REQUIRE(pos != std::string::npos);
  bad_config[pos + 10] = '3';
  write_bytes("bad_config.ckpt", bad_config);
  CHECK_THROWS_AS(load_checkpoint<float>("bad_config.ckpt"), CheckpointConfigError);

  CHECK_THROWS_AS(load_checkpoint<float>("missing.ckpt"), InputError);
}

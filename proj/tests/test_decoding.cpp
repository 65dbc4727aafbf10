#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "ape/decoding.hpp"
#include "ape/errors.hpp"
#include "ape/training.hpp"

using namespace ape;

namespace {

ModelConfig toy(int vocab, int d = 8) {
  ModelConfig c;
  c.d_model = d;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 2 * d;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  c.max_len = 32;
  c.precision = Precision::f64;
  return c;
}

// Sharpen the toy model so that decoding choices are not all near-uniform.
void sharpen(Transformer<double>& m, double factor) {
  for (auto& v : m.params().embedding.data()) v *= factor;
}

}  // namespace

TEST_CASE("default length limit") {
  CHECK(default_max_len(10) == 25);
  CHECK(default_max_len(0) == 10);
  CHECK_FALSE(generatable(token::kPad));
  CHECK_FALSE(generatable(token::kBos));
  CHECK(generatable(token::kEos));
}

TEST_CASE("greedy decoding respects max_len and flags truncation") {
  auto m = make_model<double>(toy(10), 1);
  const TokenSequence x{{4, 5}, Role::src}, y{{6, 7}, Role::mt};
  auto r = greedy_decode(m, x, y, 1);
  CHECK(r.ids.size() == 1);
  CHECK(r.truncated == (r.ids[0] != token::kEos));
  CHECK(r.logprob <= 0.0);
  CHECK_THROWS_AS(greedy_decode(m, x, y, 0), ContractError);
}

TEST_CASE("greedy output equals the argmax trace of teacher forcing it back") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = make_model<double>(toy(9), seed);
    sharpen(m, 3.0);
    const TokenSequence x{{4, 5, 6}, Role::src}, y{{7, 8}, Role::mt};
    auto r = greedy_decode(m, x, y, 6);
    TokenSequence z{{token::kBos}, Role::pe};
    z.ids.insert(z.ids.end(), r.ids.begin(), r.ids.end() - 1);
    ForwardContext ctx;
    auto logits = m.forward(x, y, z, ctx);
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      int best = -1;
      for (int c = 0; c < 9; ++c)
        if (generatable(c) && (best < 0 || logits.at(i, c) > logits.at(i, best))) best = c;
      CHECK(best == r.ids[i]);
    }
    CHECK(sequence_logprob(m, x, y, r.ids) == doctest::Approx(r.logprob).epsilon(1e-10));
  }
}

TEST_CASE("beam of one without length penalty is greedy") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = make_model<double>(toy(11), seed);
    sharpen(m, 2.0);
    const TokenSequence x{{4, 5, 6}, Role::src}, y{{7, 8, 9}, Role::mt};
    auto g = greedy_decode(m, x, y, 8);
    auto b = beam_decode(m, x, y, 1, 8, 0.0);
    CHECK(g.ids == b.ids);
    CHECK(g.logprob == b.logprob);
  }
}

TEST_CASE("wide beam finds the exhaustive argmax on a toy vocabulary") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = make_model<double>(toy(5), seed);
    sharpen(m, 2.0);
    const TokenSequence x{{4, 4}, Role::src}, y{{4}, Role::mt};
    const std::size_t max_len = 3;
    // Enumerate every complete output: EOS-terminated or max_len long.
    std::vector<int> alphabet;
    for (int c = 0; c < 5; ++c)
      if (generatable(c)) alphabet.push_back(c);
    double best = -1e300;
    std::vector<int> best_ids;
    std::function<void(std::vector<int>&)> walk = [&](std::vector<int>& ids) {
      if (!ids.empty() && (ids.back() == token::kEos || ids.size() == max_len)) {
        const double lp = sequence_logprob(m, x, y, ids);
        if (lp > best) {
          best = lp;
          best_ids = ids;
        }
        return;
      }
      for (int c : alphabet) {
        ids.push_back(c);
        walk(ids);
        ids.pop_back();
      }
    };
    std::vector<int> start;
    walk(start);
    auto r = beam_decode(m, x, y, 125, max_len, 0.0);
    CHECK(r.ids == best_ids);
    CHECK(r.logprob == doctest::Approx(best).epsilon(1e-10));
    auto g = greedy_decode(m, x, y, max_len);
    CHECK(r.logprob >= g.logprob - 1e-12);
  }
}

TEST_CASE("beam score is the rescored logprob over len^alpha") {
  auto m = make_model<float>([] {
    auto c = toy(12);
    c.precision = Precision::f32;
    return c;
  }(), 3);
  const TokenSequence x{{4, 5}, Role::src}, y{{6, 7, 8}, Role::mt};
  auto r = beam_decode(m, x, y, 4, 7, 0.6);
  const double rescored = sequence_logprob(m, x, y, r.ids);
  CHECK(std::abs(r.logprob - rescored) < 1e-5);
  CHECK(r.score == doctest::Approx(r.logprob / std::pow(static_cast<double>(r.ids.size()), 0.6)));
  auto again = beam_decode(m, x, y, 4, 7, 0.6);
  CHECK(again.ids == r.ids);
  CHECK_THROWS_AS(beam_decode(m, x, y, 0, 7, 0.6), ContractError);
  CHECK_THROWS_AS(beam_decode(m, x, y, 2, 7, -1.0), ContractError);
}

TEST_CASE("a model overfit to one triplet reproduces its pe") {
  Triplet t;
  t.src = {{4, 5, 6}, Role::src};
  t.mt = {{7, 8, 9}, Role::mt};
  t.pe = {{7, 10, 9}, Role::pe};
  auto c = toy(11, 16);
  c.precision = Precision::f32;
  auto m = make_model<float>(c, 2);
  TrainConfig tc;
  tc.max_steps = 300;
  tc.warmup = 50;
  tc.label_smoothing = 0.0;
  tc.patience = 0;
  train(m, {t}, {t}, tc);
  auto r = greedy_decode(m, t.src, t.mt, 10);
  CHECK(r.ids == std::vector<int>{7, 10, 9, token::kEos});
  CHECK(beam_decode(m, t.src, t.mt, 4, 10, 0.6).ids == r.ids);
}

TEST_CASE("decoding stops at the model's positional limit") {
  auto c = toy(9);
  c.max_len = 4;
  auto m = make_model<double>(c, 2);
  const TokenSequence x{{4}, Role::src}, y{{5}, Role::mt};
  CHECK(greedy_decode(m, x, y, 50).ids.size() <= 4);
  CHECK(beam_decode(m, x, y, 3, 50, 0.6).ids.size() <= 4);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "ape/corpus.hpp"
#include "ape/errors.hpp"
#include "ape/training.hpp"

using namespace ape;

namespace {

Triplet make_triplet(std::size_t ls, std::size_t lm, std::size_t lp, int base = 4) {
  Triplet t;
  for (std::size_t i = 0; i < ls; ++i) t.src.ids.push_back(base + static_cast<int>(i % 5));
  for (std::size_t i = 0; i < lm; ++i) t.mt.ids.push_back(base + static_cast<int>((i + 1) % 5));
  for (std::size_t i = 0; i < lp; ++i) t.pe.ids.push_back(base + static_cast<int>((i + 2) % 5));
  t.src.role = Role::src;
  t.mt.role = Role::mt;
  t.pe.role = Role::pe;
  return t;
}

std::vector<Triplet> random_triplets(std::size_t n, int vocab, Rng& rng, int max_len = 6) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    Triplet t;
    for (auto* s : {&t.src, &t.mt, &t.pe}) {
      const auto len = rng.integer(1, max_len);
      for (int j = 0; j < len; ++j) s->ids.push_back(static_cast<int>(rng.integer(token::kNumReserved, vocab - 1)));
    }
    t.src.role = Role::src;
    t.mt.role = Role::mt;
    t.pe.role = Role::pe;
    out.push_back(std::move(t));
  }
  return out;
}

ModelConfig small(int vocab) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 32;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  c.max_len = 32;
  return c;
}

}  // namespace

TEST_CASE("uniform prediction over two classes costs ln 2") {
  auto logits = Tensor<double>::matrix({{0.0, 0.0}});
  const std::vector<int> gold{0};
  CHECK(nll_loss(logits, std::span<const int>(gold), 0.0, -1).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("smoothed cross-entropy matches a scalar computation") {
  auto logits = Tensor<double>::matrix({{0.0, 0.0, 2.0, 0.0, 0.0}});
  const std::vector<int> gold{2};
  const double eps = 0.1;
  // Scalar oracle: log-softmax by hand, mass 1-eps on gold, eps/3 on ids 1, 3 and 4 (PAD excluded).
  const double z = std::log(4.0 + std::exp(2.0));
  const double lp_gold = 2.0 - z, lp_other = -z;
  const double expected = -((1 - eps) * lp_gold + 3 * (eps / 3) * lp_other);
  CHECK(nll_loss(logits, std::span<const int>(gold), eps).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss shrinks monotonically as the gold logit gap widens") {
  const std::vector<int> gold{token::kEos};
  double previous = 1e9;
  for (double gap : {0.0, 1.0, 4.0, 16.0, 64.0}) {
    auto logits = Tensor<double>::matrix({{0.0, 0.0, 0.0, gap, 0.0}});
    const double l = nll_loss(logits, std::span<const int>(gold), 0.0).item();
    CHECK(l < previous);
    previous = l;
  }
  CHECK(previous < 1e-20);
}

TEST_CASE("padding targets are excluded and all-padding is an error") {
  auto logits = Tensor<double>::from({2, 5}, {0, 1, 2, 3, 4, 4, 3, 2, 1, 0}, true);
  const std::vector<int> targets{4, token::kPad};
  auto loss = nll_loss(logits, std::span<const int>(targets), 0.1);
  loss.backward();
  const auto g = logits.grad();
  for (std::size_t c = 5; c < 10; ++c) CHECK(g[c] == 0.0);
  const std::vector<int> pads{token::kPad, token::kPad};
  CHECK_THROWS_AS(nll_loss(logits.detach(), std::span<const int>(pads), 0.0), ContractError);
  CHECK_THROWS_AS(nll_loss(logits.detach(), std::span<const int>(targets), 1.0), ContractError);
}

TEST_CASE("one triplet with a large budget forms one batch") {
  std::vector<Triplet> ts{make_triplet(3, 4, 5)};
  auto batches = make_batches(ts, 1000, 1);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].size() == 1);
  CHECK(batches[0].target_tokens == 6);
  CHECK(batches[0].pe_in.row(0)[0] == token::kBos);
  CHECK(batches[0].pe_out.row(0)[5] == token::kEos);
}

TEST_CASE("identical lengths need no padding") {
  std::vector<Triplet> ts(10, make_triplet(3, 3, 3));
  BatchReport report;
  auto batches = make_batches(ts, 40, 7, &report);
  CHECK(report.pad_tokens == 0);
  std::size_t rows = 0;
  for (const auto& b : batches) {
    CHECK(b.padded_tokens() <= 40);
    rows += b.size();
  }
  CHECK(rows == 10);
}

TEST_CASE("batches partition the corpus and respect the budget") {
  Rng rng(5);
  auto ts = random_triplets(100, 20, rng, 8);
  BatchReport report;
  auto batches = make_batches(ts, 120, 3, &report);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.padded_tokens() <= 120);
    CHECK(b.pe_in.ids.size() == b.pe_out.ids.size());
    for (std::size_t r = 0; r < b.size(); ++r) {
      const auto& t = ts[b.indices[r]];
      // pe_out is pe_in shifted left with EOS appended.
      for (std::size_t i = 0; i < t.pe.size(); ++i) CHECK(b.pe_out.row(r)[i] == b.pe_in.row(r)[i + 1]);
      CHECK(b.pe_out.row(r)[t.pe.size()] == token::kEos);
    }
    seen.insert(seen.end(), b.indices.begin(), b.indices.end());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
  CHECK(seen.size() == 100);
  CHECK(report.skipped_over_budget == 0);
  // Same seed, same batches.
  auto again = make_batches(ts, 120, 3);
  REQUIRE(again.size() == batches.size());
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].indices == batches[i].indices);
}

TEST_CASE("triplets over the budget are skipped and counted") {
  std::vector<Triplet> ts{make_triplet(2, 2, 2), make_triplet(20, 20, 20)};
  BatchReport report;
  auto batches = make_batches(ts, 20, 1, &report);
  CHECK(report.skipped_over_budget == 1);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].indices == std::vector<std::size_t>{0});
}

TEST_CASE("batch loss is invariant to row order") {
  Rng rng(2);
  auto ts = random_triplets(6, 15, rng);
  auto model = make_model<double>(small(15), 3);
  auto forward = make_batches(ts, 100000, 1);
  REQUIRE(forward.size() == 1);
  auto reversed = ts;
  std::reverse(reversed.begin(), reversed.end());
  auto backward = make_batches(reversed, 100000, 9);
  CHECK(batch_loss_eval(model, forward[0], 0.1) == batch_loss_eval(model, backward[0], 0.1));
}

TEST_CASE("exp of minus the summed NLL equals the product of teacher-forced probabilities") {
  Rng rng(4);
  auto ts = random_triplets(5, 12, rng);
  auto model = make_model<double>(small(12), 5);
  for (const auto& t : ts) {
    TokenSequence z{{token::kBos}, Role::pe};
    z.ids.insert(z.ids.end(), t.pe.ids.begin(), t.pe.ids.end());
    auto targets = t.pe.ids;
    targets.push_back(token::kEos);
    ForwardContext ctx;
    auto logits = model.forward(t.src, t.mt, z, ctx);
    auto probs = softmax_rows(logits);
    double product = 1.0;
    for (std::size_t i = 0; i < targets.size(); ++i) product *= probs.at(i, static_cast<std::size_t>(targets[i]));
    const double total = nll_loss_sum(logits, std::span<const int>(targets), 0.0).item();
    CHECK(std::exp(-total) == doctest::Approx(product).epsilon(1e-10));
  }
}

TEST_CASE("zero steps leave the parameters and the initial dev loss untouched") {
  Rng rng(6);
  auto ts = random_triplets(4, 12, rng);
  auto model = make_model<float>(small(12), 7);
  const auto before = model.clone();
  TrainConfig tc;
  tc.max_steps = 0;
  auto state = train(model, ts, ts, tc);
  CHECK(state.step == 0);
  REQUIRE(state.history.size() == 1);
  CHECK(state.history[0].dev_loss == doctest::Approx(evaluate(before, ts).loss));
  auto a = model.parameters(), b = before.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].data().begin(), a[i].data().end(), b[i].data().begin()));
}

TEST_CASE("training memorizes a single triplet and is reproducible") {
  std::vector<Triplet> ts{make_triplet(3, 3, 3)};
  TrainConfig tc;
  tc.max_steps = 300;
  tc.warmup = 50;
  tc.label_smoothing = 0.0;
  tc.eval_interval = 50;
  tc.patience = 0;
  auto m1 = make_model<float>(small(10), 1);
  auto s1 = train(m1, ts, ts, tc);
  CHECK(evaluate(m1, ts).loss < 0.01);
  auto m2 = make_model<float>(small(10), 1);
  auto s2 = train(m2, ts, ts, tc);
  auto a = m1.parameters(), b = m2.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].data().begin(), a[i].data().end(), b[i].data().begin()));
  REQUIRE(s1.history.size() == s2.history.size());
  for (std::size_t i = 0; i < s1.history.size(); ++i) CHECK(s1.history[i].dev_loss == s2.history[i].dev_loss);
  // Best dev loss never increases across the recorded improvements.
  double best = 1e9;
  for (const auto& e : s1.history) best = std::min(best, e.dev_loss);
  CHECK(s1.best_dev_loss == best);
}

TEST_CASE("training rejects empty corpora") {
  auto model = make_model<float>(small(10), 1);
  std::vector<Triplet> none;
  std::vector<Triplet> one{make_triplet(2, 2, 2)};
  CHECK_THROWS_AS(train(model, none, one, TrainConfig{}), ContractError);
  CHECK_THROWS_AS(train(model, one, none, TrainConfig{}), ContractError);
}

TEST_CASE("log lines carry the documented keys") {
  const auto line = to_json_line({3, 0.5, 1.25, 2.5, 0.75});
  for (const char* key : {"\"step\":3", "\"lr\":0.5", "\"train_loss\":1.25", "\"dev_loss\":2.5", "\"dev_token_acc\":0.75"})
    CHECK(line.find(key) != std::string::npos);
}

TEST_CASE("single_source_mode builds the requested variant") {
  CHECK(single_source_mode<float>(small(10), "mt2pe", 1).config().mode == ModelMode::mt_to_pe);
  CHECK(single_source_mode<float>(small(10), "src->pe", 1).config().mode == ModelMode::src_to_pe);
  CHECK_THROWS_AS(single_source_mode<float>(small(10), "both", 1), ConfigError);
}

#include "ape/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "ape/errors.hpp"
#include "ape/random.hpp"

namespace ape {

std::size_t triplet_tokens(const Triplet& t) {
  return t.src.size() + t.mt.size() + t.pe.size() + 1;
}

namespace {

IdMatrix pack(const std::vector<std::vector<int>>& rows) {
  IdMatrix m;
  m.rows = rows.size();
  for (const auto& r : rows) m.cols = std::max(m.cols, r.size());
  m.ids.assign(m.rows * m.cols, token::kPad);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), m.ids.begin() + static_cast<long>(i * m.cols));
  return m;
}

Batch assemble(const std::vector<Triplet>& triplets, const std::vector<std::size_t>& members) {
  std::vector<std::vector<int>> src, mt, pe_in, pe_out;
  Batch b;
  for (auto idx : members) {
    const auto& t = triplets[idx];
    src.push_back(t.src.ids);
    mt.push_back(t.mt.ids);
    std::vector<int> in{token::kBos};
    in.insert(in.end(), t.pe.ids.begin(), t.pe.ids.end());
    std::vector<int> out(t.pe.ids.begin(), t.pe.ids.end());
    out.push_back(token::kEos);
    pe_in.push_back(std::move(in));
    pe_out.push_back(std::move(out));
    b.src_len.push_back(t.src.size());
    b.mt_len.push_back(t.mt.size());
    b.pe_len.push_back(t.pe.size() + 1);
    b.target_tokens += t.pe.size() + 1;
    b.indices.push_back(idx);
  }
  b.src = pack(src);
  b.mt = pack(mt);
  b.pe_in = pack(pe_in);
  b.pe_out = pack(pe_out);
  return b;
}

std::size_t padded_cost(std::size_t rows, std::size_t s, std::size_t m, std::size_t p) {
  return rows * (s + m + p);
}

}  // namespace

Batch single_batch(const Triplet& triplet) { return assemble({triplet}, {0}); }

std::vector<Batch> make_batches(const std::vector<Triplet>& triplets, std::size_t token_budget,
                                std::uint64_t seed, BatchReport* report) {
  BatchReport local;
  Rng rng(seed);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    if (triplet_tokens(triplets[i]) > token_budget) {
      ++local.skipped_over_budget;
      continue;
    }
    order.push_back(i);
  }
  if (local.skipped_over_budget > 0) {
    std::cerr << "warning: " << local.skipped_over_budget
              << " triplet(s) exceed the token budget of " << token_budget << " and were skipped\n";
  }
  std::shuffle(order.begin(), order.end(), rng.engine());
  auto key = [&](std::size_t i) {
    const auto& t = triplets[i];
    return std::make_tuple(t.src.size(), t.mt.size(), t.pe.size());
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> current;
  std::size_t ms = 0, mm = 0, mp = 0;
  for (auto idx : order) {
    const auto& t = triplets[idx];
    const std::size_t ns = std::max(ms, t.src.size());
    const std::size_t nm = std::max(mm, t.mt.size());
    const std::size_t np = std::max(mp, t.pe.size() + 1);
    if (!current.empty() && padded_cost(current.size() + 1, ns, nm, np) > token_budget) {
      groups.push_back(std::move(current));
      current.clear();
      ms = mm = mp = 0;
    }
    current.push_back(idx);
    ms = std::max(ms, t.src.size());
    mm = std::max(mm, t.mt.size());
    mp = std::max(mp, t.pe.size() + 1);
  }
  if (!current.empty()) groups.push_back(std::move(current));
  std::shuffle(groups.begin(), groups.end(), rng.engine());

  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& g : groups) {
    batches.push_back(assemble(triplets, g));
    const auto& b = batches.back();
    std::size_t real = 0;
    for (std::size_t r = 0; r < b.size(); ++r) real += b.src_len[r] + b.mt_len[r] + b.pe_len[r];
    local.pad_tokens += b.padded_tokens() - real;
  }
  local.batches = batches.size();
  if (report) *report = local;
  return batches;
}

template <typename T>
Tensor<T> nll_loss_sum(const Tensor<T>& logits, std::span<const int> targets, double smoothing,
                       std::size_t* count, int ignore_id) {
  if (smoothing < 0.0 || smoothing >= 1.0) throw ContractError("nll_loss: smoothing must lie in [0, 1)");
  if (logits.dim() != 2 || logits.rows() != targets.size()) {
    throw DimensionError("nll_loss: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.rows(), vocab = logits.cols();
  const bool has_ignore = ignore_id >= 0 && static_cast<std::size_t>(ignore_id) < vocab;
  const std::size_t others = vocab - 1 - (has_ignore ? 1 : 0);
  if (smoothing > 0.0 && others == 0) throw DimensionError("nll_loss: nothing to smooth over");
  const double spread = others ? smoothing / static_cast<double>(others) : 0.0;
  std::vector<T> weights(rows * vocab, T(0));
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const int gold = targets[i];
    if (gold == ignore_id) continue;
    if (gold < 0 || static_cast<std::size_t>(gold) >= vocab) {
      throw VocabularyError("nll_loss: target id " + std::to_string(gold) + " out of range");
    }
    ++n;
    T* row = weights.data() + i * vocab;
    if (smoothing > 0.0) {
      for (std::size_t v = 0; v < vocab; ++v) row[v] = T(spread);
      if (has_ignore) row[ignore_id] = T(0);
    }
    row[gold] = T(1.0 - smoothing);
  }
  if (count) *count = n;
  auto logp = log_softmax_rows(logits);
  return scale(sum(mul(logp, Tensor<T>::from({rows, vocab}, std::move(weights)))), T(-1));
}

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& logits, std::span<const int> targets, double smoothing,
                   int ignore_id) {
  std::size_t n = 0;
  auto total = nll_loss_sum(logits, targets, smoothing, &n, ignore_id);
  if (n == 0) throw ContractError("nll_loss: every target is PAD");
  return scale(total, T(1.0 / static_cast<double>(n)));
}

template <typename T>
Transformer<T> make_model(ModelConfig config, std::uint64_t seed) {
  config.precision = std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
  return Transformer<T>(std::move(config), seed);
}

template <typename T>
Transformer<T> single_source_mode(ModelConfig config, const std::string& mode, std::uint64_t seed) {
  config.mode = parse_mode(mode);
  return make_model<T>(std::move(config), seed);
}

namespace {

TokenSequence as_sequence(std::span<const int> ids, Role role) {
  return {std::vector<int>(ids.begin(), ids.end()), role};
}

TokenSequence with_bos(const TokenSequence& pe) {
  TokenSequence out{{token::kBos}, Role::pe};
  out.ids.insert(out.ids.end(), pe.ids.begin(), pe.ids.end());
  return out;
}

std::vector<int> with_eos(const TokenSequence& pe) {
  std::vector<int> out = pe.ids;
  out.push_back(token::kEos);
  return out;
}

}  // namespace

template <typename T>
EvalResult evaluate(const Transformer<T>& model, const std::vector<Triplet>& triplets) {
  NoGradGuard no_grad;
  EvalResult r;
  std::size_t correct = 0;
  ForwardContext ctx;
  for (const auto& t : triplets) {
    const auto z_in = with_bos(t.pe);
    const auto targets = with_eos(t.pe);
    const auto logits = model.forward(t.src, t.mt, z_in, ctx);
    std::size_t n = 0;
    r.total_nll += static_cast<double>(nll_loss_sum(logits, targets, 0.0, &n).item());
    r.tokens += n;
    const auto v = logits.cols();
    const auto data = logits.data();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto first = data.begin() + static_cast<long>(i * v);
      const auto best = std::max_element(first, first + static_cast<long>(v)) - first;
      if (best == targets[i]) ++correct;
    }
  }
  if (r.tokens > 0) {
    r.loss = r.total_nll / static_cast<double>(r.tokens);
    r.token_acc = static_cast<double>(correct) / static_cast<double>(r.tokens);
  }
  return r;
}

template <typename T>
double batch_loss_eval(const Transformer<T>& model, const Batch& batch, double smoothing) {
  NoGradGuard no_grad;
  ForwardContext ctx;
  std::vector<double> rows;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto logits = model.forward(as_sequence(batch.src.row(r), Role::src),
                                      as_sequence(batch.mt.row(r), Role::mt),
                                      as_sequence(batch.pe_in.row(r), Role::pe), ctx);
    rows.push_back(static_cast<double>(nll_loss_sum(logits, batch.pe_out.row(r), smoothing).item()));
  }
  std::sort(rows.begin(), rows.end());
  double total = 0.0;
  for (double v : rows) total += v;
  return total / static_cast<double>(batch.target_tokens);
}

std::string to_json_line(const LogEntry& e) {
  nlohmann::json j;
  j["step"] = e.step;
  j["lr"] = e.lr;
  j["train_loss"] = e.train_loss;
  j["dev_loss"] = e.dev_loss;
  j["dev_token_acc"] = e.dev_token_acc;
  return j.dump();
}

template <typename T>
TrainState<T> train(Transformer<T>& model, const std::vector<Triplet>& train_set,
                    const std::vector<Triplet>& dev_set, const TrainConfig& config,
                    const TrainHooks<T>& hooks) {
  if (train_set.empty()) throw ContractError("train: empty training corpus");
  if (dev_set.empty()) throw ContractError("train: empty development corpus");
  if (config.eval_interval < 1) throw ConfigError("train: eval_interval must be >= 1");

  TrainState<T> state;
  state.seed = config.seed;
  auto params = model.parameters();
  state.adam = AdamState<T>::for_params(params);
  Rng dropout_rng(config.seed ^ 0xD50Full);

  std::optional<Transformer<T>> best;
  int evals_without_gain = 0;

  auto run_eval = [&](double lr) {
    const auto dev = evaluate(model, dev_set);
    LogEntry entry{state.step, lr, state.last_train_loss, dev.loss, dev.token_acc};
    state.history.push_back(entry);
    if (hooks.on_eval) hooks.on_eval(entry);
    if (state.history.size() == 1 || dev.loss < state.best_dev_loss) {
      state.best_dev_loss = dev.loss;
      state.best_step = state.step;
      evals_without_gain = 0;
      if (config.restore_best) best.emplace(model.clone());
      if (hooks.on_best) hooks.on_best(model, entry);
    } else {
      ++evals_without_gain;
    }
  };

  run_eval(0.0);

  std::vector<Batch> batches;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  double lr = 0.0;
  while (state.step < config.max_steps) {
    if (cursor == batches.size()) {
      batches = make_batches(train_set, config.token_budget, config.seed + epoch, &state.batching);
      if (batches.empty()) throw InputError("train: no triplet fits the token budget");
      cursor = 0;
      ++epoch;
    }
    const Batch& batch = batches[cursor++];
    ++state.step;
    lr = config.lr_scale * lr_schedule(state.step, model.config().d_model, config.warmup);

    zero_grads(params);
    ForwardContext ctx{true, &dropout_rng, nullptr};
    double step_loss = 0.0;
    const T inv_tokens = T(1.0 / static_cast<double>(batch.target_tokens));
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto logits = model.forward(as_sequence(batch.src.row(r), Role::src),
                                        as_sequence(batch.mt.row(r), Role::mt),
                                        as_sequence(batch.pe_in.row(r), Role::pe), ctx);
      auto loss = scale(nll_loss_sum(logits, batch.pe_out.row(r), config.label_smoothing), inv_tokens);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss at step " + std::to_string(state.step));
      }
      step_loss += value;
      loss.backward();
    }
    clip_grad_norm(params, config.clip_norm);
    adam_step(params, state.adam, lr);

    state.last_train_loss = step_loss;
    state.loss_ema = state.step == 1 ? step_loss : 0.9 * state.loss_ema + 0.1 * step_loss;

    const bool stop_on_loss = config.stop_train_loss > 0.0 && step_loss < config.stop_train_loss;
    if (state.step % config.eval_interval == 0 || state.step == config.max_steps || stop_on_loss) {
      run_eval(lr);
      if (config.patience > 0 && evals_without_gain >= config.patience) {
        state.early_stopped = true;
        break;
      }
    }
    if (stop_on_loss) break;
  }

  if (config.restore_best && best) {
    auto dst = model.parameters();
    auto src = best->parameters();
    for (std::size_t i = 0; i < dst.size(); ++i)
      std::copy(src[i].data().begin(), src[i].data().end(), dst[i].data().begin());
  }
  return state;
}

#define APE_INSTANTIATE_TRAINING(T)                                                            \
  template Tensor<T> nll_loss_sum(const Tensor<T>&, std::span<const int>, double, std::size_t*, \
                                  int);                                                         \
  template Tensor<T> nll_loss(const Tensor<T>&, std::span<const int>, double, int);             \
  template Transformer<T> make_model(ModelConfig, std::uint64_t);                               \
  template Transformer<T> single_source_mode(ModelConfig, const std::string&, std::uint64_t);   \
  template EvalResult evaluate(const Transformer<T>&, const std::vector<Triplet>&);             \
  template double batch_loss_eval(const Transformer<T>&, const Batch&, double);                 \
  template TrainState<T> train(Transformer<T>&, const std::vector<Triplet>&,                    \
                               const std::vector<Triplet>&, const TrainConfig&,                 \
                               const TrainHooks<T>&);

APE_INSTANTIATE_TRAINING(float)
APE_INSTANTIATE_TRAINING(double)

}  // namespace ape

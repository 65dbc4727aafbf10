#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ape/corpus.hpp"
#include "ape/model.hpp"
#include "ape/optim.hpp"

namespace ape {

// Row-major matrix of token ids, right-padded with PAD.
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;

  std::span<const int> row(std::size_t r) const { return {ids.data() + r * cols, cols}; }
};

struct Batch {
  IdMatrix src;
  IdMatrix mt;
  IdMatrix pe_in;   // BOS + pe
  IdMatrix pe_out;  // pe + EOS
  std::vector<std::size_t> src_len, mt_len, pe_len;  // pe_len counts BOS/EOS once
  std::vector<std::size_t> indices;  // positions in the originating triplet list
  std::size_t target_tokens = 0;     // non-PAD entries of pe_out

  std::size_t size() const { return indices.size(); }
  // Cells of the src, mt and pe_in matrices (pe_out mirrors pe_in).
  std::size_t padded_tokens() const { return src.ids.size() + mt.ids.size() + pe_in.ids.size(); }
};

// |src| + |mt| + |pe| + 1: the padded-free footprint of one triplet.
std::size_t triplet_tokens(const Triplet& t);

struct BatchReport {
  std::size_t batches = 0;
  std::size_t skipped_over_budget = 0;
  std::size_t pad_tokens = 0;
};

// Shuffles with `seed`, sorts by (src, mt, pe) length so similar lengths
// share a batch, packs greedily under `token_budget` padded cells, then
// shuffles the batch order. Triplets that cannot fit alone are skipped and
// counted.
std::vector<Batch> make_batches(const std::vector<Triplet>& triplets, std::size_t token_budget,
                                std::uint64_t seed, BatchReport* report = nullptr);

// Assembles a single-row batch.
Batch single_batch(const Triplet& triplet);

// Label-smoothed cross-entropy summed over non-PAD targets: the gold token
// receives 1 - smoothing, the rest is spread evenly over the other non-PAD
// entries. `count` receives the number of non-PAD targets. `ignore_id`
// is the padding id (-1 disables exclusion, e.g. for toy vocabularies).
template <typename T>
Tensor<T> nll_loss_sum(const Tensor<T>& logits, std::span<const int> targets, double smoothing,
                       std::size_t* count = nullptr, int ignore_id = token::kPad);
// Mean over non-PAD targets. Throws ContractError when every target is PAD.
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& logits, std::span<const int> targets, double smoothing,
                   int ignore_id = token::kPad);

template <typename T>
Transformer<T> make_model(ModelConfig config, std::uint64_t seed);
// Builds the requested variant (multi, src2pe or mt2pe). Throws ConfigError
// for an unknown mode name.
template <typename T>
Transformer<T> single_source_mode(ModelConfig config, const std::string& mode, std::uint64_t seed);

// Teacher-forced negative log-likelihood (smoothing 0) and argmax accuracy.
struct EvalResult {
  double loss = 0.0;       // mean per target token
  double total_nll = 0.0;  // summed over target tokens
  double token_acc = 0.0;
  std::size_t tokens = 0;
};

template <typename T>
EvalResult evaluate(const Transformer<T>& model, const std::vector<Triplet>& triplets);

// Mean loss of a batch with dropout off. Rows are reduced in a canonical
// order so any permutation of the batch gives the identical value.
template <typename T>
double batch_loss_eval(const Transformer<T>& model, const Batch& batch, double smoothing);

struct TrainConfig {
  std::int64_t max_steps = 2000;
  std::int64_t warmup = 4000;
  double lr_scale = 1.0;
  std::size_t token_budget = 4096;
  std::int64_t eval_interval = 100;
  int patience = 10;
  double label_smoothing = 0.1;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  bool restore_best = true;
  // Stop once the running train loss falls below this value (<= 0 disables).
  double stop_train_loss = 0.0;
};

struct LogEntry {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_token_acc = 0.0;
};

std::string to_json_line(const LogEntry& entry);

template <typename T>
struct TrainState {
  std::int64_t step = 0;
  AdamState<T> adam;
  double best_dev_loss = 0.0;
  std::int64_t best_step = 0;
  std::uint64_t seed = 0;
  double loss_ema = 0.0;
  double last_train_loss = 0.0;
  bool early_stopped = false;
  std::vector<LogEntry> history;
  BatchReport batching;
};

template <typename T>
struct TrainHooks {
  std::function<void(const LogEntry&)> on_eval;
  // Called whenever the dev loss improves (including the initial evaluation).
  std::function<void(const Transformer<T>&, const LogEntry&)> on_best;
};

// Each step: forward (dropout on) -> smoothed NLL -> backward -> global-norm
// clipping -> Adam with lr_scale * lr_schedule(step). The dev set is scored
// before the first step and every eval_interval steps; training stops early
// after `patience` evaluations without improvement. Throws NumericError on a
// non-finite loss or gradient.
template <typename T>
TrainState<T> train(Transformer<T>& model, const std::vector<Triplet>& train_set,
                    const std::vector<Triplet>& dev_set, const TrainConfig& config,
                    const TrainHooks<T>& hooks = {});

}  // namespace ape

#pragma once

#include <cstddef>
#include <vector>

#include "ape/model.hpp"

namespace ape {

// Generated ids exclude the leading BOS and include EOS when one was produced.
struct DecodeResult {
  std::vector<int> ids;
  double logprob = 0.0;  // sum of per-token log-probabilities
  double score = 0.0;    // logprob / len^alpha
  bool truncated = false;  // stopped at max_len without EOS
};

inline constexpr int kDefaultBeam = 4;
inline constexpr double kDefaultAlpha = 0.6;

// 1.5 * |mt| + 10
std::size_t default_max_len(std::size_t mt_length);

// PAD and BOS are never generated.
// Both decoders also stop at the model's own max_len (the positional table).
bool generatable(int id);

template <typename T>
DecodeResult greedy_decode(const Transformer<T>& model, const TokenSequence& x,
                           const TokenSequence& y, std::size_t max_len);

// Finished hypotheses are ranked by logprob / len^alpha; ties go to the
// lexicographically smaller id sequence.
template <typename T>
DecodeResult beam_decode(const Transformer<T>& model, const TokenSequence& x,
                         const TokenSequence& y, int beam, std::size_t max_len, double alpha);

// Teacher-forced log-probability of `ids` (without BOS) given (x, y).
template <typename T>
double sequence_logprob(const Transformer<T>& model, const TokenSequence& x,
                        const TokenSequence& y, const std::vector<int>& ids);

}  // namespace ape

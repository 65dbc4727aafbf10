#include "ape/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ape/errors.hpp"

namespace ape {

std::size_t default_max_len(std::size_t mt_length) {
  return static_cast<std::size_t>(1.5 * static_cast<double>(mt_length)) + 10;
}

bool generatable(int id) { return id != token::kPad && id != token::kBos; }

namespace {

// Log-probabilities of the next token after `prefix` (which holds BOS).
template <typename T>
std::vector<double> next_logprobs(const Transformer<T>& model, const std::vector<int>& prefix,
                                  const HiddenStates<T>& memory, ForwardContext& ctx) {
  const auto logits = model.decode(TokenSequence{prefix, Role::pe}, memory, ctx);
  const std::size_t v = logits.cols();
  const auto row = logits.data().subspan((logits.rows() - 1) * v, v);
  double mx = -std::numeric_limits<double>::infinity();
  for (T l : row) mx = std::max(mx, static_cast<double>(l));
  double z = 0.0;
  for (T l : row) z += std::exp(static_cast<double>(l) - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t i = 0; i < v; ++i) out[i] = static_cast<double>(row[i]) - lse;
  return out;
}

double length_score(double logprob, std::size_t len, double alpha) {
  if (alpha == 0.0) return logprob;
  return logprob / std::pow(static_cast<double>(len), alpha);
}

struct Hyp {
  std::vector<int> ids;
  double logprob = 0.0;
  double score = 0.0;
};

bool ranks_before(double sa, const std::vector<int>& a, double sb, const std::vector<int>& b) {
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

template <typename T>
DecodeResult greedy_decode(const Transformer<T>& model, const TokenSequence& x,
                           const TokenSequence& y, std::size_t max_len) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
  max_len = std::min(max_len, static_cast<std::size_t>(model.config().max_len));
  NoGradGuard no_grad;
  ForwardContext ctx;
  const auto memory = model.encode(x, y, ctx);
  std::vector<int> prefix{token::kBos};
  DecodeResult out;
  while (out.ids.size() < max_len) {
    const auto lp = next_logprobs(model, prefix, memory, ctx);
    int best = -1;
    for (int i = 0; i < static_cast<int>(lp.size()); ++i) {
      if (!generatable(i)) continue;
      if (best < 0 || lp[static_cast<std::size_t>(i)] > lp[static_cast<std::size_t>(best)]) best = i;
    }
    out.ids.push_back(best);
    out.logprob += lp[static_cast<std::size_t>(best)];
    prefix.push_back(best);
    if (best == token::kEos) break;
  }
  out.truncated = out.ids.back() != token::kEos;
  out.score = out.logprob;
  return out;
}

template <typename T>
DecodeResult beam_decode(const Transformer<T>& model, const TokenSequence& x,
                         const TokenSequence& y, int beam, std::size_t max_len, double alpha) {
  if (beam < 1) throw ContractError("beam_decode: beam must be >= 1");
  if (max_len < 1) throw ContractError("beam_decode: max_len must be >= 1");
  max_len = std::min(max_len, static_cast<std::size_t>(model.config().max_len));
  if (!(alpha >= 0.0)) throw ContractError("beam_decode: alpha must be >= 0");
  NoGradGuard no_grad;
  ForwardContext ctx;
  const auto memory = model.encode(x, y, ctx);

  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> finished;
  const auto width = static_cast<std::size_t>(beam);
  while (!live.empty()) {
    std::vector<Hyp> candidates;
    for (const auto& h : live) {
      std::vector<int> prefix{token::kBos};
      prefix.insert(prefix.end(), h.ids.begin(), h.ids.end());
      const auto lp = next_logprobs(model, prefix, memory, ctx);
      for (int i = 0; i < static_cast<int>(lp.size()); ++i) {
        if (!generatable(i)) continue;
        Hyp c{h.ids, h.logprob + lp[static_cast<std::size_t>(i)], 0.0};
        c.ids.push_back(i);
        candidates.push_back(std::move(c));
      }
    }
    // Expansion is ranked by raw log-probability; the length penalty only
    // applies when finished hypotheses are compared.
    auto by_logprob = [](const Hyp& a, const Hyp& b) {
      return ranks_before(a.logprob, a.ids, b.logprob, b.ids);
    };
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep),
                      candidates.end(), by_logprob);
    candidates.resize(keep);
    live.clear();
    for (auto& c : candidates) {
      if (c.ids.back() == token::kEos || c.ids.size() >= max_len) {
        c.score = length_score(c.logprob, c.ids.size(), alpha);
        finished.push_back(std::move(c));
      } else {
        live.push_back(std::move(c));
      }
    }
  }
  const auto best = std::min_element(finished.begin(), finished.end(), [](const Hyp& a, const Hyp& b) {
    return ranks_before(a.score, a.ids, b.score, b.ids);
  });
  DecodeResult out;
  out.ids = best->ids;
  out.logprob = best->logprob;
  out.score = best->score;
  out.truncated = out.ids.back() != token::kEos;
  return out;
}

template <typename T>
double sequence_logprob(const Transformer<T>& model, const TokenSequence& x,
                        const TokenSequence& y, const std::vector<int>& ids) {
  if (ids.empty()) throw ContractError("sequence_logprob: empty sequence");
  NoGradGuard no_grad;
  ForwardContext ctx;
  std::vector<int> z_in{token::kBos};
  z_in.insert(z_in.end(), ids.begin(), ids.end() - 1);
  const auto logits = model.forward(x, y, TokenSequence{z_in, Role::pe}, ctx);
  const auto logp = log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) total += static_cast<double>(logp.at(i, static_cast<std::size_t>(ids[i])));
  return total;
}

#define APE_INSTANTIATE_DECODING(T)                                                             \
  template DecodeResult greedy_decode(const Transformer<T>&, const TokenSequence&,             \
                                      const TokenSequence&, std::size_t);                      \
  template DecodeResult beam_decode(const Transformer<T>&, const TokenSequence&,               \
                                    const TokenSequence&, int, std::size_t, double);           \
  template double sequence_logprob(const Transformer<T>&, const TokenSequence&,                \
                                   const TokenSequence&, const std::vector<int>&);

APE_INSTANTIATE_DECODING(float)
APE_INSTANTIATE_DECODING(double)

}  // namespace ape

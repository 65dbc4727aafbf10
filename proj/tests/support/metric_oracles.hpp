#pragma once

// Brute-force references for the metrics: full-table edit distance, exact
// shift+edit cost by breadth-first search over block moves, and n-gram
// counting by direct enumeration.

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "ape/metrics.hpp"

namespace ape::testing {

inline int oracle_levenshtein(const Tokens& a, const Tokens& b) {
  std::vector<std::vector<int>> t(a.size() + 1, std::vector<int>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return t[a.size()][b.size()];
}

// Every arrangement reachable from `hyp` by block moves, with the fewest moves needed.
inline std::vector<std::pair<Tokens, int>> shift_closure(const Tokens& hyp) {
  std::map<Tokens, int> dist{{hyp, 0}};
  std::queue<Tokens> q;
  q.push(hyp);
  while (!q.empty()) {
    const Tokens cur = q.front();
    q.pop();
    const int d = dist[cur];
    const std::size_t n = cur.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j <= n; ++j) {
        Tokens block(cur.begin() + static_cast<long>(i), cur.begin() + static_cast<long>(j));
        Tokens rest(cur.begin(), cur.begin() + static_cast<long>(i));
        rest.insert(rest.end(), cur.begin() + static_cast<long>(j), cur.end());
        for (std::size_t k = 0; k <= rest.size(); ++k) {
          if (k == i) continue;
          Tokens next(rest.begin(), rest.begin() + static_cast<long>(k));
          next.insert(next.end(), block.begin(), block.end());
          next.insert(next.end(), rest.begin() + static_cast<long>(k), rest.end());
          if (dist.emplace(next, d + 1).second) q.push(next);
        }
      }
    }
  }
  return {dist.begin(), dist.end()};
}

// min over arrangements of (moves + edit distance to ref).
inline int exact_shift_edit_cost(const std::vector<std::pair<Tokens, int>>& closure, const Tokens& ref) {
  int best = 1 << 30;
  for (const auto& [arr, moves] : closure) {
    if (moves >= best) continue;
    best = std::min(best, moves + oracle_levenshtein(arr, ref));
  }
  return best;
}

inline long count_occurrences(const Tokens& s, const Tokens& gram) {
  long c = 0;
  if (gram.size() > s.size()) return 0;
  for (std::size_t i = 0; i + gram.size() <= s.size(); ++i)
    if (std::equal(gram.begin(), gram.end(), s.begin() + static_cast<long>(i))) ++c;
  return c;
}

// Corpus BLEU from directly enumerated n-grams; orders without hypothesis
// n-grams are left out, any zero precision gives 0.
inline double oracle_corpus_bleu(const std::vector<EvalPair>& pairs, int max_n = 4) {
  std::vector<long> match(max_n, 0), total(max_n, 0);
  long c = 0, r = 0;
  for (const auto& p : pairs) {
    c += static_cast<long>(p.hypothesis.size());
    r += static_cast<long>(p.reference.size());
    for (int n = 1; n <= max_n; ++n) {
      if (p.hypothesis.size() < static_cast<std::size_t>(n)) continue;
      std::vector<Tokens> distinct;
      for (std::size_t i = 0; i + n <= p.hypothesis.size(); ++i) {
        Tokens g(p.hypothesis.begin() + static_cast<long>(i), p.hypothesis.begin() + static_cast<long>(i + n));
        ++total[n - 1];
        if (std::find(distinct.begin(), distinct.end(), g) == distinct.end()) distinct.push_back(g);
      }
      for (const auto& g : distinct)
        match[n - 1] += std::min(count_occurrences(p.hypothesis, g), count_occurrences(p.reference, g));
    }
  }
  if (c == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    if (total[n] == 0) continue;
    if (match[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
    ++orders;
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

// All token lists of length 0..max_len over the alphabet.
inline std::vector<Tokens> all_lists(const Tokens& alphabet, std::size_t max_len) {
  std::vector<Tokens> out{{}};
  std::vector<Tokens> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Tokens> next;
    for (const auto& f : frontier)
      for (const auto& a : alphabet) {
        auto g = f;
        g.push_back(a);
        next.push_back(g);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace ape::testing

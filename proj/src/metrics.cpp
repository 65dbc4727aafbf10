#include "ape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ape/errors.hpp"
#include "ape/io.hpp"

namespace ape {

Tokens split_tokens(const std::string& line) {
  Tokens out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

namespace {

// Full DP table, (|hyp|+1) x (|ref|+1).
std::vector<int> edit_table(const Tokens& hyp, const Tokens& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  return d;
}

bool occurs_in(const Tokens& ref, const Tokens& hyp, std::size_t start, std::size_t len) {
  if (len > ref.size()) return false;
  for (std::size_t j = 0; j + len <= ref.size(); ++j) {
    if (std::equal(hyp.begin() + start, hyp.begin() + start + len, ref.begin() + j)) return true;
  }
  return false;
}

}  // namespace

int levenshtein(const Tokens& hyp, const Tokens& ref) {
  // Two-row variant of the table above.
  std::vector<int> prev(ref.size() + 1), cur(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const int diag = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({diag, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

EditCounts edit_counts(const Tokens& hyp, const Tokens& ref) {
  const auto d = edit_table(hyp, ref);
  const std::size_t m = ref.size();
  auto at = [&](std::size_t i, std::size_t j) { return d[i * (m + 1) + j]; };
  EditCounts counts;
  std::size_t i = hyp.size(), j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int cost = hyp[i - 1] == ref[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + cost) {
        counts.substitutions += cost;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

TerBreakdown ter(const Tokens& hyp, const Tokens& ref, const TerOptions& options) {
  if (ref.empty()) throw ContractError("ter: reference must be non-empty");
  Tokens current = hyp;
  int shifts = 0;
  int distance = levenshtein(current, ref);
  while (distance > 0) {
    int best_distance = distance;
    Tokens best;
    const std::size_t n = current.size();
    for (std::size_t start = 0; start < n; ++start) {
      const std::size_t max_len =
          std::min<std::size_t>(static_cast<std::size_t>(options.max_shift_span), n - start);
      for (std::size_t len = 1; len <= max_len; ++len) {
        if (!occurs_in(ref, current, start, len)) break;  // longer spans cannot occur either
        Tokens rest;
        rest.reserve(n - len);
        rest.insert(rest.end(), current.begin(), current.begin() + start);
        rest.insert(rest.end(), current.begin() + start + len, current.end());
        for (std::size_t dest = 0; dest <= rest.size(); ++dest) {
          if (dest == start) continue;  // same sequence
          const long moved = static_cast<long>(dest) - static_cast<long>(start);
          if (std::labs(moved) > options.max_shift_distance) continue;
          Tokens candidate;
          candidate.reserve(n);
          candidate.insert(candidate.end(), rest.begin(), rest.begin() + dest);
          candidate.insert(candidate.end(), current.begin() + start, current.begin() + start + len);
          candidate.insert(candidate.end(), rest.begin() + dest, rest.end());
          const int dist = levenshtein(candidate, ref);
          if (dist < best_distance) {
            best_distance = dist;
            best = std::move(candidate);
          }
        }
      }
    }
    // A shift costs one edit; take it only when the total strictly drops.
    if (best_distance + 1 >= distance) break;
    current = std::move(best);
    distance = best_distance;
    ++shifts;
  }
  const auto counts = edit_counts(current, ref);
  TerBreakdown out;
  out.insertions = counts.insertions;
  out.deletions = counts.deletions;
  out.substitutions = counts.substitutions;
  out.shifts = shifts;
  out.ref_len = static_cast<int>(ref.size());
  out.score = static_cast<double>(out.edits()) / static_cast<double>(out.ref_len);
  return out;
}

namespace {

std::unordered_map<std::string, long> ngram_counts(const Tokens& toks, std::size_t n) {
  std::unordered_map<std::string, long> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      key += toks[i + k];
      key += '\x1f';
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuStats bleu_stats(const std::vector<EvalPair>& pairs, int max_n) {
  BleuStats stats;
  stats.matches.assign(static_cast<std::size_t>(max_n), 0);
  stats.totals.assign(static_cast<std::size_t>(max_n), 0);
  for (const auto& p : pairs) {
    stats.hyp_len += static_cast<long>(p.hypothesis.size());
    stats.ref_len += static_cast<long>(p.reference.size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngram_counts(p.hypothesis, static_cast<std::size_t>(n));
      const auto r = ngram_counts(p.reference, static_cast<std::size_t>(n));
      for (const auto& [gram, count] : h) {
        const auto it = r.find(gram);
        if (it != r.end()) stats.matches[n - 1] += std::min(count, it->second);
        stats.totals[n - 1] += count;
      }
    }
  }
  return stats;
}

namespace {

double brevity_penalty(long hyp_len, long ref_len) {
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

double corpus_bleu(const std::vector<EvalPair>& pairs, int max_n) {
  if (pairs.empty()) throw ContractError("corpus_bleu: no sentence pairs");
  if (max_n < 1) throw ContractError("corpus_bleu: max_n must be >= 1");
  const auto stats = bleu_stats(pairs, max_n);
  if (stats.hyp_len == 0) return 0.0;
  // Orders with no hypothesis n-grams at all (every sentence shorter than n)
  // have an undefined precision and are left out of the geometric mean.
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    if (stats.totals[n] == 0) continue;
    if (stats.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]));
    ++orders;
  }
  return 100.0 * brevity_penalty(stats.hyp_len, stats.ref_len) * std::exp(log_sum / orders);
}

double sentence_bleu(const Tokens& hyp, const Tokens& ref, int max_n) {
  if (max_n < 1) throw ContractError("sentence_bleu: max_n must be >= 1");
  const auto stats = bleu_stats({EvalPair{hyp, ref}}, max_n);
  if (stats.hyp_len == 0 || stats.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(stats.matches[0]) / static_cast<double>(stats.totals[0]));
  for (int n = 1; n < max_n; ++n) {
    log_sum += std::log(static_cast<double>(stats.matches[n] + 1) /
                        static_cast<double>(stats.totals[n] + 1));
  }
  return 100.0 * brevity_penalty(stats.hyp_len, stats.ref_len) * std::exp(log_sum / max_n);
}

CorpusReport evaluate_corpus(const std::vector<std::string>& hyp_lines,
                             const std::vector<std::string>& ref_lines) {
  if (hyp_lines.size() != ref_lines.size()) {
    throw InputError("eval: hypothesis has " + std::to_string(hyp_lines.size()) +
                     " lines but reference has " + std::to_string(ref_lines.size()));
  }
  if (ref_lines.empty()) throw InputError("eval: no sentences");
  CorpusReport report;
  std::vector<EvalPair> pairs;
  pairs.reserve(ref_lines.size());
  for (std::size_t i = 0; i < ref_lines.size(); ++i) {
    EvalPair p{split_tokens(hyp_lines[i]), split_tokens(ref_lines[i])};
    if (p.reference.empty()) {
      throw InputError("eval: reference line " + std::to_string(i + 1) + " is empty");
    }
    const auto b = ter(p.hypothesis, p.reference);
    report.totals.insertions += b.insertions;
    report.totals.deletions += b.deletions;
    report.totals.substitutions += b.substitutions;
    report.totals.shifts += b.shifts;
    report.totals.ref_len += b.ref_len;
    pairs.push_back(std::move(p));
  }
  report.totals.score =
      static_cast<double>(report.totals.edits()) / static_cast<double>(report.totals.ref_len);
  report.ter = 100.0 * report.totals.score;
  report.bleu = corpus_bleu(pairs);
  report.sentences = static_cast<int>(pairs.size());
  return report;
}

CorpusReport evaluate_files(const std::string& hyp_path, const std::string& ref_path) {
  return evaluate_corpus(read_lines(hyp_path), read_lines(ref_path));
}

std::string report_json(const CorpusReport& report) {
  nlohmann::json j;
  j["ter"] = report.ter;
  j["bleu"] = report.bleu;
  j["sentences"] = report.sentences;
  j["edits"] = {{"insertions", report.totals.insertions},
                {"deletions", report.totals.deletions},
                {"substitutions", report.totals.substitutions},
                {"shifts", report.totals.shifts},
                {"ref_len", report.totals.ref_len}};
  return j.dump();
}

std::string report_table(const CorpusReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s\n%-10d %8.2f %8.2f\n", "sentences", "TER",
                "BLEU", report.sentences, report.ter, report.bleu);
  return buf;
}

}  // namespace ape

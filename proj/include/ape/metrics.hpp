#pragma once

// Case-sensitive TER (with greedy block shifts) and BLEU over
// whitespace-tokenized text. Tokens are compared byte-for-byte.

#include <string>
#include <vector>

namespace ape {

using Tokens = std::vector<std::string>;

Tokens split_tokens(const std::string& line);

struct EvalPair {
  Tokens hypothesis;
  Tokens reference;
};

// Minimal number of unit-cost insertions, deletions and substitutions
// turning hyp into ref.
int levenshtein(const Tokens& hyp, const Tokens& ref);

struct EditCounts {
  int insertions = 0;
  int deletions = 0;
  int substitutions = 0;
  int total() const { return insertions + deletions + substitutions; }
};

// Counts along one optimal alignment (matches/substitutions preferred, then
// deletions, then insertions when paths tie).
EditCounts edit_counts(const Tokens& hyp, const Tokens& ref);

struct TerOptions {
  int max_shift_span = 10;
  int max_shift_distance = 50;
};

struct TerBreakdown {
  int insertions = 0;
  int deletions = 0;
  int substitutions = 0;
  int shifts = 0;
  int ref_len = 0;
  double score = 0.0;  // (edits + shifts) / ref_len

  int edits() const { return insertions + deletions + substitutions + shifts; }
};

// Greedy shift search: while some block shift lowers edit distance + 1 below
// the current edit distance, apply the best one. Shifted spans must occur
// verbatim in the reference. Throws ContractError for an empty reference.
TerBreakdown ter(const Tokens& hyp, const Tokens& ref, const TerOptions& options = {});

// Corpus-level clipped n-gram statistics.
struct BleuStats {
  std::vector<long> matches;  // index n-1
  std::vector<long> totals;
  long hyp_len = 0;
  long ref_len = 0;
};

BleuStats bleu_stats(const std::vector<EvalPair>& pairs, int max_n = 4);
// 0..100; 0 when any corpus-level precision is zero. Orders for which the
// hypotheses contain no n-grams are skipped. Throws ContractError on an empty
// pair list.
double corpus_bleu(const std::vector<EvalPair>& pairs, int max_n = 4);
// Diagnostic sentence BLEU with add-one smoothing for n >= 2.
double sentence_bleu(const Tokens& hyp, const Tokens& ref, int max_n = 4);

struct CorpusReport {
  double ter = 0.0;   // percent, micro-averaged
  double bleu = 0.0;  // percent
  int sentences = 0;
  TerBreakdown totals;
};

// Throws InputError when the line counts differ or a reference is empty.
CorpusReport evaluate_corpus(const std::vector<std::string>& hyp_lines,
                             const std::vector<std::string>& ref_lines);
CorpusReport evaluate_files(const std::string& hyp_path, const std::string& ref_path);

// {"ter": .., "bleu": .., "sentences": ..}
std::string report_json(const CorpusReport& report);
std::string report_table(const CorpusReport& report);

}  // namespace ape

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ape/model.hpp"
#include "ape/vocab.hpp"

namespace ape {

// pe is stored bare; BOS/EOS are attached when batches are built.
struct Triplet {
  TokenSequence src;
  TokenSequence mt;
  TokenSequence pe;
};

struct CorpusHandle {
  std::string src_path;
  std::string mt_path;
  std::string pe_path;
  std::size_t lines = 0;
  Vocabulary vocab;

  // Throws InputError naming the three line counts when they differ.
  static CorpusHandle open(std::string src_path, std::string mt_path, std::string pe_path,
                           Vocabulary vocab);
};

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t skipped_blank = 0;
};

std::vector<Triplet> make_triplets(const std::vector<std::string>& src,
                                   const std::vector<std::string>& mt,
                                   const std::vector<std::string>& pe, const Vocabulary& vocab,
                                   LoadReport* report = nullptr);
std::vector<Triplet> load_triplets(const CorpusHandle& handle, LoadReport* report = nullptr);

enum class SyntheticTask { copy, corrupt, disambiguate };
SyntheticTask parse_task(const std::string& name);
std::string to_string(SyntheticTask task);

struct SyntheticOptions {
  int min_len = 4;        // filler / sentence length range, inclusive
  int max_len = 10;
  int alphabet = 20;      // symbols per language
  double substitution_rate = 0.2;  // corrupt task
};

// Plain-text triplets, one sentence per entry.
struct SyntheticCorpus {
  std::vector<std::string> src;
  std::vector<std::string> mt;
  std::vector<std::string> pe;
};

// Target-language symbols are t0..t{k-1}, source-language symbols s0..s{k-1}.
// The disambiguation task uses source markers MA/MB, the ambiguous mt token X
// and its two corrections XA/XB.
inline constexpr const char* kMarkerA = "MA";
inline constexpr const char* kMarkerB = "MB";
inline constexpr const char* kAmbiguous = "X";
inline constexpr const char* kResolvedA = "XA";
inline constexpr const char* kResolvedB = "XB";

SyntheticCorpus gen_synthetic(SyntheticTask task, int n, const SyntheticOptions& options,
                              std::uint64_t seed);
// Writes <dir>/src.txt, <dir>/mt.txt, <dir>/pe.txt (creating dir).
void write_corpus(const SyntheticCorpus& corpus, const std::string& dir);

}  // namespace ape

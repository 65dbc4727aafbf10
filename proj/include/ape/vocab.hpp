#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ape/metrics.hpp"

namespace ape {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kBosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";

// One vocabulary shared by src, mt and pe. Ids 0..3 are PAD, UNK, BOS, EOS.
class Vocabulary {
 public:
  Vocabulary();

  // Frequency-ranked union of the tokens in `lines` (ties broken
  // lexicographically). Tokens below min_freq are left out; max_size counts
  // the four reserved entries. Throws InputError when no token is found.
  static Vocabulary build(const std::vector<std::string>& lines, int max_size, int min_freq = 1);
  static Vocabulary build_from_files(const std::vector<std::string>& files, int max_size,
                                     int min_freq = 1);
  // Full ordered token list including the reserved entries.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  // One token per line, reserved entries first.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  // UNK for unknown tokens.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  // Throws VocabularyError for an id outside the vocabulary.
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Tokens& tokens) const;
  // Reserved PAD/BOS/EOS are dropped when strip_special is set; UNK is kept.
  Tokens decode(std::span<const int> ids, bool strip_special = true) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace ape

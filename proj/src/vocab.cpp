#include "ape/vocab.hpp"

#include <algorithm>
#include <map>

#include "ape/errors.hpp"
#include "ape/io.hpp"
#include "ape/model.hpp"

namespace ape {

Vocabulary::Vocabulary() {
  for (const char* r : {kPadToken, kUnkToken, kBosToken, kEosToken}) {
    index_.emplace(r, static_cast<int>(tokens_.size()));
    tokens_.emplace_back(r);
  }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  const std::vector<std::string> reserved{kPadToken, kUnkToken, kBosToken, kEosToken};
  if (tokens.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw InputError("vocabulary must start with " + reserved[0] + " " + reserved[1] + " " +
                     reserved[2] + " " + reserved[3]);
  }
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (const auto& t : tokens) {
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos) {
      throw InputError("vocabulary token '" + t + "' is empty or contains whitespace");
    }
    if (!v.index_.emplace(t, static_cast<int>(v.tokens_.size())).second) {
      throw InputError("vocabulary token '" + t + "' appears twice");
    }
    v.tokens_.push_back(t);
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, int max_size, int min_freq) {
  if (max_size < token::kNumReserved + 1) throw ConfigError("vocab: max_size must be >= 5");
  std::map<std::string, long> freq;
  for (const auto& line : lines)
    for (const auto& t : split_tokens(line)) ++freq[t];
  for (const char* r : {kPadToken, kUnkToken, kBosToken, kEosToken}) freq.erase(r);
  if (freq.empty()) throw InputError("vocab: corpus contains no tokens");
  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  // std::map iteration is already lexicographic; stable sort keeps that order on ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{kPadToken, kUnkToken, kBosToken, kEosToken};
  for (const auto& [tok, count] : ranked) {
    if (static_cast<int>(tokens.size()) >= max_size) break;
    if (count < min_freq) break;
    tokens.push_back(tok);
  }
  return from_tokens(tokens);
}

Vocabulary Vocabulary::build_from_files(const std::vector<std::string>& files, int max_size,
                                        int min_freq) {
  std::vector<std::string> lines;
  for (const auto& f : files) {
    auto l = read_lines(f);
    lines.insert(lines.end(), l.begin(), l.end());
  }
  return build(lines, max_size, min_freq);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::vector<std::string> tokens;
  for (auto& line : read_lines(path)) {
    if (!line.empty()) tokens.push_back(std::move(line));
  }
  return from_tokens(tokens);
}

void Vocabulary::save(const std::string& path) const { write_lines(path, tokens_); }

int Vocabulary::id(const std::string& tok) const {
  const auto it = index_.find(tok);
  return it == index_.end() ? token::kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& toks) const {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids, bool strip_special) const {
  Tokens out;
  for (int i : ids) {
    if (strip_special && (i == token::kPad || i == token::kBos || i == token::kEos)) continue;
    out.push_back(token(i));
  }
  return out;
}

}  // namespace ape

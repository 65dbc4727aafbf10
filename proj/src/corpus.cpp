#include "ape/corpus.hpp"

#include <filesystem>
#include <iostream>

#include "ape/errors.hpp"
#include "ape/io.hpp"
#include "ape/random.hpp"

namespace ape {

CorpusHandle CorpusHandle::open(std::string src_path, std::string mt_path, std::string pe_path,
                                Vocabulary vocab) {
  const auto ns = read_lines(src_path).size();
  const auto nm = read_lines(mt_path).size();
  const auto np = read_lines(pe_path).size();
  if (ns != nm || nm != np) {
    throw InputError("corpus files differ in line count: src " + std::to_string(ns) + ", mt " +
                     std::to_string(nm) + ", pe " + std::to_string(np));
  }
  return {std::move(src_path), std::move(mt_path), std::move(pe_path), ns, std::move(vocab)};
}

std::vector<Triplet> make_triplets(const std::vector<std::string>& src,
                                   const std::vector<std::string>& mt,
                                   const std::vector<std::string>& pe, const Vocabulary& vocab,
                                   LoadReport* report) {
  if (src.size() != mt.size() || mt.size() != pe.size()) {
    throw InputError("corpus files differ in line count: src " + std::to_string(src.size()) +
                     ", mt " + std::to_string(mt.size()) + ", pe " + std::to_string(pe.size()));
  }
  LoadReport local;
  std::vector<Triplet> out;
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    Triplet t;
    t.src = {vocab.encode(split_tokens(src[i])), Role::src};
    t.mt = {vocab.encode(split_tokens(mt[i])), Role::mt};
    t.pe = {vocab.encode(split_tokens(pe[i])), Role::pe};
    if (t.src.empty() || t.mt.empty() || t.pe.empty()) {
      ++local.skipped_blank;
      continue;
    }
    out.push_back(std::move(t));
  }
  local.loaded = out.size();
  if (local.skipped_blank > 0) {
    std::cerr << "warning: skipped " << local.skipped_blank << " triplet(s) with a blank side\n";
  }
  if (report) *report = local;
  return out;
}

std::vector<Triplet> load_triplets(const CorpusHandle& handle, LoadReport* report) {
  return make_triplets(read_lines(handle.src_path), read_lines(handle.mt_path),
                       read_lines(handle.pe_path), handle.vocab, report);
}

SyntheticTask parse_task(const std::string& name) {
  if (name == "copy") return SyntheticTask::copy;
  if (name == "corrupt") return SyntheticTask::corrupt;
  if (name == "disambiguate") return SyntheticTask::disambiguate;
  throw ConfigError("unknown synthetic task '" + name + "' (expected copy, corrupt or disambiguate)");
}

std::string to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::copy: return "copy";
    case SyntheticTask::corrupt: return "corrupt";
    case SyntheticTask::disambiguate: return "disambiguate";
  }
  return "unknown";
}

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

std::vector<int> random_symbols(Rng& rng, const SyntheticOptions& o) {
  const auto len = rng.integer(o.min_len, o.max_len);
  std::vector<int> out(static_cast<std::size_t>(len));
  for (auto& s : out) s = static_cast<int>(rng.integer(0, o.alphabet - 1));
  return out;
}

std::vector<std::string> spell(const std::vector<int>& symbols, char prefix) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (int s : symbols) out.push_back(std::string(1, prefix) + std::to_string(s));
  return out;
}

}  // namespace

SyntheticCorpus gen_synthetic(SyntheticTask task, int n, const SyntheticOptions& o,
                              std::uint64_t seed) {
  if (n < 1) throw ConfigError("gen: n must be >= 1");
  if (o.min_len < 1 || o.max_len < o.min_len) throw ConfigError("gen: invalid length range");
  if (o.alphabet < 2) throw ConfigError("gen: alphabet must have at least 2 symbols");
  if (o.substitution_rate < 0.0 || o.substitution_rate > 1.0) {
    throw ConfigError("gen: substitution rate must lie in [0, 1]");
  }
  Rng rng(seed);
  SyntheticCorpus c;
  for (int i = 0; i < n; ++i) {
    switch (task) {
      case SyntheticTask::copy: {
        const auto mt = spell(random_symbols(rng, o), 't');
        const auto src = spell(random_symbols(rng, o), 's');
        c.src.push_back(join(src));
        c.mt.push_back(join(mt));
        c.pe.push_back(join(mt));
        break;
      }
      case SyntheticTask::corrupt: {
        const auto clean = random_symbols(rng, o);
        auto noisy = clean;
        for (auto& s : noisy) {
          if (rng.bernoulli(o.substitution_rate)) {
            // Uniform over the other symbols, so every substitution is a real edit.
            const int shift = static_cast<int>(rng.integer(1, o.alphabet - 1));
            s = (s + shift) % o.alphabet;
          }
        }
        c.src.push_back(join(spell(clean, 's')));
        c.mt.push_back(join(spell(noisy, 't')));
        c.pe.push_back(join(spell(clean, 't')));
        break;
      }
      case SyntheticTask::disambiguate: {
        const auto filler = random_symbols(rng, o);
        const bool class_a = rng.bernoulli(0.5);
        auto src = spell(filler, 's');
        auto mt = spell(filler, 't');
        const auto marker_pos = rng.integer(0, static_cast<std::int64_t>(src.size()));
        src.insert(src.begin() + marker_pos, class_a ? kMarkerA : kMarkerB);
        const auto x_pos = rng.integer(0, static_cast<std::int64_t>(mt.size()));
        mt.insert(mt.begin() + x_pos, kAmbiguous);
        auto pe = mt;
        pe[static_cast<std::size_t>(x_pos)] = class_a ? kResolvedA : kResolvedB;
        c.src.push_back(join(src));
        c.mt.push_back(join(mt));
        c.pe.push_back(join(pe));
        break;
      }
    }
  }
  return c;
}

void write_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  write_lines((base / "src.txt").string(), corpus.src);
  write_lines((base / "mt.txt").string(), corpus.mt);
  write_lines((base / "pe.txt").string(), corpus.pe);
}

}  // namespace ape

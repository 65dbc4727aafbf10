#pragma once

#include <string>
#include <vector>

#include "ape/model.hpp"
#include "ape/vocab.hpp"

namespace ape {

// Which mt-encoder layers feed the map: the last one, the mean of all, or one index.
struct LayerSpec {
  enum class Kind { last, all_mean, index } kind = Kind::last;
  int index = 0;

  static LayerSpec parse(const std::string& text);  // "last", "all-mean", "<k>"
  std::string str() const;
};

// Mean of heads, or one head.
struct HeadAgg {
  enum class Kind { mean, index } kind = Kind::mean;
  int index = 0;

  static HeadAgg parse(const std::string& text);  // "mean", "<i>"
  std::string str() const;
};

// Row-stochastic |mt| x |src| matrix with the tokens that label it.
struct AttentionMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;
  std::vector<std::string> src_tokens;
  std::vector<std::string> mt_tokens;
  std::string layer_spec = "last";
  std::string head_agg = "mean";

  double at(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

// Aggregates mt_cross records. Only multi-source models carry them.
// Throws ConfigError for out-of-range layer/head indices.
AttentionMap aggregate_alignment(const AttentionRecords& records, const LayerSpec& layers,
                                 const HeadAgg& heads);

// Token labels come from `vocab` when given, otherwise the raw ids.
template <typename T>
AttentionMap extract_alignment(const Transformer<T>& model, const TokenSequence& x,
                               const TokenSequence& y, const LayerSpec& layers = {},
                               const HeadAgg& heads = {}, const Vocabulary* vocab = nullptr);

enum class HeatmapFormat { csv, pgm, svg };
HeatmapFormat parse_heatmap_format(const std::string& text);
std::string extension(HeatmapFormat format);

std::string heatmap_csv(const AttentionMap& map);
std::string heatmap_pgm(const AttentionMap& map);
std::string heatmap_svg(const AttentionMap& map);
void emit_heatmap(const AttentionMap& map, const std::string& path, HeatmapFormat format);

// Parses the csv layout written by heatmap_csv. Throws InputError.
AttentionMap parse_heatmap_csv(const std::string& text);
AttentionMap load_heatmap_csv(const std::string& path);

struct AlignmentComparison {
  double argmax_agreement = 0.0;
  double mean_tv_distance = 0.0;
};

// Throws InputError when the shapes differ.
AlignmentComparison compare_alignment(const AttentionMap& map, const AttentionMap& external);

}  // namespace ape

#include "ape/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ape/errors.hpp"
#include "ape/io.hpp"

namespace ape {

namespace {

int parse_index(const std::string& text, const char* what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || used == 0 || v < 0) {
    throw ConfigError(std::string(what) + ": expected a non-negative index, got '" + text + "'");
  }
  return v;
}

std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

int gray(double w) { return static_cast<int>(std::lround(std::clamp(w, 0.0, 1.0) * 255.0)); }

// Splits one csv record, honoring double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw InputError("csv: unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::size_t argmax_row(const AttentionMap& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.cols; ++c)
    if (m.at(r, c) > m.at(r, best)) best = c;
  return best;
}

}  // namespace

LayerSpec LayerSpec::parse(const std::string& text) {
  if (text == "last") return {Kind::last, 0};
  if (text == "all-mean" || text == "all_mean") return {Kind::all_mean, 0};
  return {Kind::index, parse_index(text, "layer_spec")};
}

std::string LayerSpec::str() const {
  switch (kind) {
    case Kind::last: return "last";
    case Kind::all_mean: return "all-mean";
    case Kind::index: return std::to_string(index);
  }
  return "last";
}

HeadAgg HeadAgg::parse(const std::string& text) {
  if (text == "mean") return {Kind::mean, 0};
  return {Kind::index, parse_index(text, "head_agg")};
}

std::string HeadAgg::str() const { return kind == Kind::mean ? "mean" : std::to_string(index); }

AttentionMap aggregate_alignment(const AttentionRecords& records, const LayerSpec& layers,
                                 const HeadAgg& heads) {
  std::vector<const AttentionRecord*> cross;
  for (const auto& r : records)
    if (r.site == AttentionSite::mt_cross) cross.push_back(&r);
  if (cross.empty()) throw ConfigError("alignment: the model has no mt cross-attention (multi mode only)");
  std::sort(cross.begin(), cross.end(),
            [](const AttentionRecord* a, const AttentionRecord* b) { return a->layer < b->layer; });

  std::vector<const AttentionRecord*> chosen;
  switch (layers.kind) {
    case LayerSpec::Kind::last: chosen.push_back(cross.back()); break;
    case LayerSpec::Kind::all_mean: chosen = cross; break;
    case LayerSpec::Kind::index:
      if (layers.index >= static_cast<int>(cross.size())) {
        throw ConfigError("alignment: layer " + std::to_string(layers.index) + " out of range (" +
                          std::to_string(cross.size()) + " layers)");
      }
      chosen.push_back(cross[static_cast<std::size_t>(layers.index)]);
      break;
  }

  AttentionMap m;
  m.rows = chosen.front()->rows;
  m.cols = chosen.front()->cols;
  m.weights.assign(m.rows * m.cols, 0.0);
  m.layer_spec = layers.str();
  m.head_agg = heads.str();
  for (const auto* rec : chosen) {
    const std::size_t n_heads = rec->heads.size();
    if (heads.kind == HeadAgg::Kind::index && heads.index >= static_cast<int>(n_heads)) {
      throw ConfigError("alignment: head " + std::to_string(heads.index) + " out of range (" +
                        std::to_string(n_heads) + " heads)");
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        double w = 0.0;
        if (heads.kind == HeadAgg::Kind::mean) {
          for (std::size_t h = 0; h < n_heads; ++h) w += rec->weight(h, r, c);
          w /= static_cast<double>(n_heads);
        } else {
          w = rec->weight(static_cast<std::size_t>(heads.index), r, c);
        }
        m.weights[r * m.cols + c] += w / static_cast<double>(chosen.size());
      }
    }
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += m.weights[r * m.cols + c];
    if (s > 0.0)
      for (std::size_t c = 0; c < m.cols; ++c) m.weights[r * m.cols + c] /= s;
  }
  return m;
}

template <typename T>
AttentionMap extract_alignment(const Transformer<T>& model, const TokenSequence& x,
                               const TokenSequence& y, const LayerSpec& layers,
                               const HeadAgg& heads, const Vocabulary* vocab) {
  if (model.config().mode != ModelMode::multi) {
    throw ConfigError("alignment: only the multi-source model has mt-to-src attention");
  }
  NoGradGuard no_grad;
  AttentionRecords records;
  ForwardContext ctx{false, nullptr, &records};
  model.encode(x, y, ctx);
  auto m = aggregate_alignment(records, layers, heads);
  auto label = [&](int id) { return vocab ? vocab->token(id) : std::to_string(id); };
  for (int id : x.ids) m.src_tokens.push_back(label(id));
  for (int id : y.ids) m.mt_tokens.push_back(label(id));
  return m;
}

template AttentionMap extract_alignment(const Transformer<float>&, const TokenSequence&,
                                        const TokenSequence&, const LayerSpec&, const HeadAgg&,
                                        const Vocabulary*);
template AttentionMap extract_alignment(const Transformer<double>&, const TokenSequence&,
                                        const TokenSequence&, const LayerSpec&, const HeadAgg&,
                                        const Vocabulary*);

HeatmapFormat parse_heatmap_format(const std::string& text) {
  if (text == "csv") return HeatmapFormat::csv;
  if (text == "pgm") return HeatmapFormat::pgm;
  if (text == "svg") return HeatmapFormat::svg;
  throw ConfigError("unknown heatmap format '" + text + "' (expected csv, pgm or svg)");
}

std::string extension(HeatmapFormat format) {
  switch (format) {
    case HeatmapFormat::csv: return "csv";
    case HeatmapFormat::pgm: return "pgm";
    case HeatmapFormat::svg: return "svg";
  }
  return "csv";
}

std::string heatmap_csv(const AttentionMap& map) {
  std::string out = "\"\"";
  for (std::size_t c = 0; c < map.cols; ++c)
    out += "," + quote(c < map.src_tokens.size() ? map.src_tokens[c] : std::to_string(c));
  out += '\n';
  for (std::size_t r = 0; r < map.rows; ++r) {
    out += quote(r < map.mt_tokens.size() ? map.mt_tokens[r] : std::to_string(r));
    for (std::size_t c = 0; c < map.cols; ++c) out += "," + cell(map.at(r, c));
    out += '\n';
  }
  return out;
}

std::string heatmap_pgm(const AttentionMap& map) {
  std::ostringstream os;
  os << "P2\n" << map.cols << ' ' << map.rows << "\n255\n";
  for (std::size_t r = 0; r < map.rows; ++r) {
    for (std::size_t c = 0; c < map.cols; ++c) os << (c ? " " : "") << gray(map.at(r, c));
    os << '\n';
  }
  return os.str();
}

std::string heatmap_svg(const AttentionMap& map) {
  constexpr int kCell = 24, kLabel = 80;
  const int width = kLabel + kCell * static_cast<int>(map.cols);
  const int height = kLabel + kCell * static_cast<int>(map.rows);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"monospace\" font-size=\"10\">\n";
  os << "<!-- layer=" << xml_escape(map.layer_spec) << " heads=" << xml_escape(map.head_agg)
     << " -->\n";
  for (std::size_t c = 0; c < map.cols; ++c) {
    const int x = kLabel + kCell * static_cast<int>(c) + kCell / 2;
    os << "<text x=\"" << x << "\" y=\"" << kLabel - 4 << "\" transform=\"rotate(-60 " << x << ' '
       << kLabel - 4 << ")\">"
       << xml_escape(c < map.src_tokens.size() ? map.src_tokens[c] : std::to_string(c))
       << "</text>\n";
  }
  for (std::size_t r = 0; r < map.rows; ++r) {
    const int y = kLabel + kCell * static_cast<int>(r);
    os << "<text x=\"" << kLabel - 4 << "\" y=\"" << y + kCell / 2 + 3
       << "\" text-anchor=\"end\">"
       << xml_escape(r < map.mt_tokens.size() ? map.mt_tokens[r] : std::to_string(r))
       << "</text>\n";
    for (std::size_t c = 0; c < map.cols; ++c) {
      const int g = gray(map.at(r, c));
      os << "<rect x=\"" << kLabel + kCell * static_cast<int>(c) << "\" y=\"" << y
         << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\"rgb(" << g << ','
         << g << ',' << g << ")\"><title>" << cell(map.at(r, c)) << "</title></rect>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void emit_heatmap(const AttentionMap& map, const std::string& path, HeatmapFormat format) {
  switch (format) {
    case HeatmapFormat::csv: write_text(path, heatmap_csv(map)); break;
    case HeatmapFormat::pgm: write_text(path, heatmap_pgm(map)); break;
    case HeatmapFormat::svg: write_text(path, heatmap_svg(map)); break;
  }
}

AttentionMap parse_heatmap_csv(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw InputError("csv heatmap: empty input");
  AttentionMap m;
  auto header = split_csv(lines[0]);
  m.src_tokens.assign(header.begin() + 1, header.end());
  m.cols = m.src_tokens.size();
  m.rows = lines.size() - 1;
  if (m.cols == 0 || m.rows == 0) throw InputError("csv heatmap: no cells");
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto fields = split_csv(lines[r]);
    if (fields.size() != m.cols + 1) {
      throw InputError("csv heatmap: row " + std::to_string(r) + " has " +
                       std::to_string(fields.size() - 1) + " cells, expected " +
                       std::to_string(m.cols));
    }
    m.mt_tokens.push_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      try {
        std::size_t used = 0;
        m.weights.push_back(std::stod(fields[c], &used));
        if (used != fields[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InputError("csv heatmap: bad number '" + fields[c] + "'");
      }
    }
  }
  return m;
}

AttentionMap load_heatmap_csv(const std::string& path) { return parse_heatmap_csv(read_text(path)); }

AlignmentComparison compare_alignment(const AttentionMap& map, const AttentionMap& external) {
  if (map.rows != external.rows || map.cols != external.cols) {
    throw InputError("compare_alignment: shape " + std::to_string(map.rows) + "x" +
                     std::to_string(map.cols) + " vs " + std::to_string(external.rows) + "x" +
                     std::to_string(external.cols));
  }
  if (map.rows == 0) throw InputError("compare_alignment: empty maps");
  AlignmentComparison out;
  for (std::size_t r = 0; r < map.rows; ++r) {
    if (argmax_row(map, r) == argmax_row(external, r)) out.argmax_agreement += 1.0;
    double tv = 0.0;
    for (std::size_t c = 0; c < map.cols; ++c) tv += std::abs(map.at(r, c) - external.at(r, c));
    out.mean_tv_distance += 0.5 * tv;
  }
  out.argmax_agreement /= static_cast<double>(map.rows);
  out.mean_tv_distance /= static_cast<double>(map.rows);
  return out;
}

}  // namespace ape

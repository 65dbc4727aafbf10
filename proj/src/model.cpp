#include "ape/model.hpp"

#include <cmath>

#include "ape/errors.hpp"

namespace ape {

std::string to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::multi: return "multi";
    case ModelMode::src_to_pe: return "src2pe";
    case ModelMode::mt_to_pe: return "mt2pe";
  }
  return "unknown";
}

ModelMode parse_mode(const std::string& text) {
  if (text == "multi") return ModelMode::multi;
  if (text == "src2pe" || text == "src->pe") return ModelMode::src_to_pe;
  if (text == "mt2pe" || text == "mt->pe") return ModelMode::mt_to_pe;
  throw ConfigError("unknown model mode '" + text + "' (expected multi, src2pe or mt2pe)");
}

std::string to_string(Precision precision) {
  return precision == Precision::f32 ? "float32" : "float64";
}

Precision parse_precision(const std::string& text) {
  if (text == "float32" || text == "f32") return Precision::f32;
  if (text == "float64" || text == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + text + "' (expected float32 or float64)");
}

std::string to_string(AttentionSite site) {
  switch (site) {
    case AttentionSite::src_self: return "src_self";
    case AttentionSite::mt_self: return "mt_self";
    case AttentionSite::mt_cross: return "mt_cross";
    case AttentionSite::dec_self: return "dec_self";
    case AttentionSite::dec_cross: return "dec_cross";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_model < 2) fail("d_model must be >= 2");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (n_layers < 0) fail("n_layers must be >= 0");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (vocab_size < token::kNumReserved + 1) fail("vocab_size must be >= 5");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
  if (max_len < 1) fail("max_len must be >= 1");
}

ModelConfig ModelConfig::desk(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::base(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.n_layers = 6;
  c.d_model = 512;
  c.n_heads = 8;
  c.d_ff = 2048;
  return c;
}

std::int64_t param_count(const ModelConfig& c) {
  const std::int64_t d = c.d_model, ff = c.d_ff, v = c.vocab_size, l = c.n_layers;
  const std::int64_t attn = 4 * d * d;
  const std::int64_t norm = 2 * d;
  const std::int64_t feed = d * ff + ff + ff * d + d;
  const std::int64_t enc_layer = attn + norm + feed + norm;
  const std::int64_t joint_layer = 2 * attn + 3 * norm + feed;
  switch (c.mode) {
    case ModelMode::multi: return v * d + l * (enc_layer + 2 * joint_layer);
    case ModelMode::src_to_pe:
    case ModelMode::mt_to_pe: return v * d + l * (enc_layer + joint_layer);
  }
  return 0;
}

AttentionMask AttentionMask::key_padding(std::size_t query_rows, const std::vector<bool>& key_pad) {
  AttentionMask m;
  m.rows = query_rows;
  m.cols = key_pad.size();
  m.blocked.assign(m.rows * m.cols, 0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m.blocked[r * m.cols + c] = key_pad[c] ? 1 : 0;
  return m;
}

AttentionMask AttentionMask::causal(std::size_t length, const std::vector<bool>& key_pad) {
  if (key_pad.size() != length) throw DimensionError("causal mask: padding length mismatch");
  AttentionMask m = key_padding(length, key_pad);
  for (std::size_t r = 0; r < length; ++r)
    for (std::size_t c = r + 1; c < length; ++c) m.blocked[r * length + c] = 1;
  return m;
}

double positional_encoding(std::size_t position, std::size_t dim, std::size_t d_model) {
  const double exponent = static_cast<double>(dim - dim % 2) / static_cast<double>(d_model);
  const double angle = static_cast<double>(position) / std::pow(10000.0, exponent);
  return dim % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

template <typename T>
AttentionResult<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& k_in,
                                        const Tensor<T>& v_in, const AttentionParams<T>& params,
                                        const AttentionMask* mask) {
  if (k_in.rows() != v_in.rows()) {
    throw DimensionError("multi_head_attention: keys " + shape_str(k_in.shape()) +
                         " and values " + shape_str(v_in.shape()) + " differ in rows");
  }
  const std::size_t tq = q_in.rows(), tk = k_in.rows();
  Tensor<T> additive;
  if (mask != nullptr) {
    if (mask->rows != tq || mask->cols != tk) {
      throw DimensionError("multi_head_attention: mask is " + std::to_string(mask->rows) + "x" +
                           std::to_string(mask->cols) + ", attention is " + std::to_string(tq) +
                           "x" + std::to_string(tk));
    }
    std::vector<T> bias(tq * tk, T(0));
    for (std::size_t i = 0; i < bias.size(); ++i)
      if (mask->blocked[i]) bias[i] = T(kMaskedLogit);
    additive = Tensor<T>::from({tq, tk}, std::move(bias));
  }
  const std::size_t heads = params.wq.size();
  const T inv_sqrt_dk = T(1.0 / std::sqrt(static_cast<double>(params.wq.front().cols())));
  AttentionResult<T> result;
  std::vector<Tensor<T>> contexts;
  contexts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto q = matmul(q_in, params.wq[h]);
    auto k = matmul(k_in, params.wk[h]);
    auto v = matmul(v_in, params.wv[h]);
    auto scores = scale(matmul_bt(q, k), inv_sqrt_dk);
    if (additive.defined()) scores = add(scores, additive);
    auto weights = softmax_rows(scores);
    result.weights.emplace_back(weights.data().begin(), weights.data().end());
    contexts.push_back(matmul(weights, v));
  }
  auto joined = heads == 1 ? contexts.front() : concat_cols(contexts);
  result.output = matmul(joined, params.wo);
  return result;
}

template <typename T>
Tensor<T> sublayer(const Tensor<T>& h, const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                   const LayerNormParams<T>& norm, double dropout_p, ForwardContext& ctx) {
  auto out = fn(h);
  if (out.shape() != h.shape()) {
    throw ContractError("sublayer: function changed shape " + shape_str(h.shape()) + " -> " +
                        shape_str(out.shape()));
  }
  out = dropout(out, dropout_p, ctx.train, ctx.rng);
  return layer_norm(add(h, out), norm.gain, norm.bias, T(kLayerNormEps));
}

namespace {

template <typename T>
Tensor<T> xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> values(fan_in * fan_out);
  for (auto& v : values) v = T(rng.uniform(-a, a));
  return Tensor<T>::from({fan_in, fan_out}, std::move(values), true);
}

template <typename T>
AttentionParams<T> init_attention(const ModelConfig& c, Rng& rng) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto dk = static_cast<std::size_t>(c.d_k());
  AttentionParams<T> p;
  for (int h = 0; h < c.n_heads; ++h) p.wq.push_back(xavier<T>(d, dk, rng));
  for (int h = 0; h < c.n_heads; ++h) p.wk.push_back(xavier<T>(d, dk, rng));
  for (int h = 0; h < c.n_heads; ++h) p.wv.push_back(xavier<T>(d, dk, rng));
  p.wo = xavier<T>(dk * static_cast<std::size_t>(c.n_heads), d, rng);
  return p;
}

template <typename T>
LayerNormParams<T> init_norm(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  return {Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
}

template <typename T>
FeedForwardParams<T> init_ff(const ModelConfig& c, Rng& rng) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  FeedForwardParams<T> p;
  p.w1 = xavier<T>(d, ff, rng);
  p.b1 = Tensor<T>::zeros({ff}, true);
  p.w2 = xavier<T>(ff, d, rng);
  p.b2 = Tensor<T>::zeros({d}, true);
  return p;
}

template <typename T>
EncoderLayerParams<T> init_encoder_layer(const ModelConfig& c, Rng& rng) {
  EncoderLayerParams<T> l;
  l.self_attn = init_attention<T>(c, rng);
  l.ln_self = init_norm<T>(c);
  l.ff = init_ff<T>(c, rng);
  l.ln_ff = init_norm<T>(c);
  return l;
}

template <typename T>
JointLayerParams<T> init_joint_layer(const ModelConfig& c, Rng& rng) {
  JointLayerParams<T> l;
  l.self_attn = init_attention<T>(c, rng);
  l.ln_self = init_norm<T>(c);
  l.cross_attn = init_attention<T>(c, rng);
  l.ln_cross = init_norm<T>(c);
  l.ff = init_ff<T>(c, rng);
  l.ln_ff = init_norm<T>(c);
  return l;
}

template <typename T>
using Named = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
void name_attention(Named<T>& out, const std::string& prefix, const AttentionParams<T>& a) {
  for (std::size_t h = 0; h < a.wq.size(); ++h) out.emplace_back(prefix + ".wq." + std::to_string(h), a.wq[h]);
  for (std::size_t h = 0; h < a.wk.size(); ++h) out.emplace_back(prefix + ".wk." + std::to_string(h), a.wk[h]);
  for (std::size_t h = 0; h < a.wv.size(); ++h) out.emplace_back(prefix + ".wv." + std::to_string(h), a.wv[h]);
  out.emplace_back(prefix + ".wo", a.wo);
}

template <typename T>
void name_norm(Named<T>& out, const std::string& prefix, const LayerNormParams<T>& n) {
  out.emplace_back(prefix + ".gain", n.gain);
  out.emplace_back(prefix + ".bias", n.bias);
}

template <typename T>
void name_ff(Named<T>& out, const std::string& prefix, const FeedForwardParams<T>& f) {
  out.emplace_back(prefix + ".w1", f.w1);
  out.emplace_back(prefix + ".b1", f.b1);
  out.emplace_back(prefix + ".w2", f.w2);
  out.emplace_back(prefix + ".b2", f.b2);
}

template <typename T>
void name_encoder(Named<T>& out, const std::string& prefix, const EncoderLayerParams<T>& l) {
  name_attention(out, prefix + ".self_attn", l.self_attn);
  name_norm(out, prefix + ".ln_self", l.ln_self);
  name_ff(out, prefix + ".ff", l.ff);
  name_norm(out, prefix + ".ln_ff", l.ln_ff);
}

template <typename T>
void name_joint(Named<T>& out, const std::string& prefix, const JointLayerParams<T>& l) {
  name_attention(out, prefix + ".self_attn", l.self_attn);
  name_norm(out, prefix + ".ln_self", l.ln_self);
  name_attention(out, prefix + ".cross_attn", l.cross_attn);
  name_norm(out, prefix + ".ln_cross", l.ln_cross);
  name_ff(out, prefix + ".ff", l.ff);
  name_norm(out, prefix + ".ln_ff", l.ln_ff);
}

std::vector<bool> pad_flags(const TokenSequence& seq) {
  std::vector<bool> flags(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) flags[i] = seq.ids[i] == token::kPad;
  return flags;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  ModelParams<T> p;
  std::vector<T> table(v * d);
  const double stddev = std::pow(static_cast<double>(c.d_model), -0.5);
  for (auto& x : table) x = T(rng.normal(0.0, stddev));
  p.embedding = Tensor<T>::from({v, d}, std::move(table), true);
  for (int l = 0; l < c.n_layers; ++l) {
    if (c.mode != ModelMode::mt_to_pe) p.src_layers.push_back(init_encoder_layer<T>(c, rng));
  }
  for (int l = 0; l < c.n_layers; ++l) {
    if (c.mode == ModelMode::multi) p.mt_layers.push_back(init_joint_layer<T>(c, rng));
    if (c.mode == ModelMode::mt_to_pe) p.mt_plain_layers.push_back(init_encoder_layer<T>(c, rng));
  }
  for (int l = 0; l < c.n_layers; ++l) p.dec_layers.push_back(init_joint_layer<T>(c, rng));
  return p;
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named() const {
  Named<T> out;
  out.emplace_back("embedding", embedding);
  for (std::size_t l = 0; l < src_layers.size(); ++l) name_encoder(out, "src." + std::to_string(l), src_layers[l]);
  for (std::size_t l = 0; l < mt_layers.size(); ++l) name_joint(out, "mt." + std::to_string(l), mt_layers[l]);
  for (std::size_t l = 0; l < mt_plain_layers.size(); ++l) name_encoder(out, "mt." + std::to_string(l), mt_plain_layers[l]);
  for (std::size_t l = 0; l < dec_layers.size(); ++l) name_joint(out, "dec." + std::to_string(l), dec_layers[l]);
  return out;
}

template <typename T>
Transformer<T>::Transformer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  params_ = init_params<T>(config_, seed);
}

template <typename T>
Transformer<T>::Transformer(ModelConfig config, ModelParams<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  // Compare the layout against a freshly initialized reference.
  const auto reference = init_params<T>(config_, 0).named();
  const auto actual = params_.named();
  if (reference.size() != actual.size()) {
    throw DimensionError("model parameters: expected " + std::to_string(reference.size()) +
                         " tensors, got " + std::to_string(actual.size()));
  }
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (reference[i].second.shape() != actual[i].second.shape()) {
      throw DimensionError("model parameter " + reference[i].first + ": expected shape " +
                           shape_str(reference[i].second.shape()) + ", got " +
                           shape_str(actual[i].second.shape()));
    }
  }
}

template <typename T>
std::vector<Tensor<T>> Transformer<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : params_.named()) out.push_back(t);
  return out;
}

template <typename T>
Transformer<T> Transformer<T>::clone() const {
  Transformer copy(config_, std::uint64_t{0});
  auto dst = copy.parameters();
  auto src = parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].data().begin());
  }
  return copy;
}

template <typename T>
HiddenStates<T> Transformer<T>::embed(const TokenSequence& seq, ForwardContext& ctx) const {
  if (seq.size() > static_cast<std::size_t>(config_.max_len)) {
    throw ContractError("embed: sequence of length " + std::to_string(seq.size()) +
                        " exceeds max_len " + std::to_string(config_.max_len));
  }
  const auto d = static_cast<std::size_t>(config_.d_model);
  auto rows = embedding_lookup(params_.embedding, std::span<const int>(seq.ids));
  std::vector<T> pe(seq.size() * d);
  for (std::size_t pos = 0; pos < seq.size(); ++pos)
    for (std::size_t j = 0; j < d; ++j) pe[pos * d + j] = T(positional_encoding(pos, j, d));
  auto h = add(scale(rows, T(std::sqrt(static_cast<double>(d)))),
               Tensor<T>::from({seq.size(), d}, std::move(pe)));
  h = dropout(h, config_.dropout, ctx.train, ctx.rng);
  return {h, Origin::embedded, pad_flags(seq)};
}

template <typename T>
Tensor<T> Transformer<T>::feed_forward(const FeedForwardParams<T>& ff, const Tensor<T>& h) const {
  return add_bias(matmul(relu(add_bias(matmul(h, ff.w1), ff.b1)), ff.w2), ff.b2);
}

namespace {

void record(ForwardContext& ctx, AttentionSite site, int layer, std::size_t rows, std::size_t cols,
            std::vector<std::vector<double>> weights) {
  if (ctx.records == nullptr) return;
  ctx.records->push_back({site, layer, rows, cols, std::move(weights)});
}

}  // namespace

template <typename T>
Tensor<T> Transformer<T>::run_encoder_layer(const EncoderLayerParams<T>& layer, const Tensor<T>& h,
                                            const AttentionMask& mask, AttentionSite site,
                                            int index, ForwardContext& ctx) const {
  auto attended = sublayer<T>(
      h,
      [&](const Tensor<T>& x) {
        auto r = multi_head_attention(x, x, x, layer.self_attn, &mask);
        record(ctx, site, index, x.rows(), x.rows(), std::move(r.weights));
        return r.output;
      },
      layer.ln_self, config_.dropout, ctx);
  return sublayer<T>(
      attended, [&](const Tensor<T>& x) { return feed_forward(layer.ff, x); }, layer.ln_ff,
      config_.dropout, ctx);
}

template <typename T>
Tensor<T> Transformer<T>::run_joint_layer(const JointLayerParams<T>& layer, const Tensor<T>& h,
                                          const Tensor<T>& memory, const AttentionMask& self_mask,
                                          const AttentionMask& cross_mask, AttentionSite self_site,
                                          AttentionSite cross_site, int index,
                                          ForwardContext& ctx) const {
  auto attended = sublayer<T>(
      h,
      [&](const Tensor<T>& x) {
        auto r = multi_head_attention(x, x, x, layer.self_attn, &self_mask);
        record(ctx, self_site, index, x.rows(), x.rows(), std::move(r.weights));
        return r.output;
      },
      layer.ln_self, config_.dropout, ctx);
  auto joined = sublayer<T>(
      attended,
      [&](const Tensor<T>& x) {
        auto r = multi_head_attention(x, memory, memory, layer.cross_attn, &cross_mask);
        record(ctx, cross_site, index, x.rows(), memory.rows(), std::move(r.weights));
        return r.output;
      },
      layer.ln_cross, config_.dropout, ctx);
  return sublayer<T>(
      joined, [&](const Tensor<T>& x) { return feed_forward(layer.ff, x); }, layer.ln_ff,
      config_.dropout, ctx);
}

template <typename T>
HiddenStates<T> Transformer<T>::encode_src(const TokenSequence& x, ForwardContext& ctx) const {
  if (x.empty()) throw ContractError("encode_src: empty src sequence");
  if (config_.mode == ModelMode::mt_to_pe) {
    throw WiringError("encode_src: model mode " + to_string(config_.mode) + " has no src encoder");
  }
  auto states = embed(x, ctx);
  const auto mask = AttentionMask::key_padding(x.size(), states.padding);
  auto h = states.values;
  for (std::size_t l = 0; l < params_.src_layers.size(); ++l) {
    h = run_encoder_layer(params_.src_layers[l], h, mask, AttentionSite::src_self,
                          static_cast<int>(l), ctx);
  }
  return {h, Origin::src_encoded, std::move(states.padding)};
}

template <typename T>
HiddenStates<T> Transformer<T>::encode_mt(const HiddenStates<T>& x_prime, const TokenSequence& y,
                                          ForwardContext& ctx) const {
  if (x_prime.origin != Origin::src_encoded) {
    throw WiringError("encode_mt: expected src-encoder output as cross-attention memory");
  }
  if (config_.mode != ModelMode::multi) {
    throw WiringError("encode_mt: model mode " + to_string(config_.mode) +
                      " has no context-aware mt encoder");
  }
  if (y.empty()) throw ContractError("encode_mt: empty mt sequence");
  auto states = embed(y, ctx);
  const auto self_mask = AttentionMask::causal(y.size(), states.padding);
  const auto cross_mask = AttentionMask::key_padding(y.size(), x_prime.padding);
  auto h = states.values;
  for (std::size_t l = 0; l < params_.mt_layers.size(); ++l) {
    h = run_joint_layer(params_.mt_layers[l], h, x_prime.values, self_mask, cross_mask,
                        AttentionSite::mt_self, AttentionSite::mt_cross, static_cast<int>(l), ctx);
  }
  return {h, Origin::joint_encoded, std::move(states.padding)};
}

template <typename T>
HiddenStates<T> Transformer<T>::encode_mt_plain(const TokenSequence& y, ForwardContext& ctx) const {
  if (y.empty()) throw ContractError("encode: empty mt sequence");
  auto states = embed(y, ctx);
  const auto mask = AttentionMask::key_padding(y.size(), states.padding);
  auto h = states.values;
  for (std::size_t l = 0; l < params_.mt_plain_layers.size(); ++l) {
    h = run_encoder_layer(params_.mt_plain_layers[l], h, mask, AttentionSite::mt_self,
                          static_cast<int>(l), ctx);
  }
  return {h, Origin::joint_encoded, std::move(states.padding)};
}

template <typename T>
HiddenStates<T> Transformer<T>::encode(const TokenSequence& x, const TokenSequence& y,
                                       ForwardContext& ctx) const {
  switch (config_.mode) {
    case ModelMode::multi: return encode_mt(encode_src(x, ctx), y, ctx);
    case ModelMode::src_to_pe: {
      auto x_prime = encode_src(x, ctx);
      x_prime.origin = Origin::joint_encoded;
      return x_prime;
    }
    case ModelMode::mt_to_pe: return encode_mt_plain(y, ctx);
  }
  throw ContractError("encode: unknown mode");
}

template <typename T>
Tensor<T> Transformer<T>::decode(const TokenSequence& z_prefix, const HiddenStates<T>& memory,
                                 ForwardContext& ctx) const {
  if (memory.origin != Origin::joint_encoded) {
    throw WiringError("decode: expected the encoder's final output as memory");
  }
  if (z_prefix.empty() || z_prefix.ids.front() != token::kBos) {
    throw ContractError("decode: pe prefix must start with BOS");
  }
  auto states = embed(z_prefix, ctx);
  const auto self_mask = AttentionMask::causal(z_prefix.size(), states.padding);
  const auto cross_mask = AttentionMask::key_padding(z_prefix.size(), memory.padding);
  auto h = states.values;
  for (std::size_t l = 0; l < params_.dec_layers.size(); ++l) {
    h = run_joint_layer(params_.dec_layers[l], h, memory.values, self_mask, cross_mask,
                        AttentionSite::dec_self, AttentionSite::dec_cross, static_cast<int>(l),
                        ctx);
  }
  return matmul_bt(h, params_.embedding);
}

template <typename T>
Tensor<T> Transformer<T>::forward(const TokenSequence& x, const TokenSequence& y,
                                  const TokenSequence& z_in, ForwardContext& ctx) const {
  return decode(z_in, encode(x, y, ctx), ctx);
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template class Transformer<float>;
template class Transformer<double>;
template AttentionResult<float> multi_head_attention(const Tensor<float>&, const Tensor<float>&,
                                                     const Tensor<float>&,
                                                     const AttentionParams<float>&,
                                                     const AttentionMask*);
template AttentionResult<double> multi_head_attention(const Tensor<double>&, const Tensor<double>&,
                                                      const Tensor<double>&,
                                                      const AttentionParams<double>&,
                                                      const AttentionMask*);
template Tensor<float> sublayer(const Tensor<float>&,
                                const std::function<Tensor<float>(const Tensor<float>&)>&,
                                const LayerNormParams<float>&, double, ForwardContext&);
template Tensor<double> sublayer(const Tensor<double>&,
                                 const std::function<Tensor<double>(const Tensor<double>&)>&,
                                 const LayerNormParams<double>&, double, ForwardContext&);

}  // namespace ape

#pragma once

// Context-aware multi-source Transformer for automatic post-editing.
//
//   src tokens x --> src encoder (bidirectional self-attention) --> x'
//   mt tokens  y --> mt encoder: causal self-attention over y,
//                    cross-attention with keys/values = x',
//                    feed-forward                          --> e
//   pe prefix  z --> decoder: causal self-attention, cross-attention to e,
//                    feed-forward, logits = states * E^T
//
// Every sublayer is LayerNorm(H + Dropout(f(H))). One embedding matrix E is
// shared by src, mt and pe and doubles as the output projection.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ape/random.hpp"
#include "ape/tensor.hpp"

namespace ape {

namespace token {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kNumReserved = 4;
}  // namespace token

enum class Precision { f32, f64 };

// multi: full model. src_to_pe / mt_to_pe: single-source baselines.
enum class ModelMode { multi, src_to_pe, mt_to_pe };

std::string to_string(ModelMode mode);
ModelMode parse_mode(const std::string& text);
std::string to_string(Precision precision);
Precision parse_precision(const std::string& text);

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 256;
  int vocab_size = 0;
  double dropout = 0.1;
  int max_len = 256;
  Precision precision = Precision::f32;
  ModelMode mode = ModelMode::multi;

  int d_k() const { return d_model / n_heads; }
  // Throws ConfigError.
  void validate() const;

  static ModelConfig desk(int vocab_size);
  // 6 layers, d_model 512, 8 heads, d_ff 2048.
  static ModelConfig base(int vocab_size);

  bool operator==(const ModelConfig&) const = default;
};

// Closed-form parameter count for a configuration.
std::int64_t param_count(const ModelConfig& config);

enum class Role { src, mt, pe };

struct TokenSequence {
  std::vector<int> ids;
  Role role = Role::src;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

enum class Origin { embedded, src_encoded, joint_encoded, decoder };

template <typename T>
struct HiddenStates {
  Tensor<T> values;  // rows x d_model
  Origin origin = Origin::embedded;
  std::vector<bool> padding;  // true where the originating token is PAD

  std::size_t rows() const { return values.rows(); }
};

enum class AttentionSite { src_self, mt_self, mt_cross, dec_self, dec_cross };
std::string to_string(AttentionSite site);

// Softmax weights of one attention sublayer: one rows x cols matrix per head.
struct AttentionRecord {
  AttentionSite site = AttentionSite::src_self;
  int layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<double>> heads;

  double weight(std::size_t head, std::size_t r, std::size_t c) const {
    return heads[head][r * cols + c];
  }
};
using AttentionRecords = std::vector<AttentionRecord>;

// Boolean attention mask; blocked cells receive a large negative additive
// bias before the softmax and end up with exactly zero weight.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> blocked;

  bool is_blocked(std::size_t r, std::size_t c) const { return blocked[r * cols + c] != 0; }

  // Blocks PAD keys for every query.
  static AttentionMask key_padding(std::size_t query_rows, const std::vector<bool>& key_pad);
  // Blocks keys after the query position as well as PAD keys.
  static AttentionMask causal(std::size_t length, const std::vector<bool>& key_pad);
};

// Additive value used for blocked logits.
inline constexpr double kMaskedLogit = -1e9;

// Per-call evaluation state. `rng` is required when train is true and the
// configured dropout is non-zero; `records`, when set, collects the attention
// weights of every attention sublayer that runs.
struct ForwardContext {
  bool train = false;
  Rng* rng = nullptr;
  AttentionRecords* records = nullptr;
};

template <typename T>
struct AttentionParams {
  std::vector<Tensor<T>> wq, wk, wv;  // per head, d_model x d_k
  Tensor<T> wo;                       // (h * d_k) x d_model
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain, bias;
};

template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;
};

// Self-attention + feed-forward (src encoder; plain mt encoder in mt_to_pe).
template <typename T>
struct EncoderLayerParams {
  AttentionParams<T> self_attn;
  LayerNormParams<T> ln_self;
  FeedForwardParams<T> ff;
  LayerNormParams<T> ln_ff;
};

// Causal self-attention + cross-attention + feed-forward (mt encoder, decoder).
template <typename T>
struct JointLayerParams {
  AttentionParams<T> self_attn;
  LayerNormParams<T> ln_self;
  AttentionParams<T> cross_attn;
  LayerNormParams<T> ln_cross;
  FeedForwardParams<T> ff;
  LayerNormParams<T> ln_ff;
};

template <typename T>
struct ModelParams {
  Tensor<T> embedding;  // vocab_size x d_model, also the output projection
  std::vector<EncoderLayerParams<T>> src_layers;
  std::vector<JointLayerParams<T>> mt_layers;         // multi
  std::vector<EncoderLayerParams<T>> mt_plain_layers;  // mt_to_pe
  std::vector<JointLayerParams<T>> dec_layers;

  // Canonical order used by the optimizer and the checkpoint format:
  // embedding, src layers, mt layers, decoder layers; inside a layer:
  // self-attention (wq[0..h), wk[0..h), wv[0..h), wo), its layer norm
  // (gain, bias), cross-attention and its norm when present, feed-forward
  // (w1, b1, w2, b2), final norm.
  std::vector<std::pair<std::string, Tensor<T>>> named() const;
};

template <typename T>
struct AttentionResult {
  Tensor<T> output;                         // rows(q) x d_model
  std::vector<std::vector<double>> weights;  // per head, rows(q) x rows(k)
};

// Concat(head_1..head_h) W^O with head_i = softmax(Q Wq_i (K Wk_i)^T / sqrt(d_k) + mask) V Wv_i.
template <typename T>
AttentionResult<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& k_in,
                                        const Tensor<T>& v_in, const AttentionParams<T>& params,
                                        const AttentionMask* mask);

// LayerNorm(h + Dropout(fn(h))).
template <typename T>
Tensor<T> sublayer(const Tensor<T>& h, const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                   const LayerNormParams<T>& norm, double dropout_p, ForwardContext& ctx);

// Fixed sinusoidal encoding: sin on even dims, cos on odd dims.
double positional_encoding(std::size_t position, std::size_t dim, std::size_t d_model);

inline constexpr double kLayerNormEps = 1e-6;

template <typename T>
class Transformer {
 public:
  // Fresh model: Xavier-uniform projections, N(0, d_model^-0.5) embeddings,
  // unit layer-norm gains.
  Transformer(ModelConfig config, std::uint64_t seed);
  // Adopts existing parameters; layout must match the configuration.
  Transformer(ModelConfig config, ModelParams<T> params);

  const ModelConfig& config() const { return config_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }
  std::vector<Tensor<T>> parameters() const;

  // Deep copy with independent parameter storage.
  Transformer clone() const;

  HiddenStates<T> embed(const TokenSequence& seq, ForwardContext& ctx) const;
  HiddenStates<T> encode_src(const TokenSequence& x, ForwardContext& ctx) const;
  HiddenStates<T> encode_mt(const HiddenStates<T>& x_prime, const TokenSequence& y,
                            ForwardContext& ctx) const;
  // Encoder side for the configured mode; the result is tagged joint_encoded
  // since it is what the decoder attends to.
  HiddenStates<T> encode(const TokenSequence& x, const TokenSequence& y,
                         ForwardContext& ctx) const;
  // Logits, z_prefix.size() x vocab_size.
  Tensor<T> decode(const TokenSequence& z_prefix, const HiddenStates<T>& memory,
                   ForwardContext& ctx) const;
  Tensor<T> forward(const TokenSequence& x, const TokenSequence& y, const TokenSequence& z_in,
                    ForwardContext& ctx) const;

 private:
  Tensor<T> run_encoder_layer(const EncoderLayerParams<T>& layer, const Tensor<T>& h,
                              const AttentionMask& mask, AttentionSite site, int index,
                              ForwardContext& ctx) const;
  Tensor<T> run_joint_layer(const JointLayerParams<T>& layer, const Tensor<T>& h,
                            const Tensor<T>& memory, const AttentionMask& self_mask,
                            const AttentionMask& cross_mask, AttentionSite self_site,
                            AttentionSite cross_site, int index, ForwardContext& ctx) const;
  HiddenStates<T> encode_mt_plain(const TokenSequence& y, ForwardContext& ctx) const;
  Tensor<T> feed_forward(const FeedForwardParams<T>& ff, const Tensor<T>& h) const;

  ModelConfig config_;
  ModelParams<T> params_;
};

}  // namespace ape

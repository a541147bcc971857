#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "semsmooth/corpus.hpp"
#include "semsmooth/embeddings.hpp"
#include "semsmooth/losses.hpp"
#include "semsmooth/rng.hpp"
#include "semsmooth/smoothing.hpp"
#include "semsmooth/types.hpp"

namespace semsmooth {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 2;
  int d_ff = 256;
  double dropout = 0.1;
  int max_context = kMaxContextTokens;
  int vocab_size = 0;
  std::uint64_t seed = 0;

  void validate() const;

  /// 3 layers, 300-dim, 6 heads.
  static ModelConfig paper_preset(int vocab_size, std::uint64_t seed);
  /// 2 layers, 64-dim, 2 heads; small enough for minutes-scale experiments.
  static ModelConfig desk_preset(int vocab_size, std::uint64_t seed);

  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormWeights {
  Vector gamma;
  Vector beta;
};

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Vector bq, bk, bv, bo;  // d_model
};

struct FeedForwardWeights {
  Matrix w1;  // d_model x d_ff
  Vector b1;
  Matrix w2;  // d_ff x d_model
  Vector b2;
};

struct EncoderLayerWeights {
  LayerNormWeights ln1, ln2;
  AttentionWeights attn;
  FeedForwardWeights ff;
};

struct DecoderLayerWeights {
  LayerNormWeights ln1, ln2, ln3;
  AttentionWeights self_attn, cross_attn;
  FeedForwardWeights ff;
};

/// All named tensors of the pre-norm encoder-decoder. `positional` holds the
/// fixed sinusoidal encodings and is the only non-trainable tensor.
struct ModelParameters {
  ModelConfig config;
  Matrix token_embedding;  // k x d_model
  Matrix positional;       // max_sequence x d_model
  std::vector<EncoderLayerWeights> encoder;
  std::vector<DecoderLayerWeights> decoder;
  LayerNormWeights encoder_norm, decoder_norm;
  Matrix output_weight;  // d_model x k
  Vector output_bias;    // k
};

/// Visits every named tensor in a fixed order. The callback receives
/// (name, tensor, trainable) where tensor is Matrix& or Vector& (const if
/// the parameters are const).
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  fn("token_embedding", params.token_embedding, true);
  fn("positional", params.positional, false);
  auto visit_ln = [&](const std::string& prefix, auto& ln) {
    fn(prefix + ".gamma", ln.gamma, true);
    fn(prefix + ".beta", ln.beta, true);
  };
  auto visit_attn = [&](const std::string& prefix, auto& attn) {
    fn(prefix + ".wq", attn.wq, true);
    fn(prefix + ".bq", attn.bq, true);
    fn(prefix + ".wk", attn.wk, true);
    fn(prefix + ".bk", attn.bk, true);
    fn(prefix + ".wv", attn.wv, true);
    fn(prefix + ".bv", attn.bv, true);
    fn(prefix + ".wo", attn.wo, true);
    fn(prefix + ".bo", attn.bo, true);
  };
  auto visit_ff = [&](const std::string& prefix, auto& ff) {
    fn(prefix + ".w1", ff.w1, true);
    fn(prefix + ".b1", ff.b1, true);
    fn(prefix + ".w2", ff.w2, true);
    fn(prefix + ".b2", ff.b2, true);
  };
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    auto& layer = params.encoder[l];
    const std::string p = "encoder." + std::to_string(l);
    visit_ln(p + ".ln1", layer.ln1);
    visit_attn(p + ".attn", layer.attn);
    visit_ln(p + ".ln2", layer.ln2);
    visit_ff(p + ".ff", layer.ff);
  }
  visit_ln("encoder.norm", params.encoder_norm);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    auto& layer = params.decoder[l];
    const std::string p = "decoder." + std::to_string(l);
    visit_ln(p + ".ln1", layer.ln1);
    visit_attn(p + ".self_attn", layer.self_attn);
    visit_ln(p + ".ln2", layer.ln2);
    visit_attn(p + ".cross_attn", layer.cross_attn);
    visit_ln(p + ".ln3", layer.ln3);
    visit_ff(p + ".ff", layer.ff);
  }
  visit_ln("decoder.norm", params.decoder_norm);
  fn("output.weight", params.output_weight, true);
  fn("output.bias", params.output_bias, true);
}

/// Flat view over one tensor's storage; Eigen keeps both Matrix and Vector
/// data contiguous so a (pointer, size) pair suffices for optimizers,
/// clipping, serialization, and finite-difference probes.
struct TensorView {
  std::string name;
  double* data;
  Index rows;
  Index cols;
  bool trainable;
  bool is_matrix;

  Index size() const { return rows * cols; }
};

std::vector<TensorView> tensor_views(ModelParameters& params);

/// Same-shaped parameter set with every tensor zeroed; gradient accumulator.
ModelParameters zeros_like(const ModelParameters& params);

/// Allocates zeroed tensors for a config (checkpoint loading).
ModelParameters make_parameters(const ModelConfig& config);

/// Maps per-position target ids to soft-target distributions: hard one-hot,
/// plain uniform smoothing, or a precomputed semantic table.
class TargetPolicy {
 public:
  static TargetPolicy hard();
  static TargetPolicy uniform(double s);
  static TargetPolicy table(std::shared_ptr<const TargetTable> table);

  TargetDistribution distribution(int target_id, int vocab_size) const;

  const TargetTable* table_ptr() const { return table_.get(); }

 private:
  enum class Kind { hard, uniform, table };
  Kind kind_ = Kind::hard;
  double s_ = 0.0;
  std::shared_ptr<const TargetTable> table_;
};

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 64;
  int epochs = 15;
  double clip_norm = 1.0;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;

  static TrainConfig desk_preset(std::uint64_t seed);
};

/// Deterministic init: the embedding table starts from the (projected) word
/// vectors, everything else from scaled-uniform draws seeded by config.seed.
ModelParameters init_model(const ModelConfig& config, const EmbeddingMatrix& embeddings);

/// One teacher-forced pass: encoder over the context, causal decoder over
/// the response prefix, one row of vocabulary logits per prefix position.
/// Dropout fires only when train_mode is set, driven by rng.
Matrix forward(const ModelParameters& params, const TokenIds& context_ids,
               const TokenIds& prefix_ids, bool train_mode = false, Rng* rng = nullptr);

struct BackwardResult {
  double mean_loss = 0.0;
  long token_count = 0;
  ModelParameters gradients;
};

/// Gradients of the mean per-token batch loss with respect to every
/// trainable tensor. A null rng disables dropout.
BackwardResult backward(const ModelParameters& params,
                        std::span<const TrainingExample> batch,
                        const TargetPolicy& policy, LossKind kind, Rng* rng = nullptr);

/// Scales gradients so the global norm is at most max_norm; returns the
/// pre-clip norm.
double clip_global_norm(ModelParameters& gradients, double max_norm);

struct TrainResult {
  std::vector<double> epoch_losses;  // mean nats per target token
};

/// Seeded-shuffle mini-batch AdamW with global-norm clipping. Weight decay
/// applies to matrices only (biases and norm parameters are exempt).
TrainResult train(ModelParameters& params, std::span<const TrainingExample> examples,
                  const TargetPolicy& policy, LossKind kind, const TrainConfig& config);

/// Argmax decoding (lowest index wins ties); stops at [eos] or max_len
/// generated tokens. The returned ids include the terminating [eos].
TokenIds greedy_decode(const ModelParameters& params, const TokenIds& context_ids,
                       int max_len);

/// Softmax rows for each response position under teacher forcing; row i is
/// the predicted distribution for response_ids[i].
Matrix response_token_probabilities(const ModelParameters& params,
                                    const TrainingExample& example);

}  // namespace semsmooth

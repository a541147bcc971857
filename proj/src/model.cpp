#include "semsmooth/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semsmooth/errors.hpp"

namespace semsmooth {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskedScore = -1e30;
constexpr int kMinPositionalRows = 256;

int positional_rows(const ModelConfig& config) {
  return std::max(config.max_context, kMinPositionalRows);
}

void check_token_ids(const TokenIds& ids, int vocab_size, const char* what) {
  if (ids.empty()) {
    throw ConfigError(std::string(what) + " must be non-empty");
  }
  for (int id : ids) {
    if (id < 0 || id >= vocab_size) {
      throw std::out_of_range(std::string(what) + " contains token id " +
                              std::to_string(id) + " outside [0, " +
                              std::to_string(vocab_size) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// Building blocks: each forward fills a cache, each backward consumes it and
// accumulates parameter gradients.
// ---------------------------------------------------------------------------

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

Matrix layer_norm_forward(const Matrix& x, const LayerNormWeights& w,
                          LayerNormCache& cache) {
  const Index d = x.cols();
  cache.xhat.resize(x.rows(), d);
  cache.inv_std.resize(x.rows());
  Matrix out(x.rows(), d);
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const auto centered = x.row(i).array() - mean;
    const double var = centered.square().sum() / static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[i] = inv_std;
    cache.xhat.row(i) = (centered * inv_std).matrix();
    out.row(i) = (cache.xhat.row(i).array() * w.gamma.transpose().array() +
                  w.beta.transpose().array())
                     .matrix();
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& d_out, const LayerNormWeights& w,
                           const LayerNormCache& cache, LayerNormWeights& grad) {
  const Index d = d_out.cols();
  grad.gamma.noalias() += (d_out.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
  grad.beta.noalias() += d_out.colwise().sum().transpose();

  Matrix dx(d_out.rows(), d);
  for (Index i = 0; i < d_out.rows(); ++i) {
    const auto dxhat = d_out.row(i).array() * w.gamma.transpose().array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * cache.xhat.row(i).array()).mean();
    dx.row(i) =
        (cache.inv_std[i] * (dxhat - m1 - cache.xhat.row(i).array() * m2)).matrix();
  }
  return dx;
}

struct DropoutCache {
  bool active = false;
  Matrix mask;  // entries 0 or 1/(1-p)
};

Matrix dropout_forward(const Matrix& x, double p, bool train_mode, Rng* rng,
                       DropoutCache& cache) {
  if (!train_mode || p <= 0.0) {
    cache.active = false;
    return x;
  }
  if (rng == nullptr) {
    throw ConfigError("train-mode dropout requires an rng");
  }
  cache.active = true;
  cache.mask.resize(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  double* mask = cache.mask.data();
  for (Index i = 0; i < cache.mask.size(); ++i) {
    mask[i] = rng->uniform() < p ? 0.0 : keep_scale;
  }
  return x.cwiseProduct(cache.mask);
}

Matrix dropout_backward(const Matrix& d_out, const DropoutCache& cache) {
  if (!cache.active) {
    return d_out;
  }
  return d_out.cwiseProduct(cache.mask);
}

struct AttentionCache {
  Matrix query_input;  // n_q x d (already normed)
  Matrix kv_input;     // n_kv x d
  Matrix q, k, v;      // n x d
  std::vector<Matrix> probs;  // per head, n_q x n_kv
  Matrix context;      // n_q x d, heads concatenated, before the output proj
};

Matrix attention_forward(const Matrix& query_input, const Matrix& kv_input,
                         const AttentionWeights& w, int n_heads, bool causal,
                         AttentionCache& cache) {
  const Index d = query_input.cols();
  const Index head_dim = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  cache.query_input = query_input;
  cache.kv_input = kv_input;
  cache.q.noalias() = query_input * w.wq;
  cache.q.rowwise() += w.bq.transpose();
  cache.k.noalias() = kv_input * w.wk;
  cache.k.rowwise() += w.bk.transpose();
  cache.v.noalias() = kv_input * w.wv;
  cache.v.rowwise() += w.bv.transpose();

  cache.probs.assign(n_heads, Matrix());
  cache.context.resize(query_input.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const auto q_h = cache.q.middleCols(h * head_dim, head_dim);
    const auto k_h = cache.k.middleCols(h * head_dim, head_dim);
    const auto v_h = cache.v.middleCols(h * head_dim, head_dim);
    Matrix scores = scale * (q_h * k_h.transpose());
    if (causal) {
      for (Index i = 0; i < scores.rows(); ++i) {
        for (Index j = i + 1; j < scores.cols(); ++j) {
          scores(i, j) = kMaskedScore;
        }
      }
    }
    Matrix& probs = cache.probs[h];
    probs.resize(scores.rows(), scores.cols());
    for (Index i = 0; i < scores.rows(); ++i) {
      const double row_max = scores.row(i).maxCoeff();
      probs.row(i) = (scores.row(i).array() - row_max).exp().matrix();
      probs.row(i) /= probs.row(i).sum();
    }
    cache.context.middleCols(h * head_dim, head_dim).noalias() = probs * v_h;
  }
  Matrix out = cache.context * w.wo;
  out.rowwise() += w.bo.transpose();
  return out;
}

struct AttentionInputGrads {
  Matrix d_query_input;
  Matrix d_kv_input;
};

AttentionInputGrads attention_backward(const Matrix& d_out, const AttentionWeights& w,
                                       int n_heads, const AttentionCache& cache,
                                       AttentionWeights& grad) {
  const Index d = d_out.cols();
  const Index head_dim = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  grad.wo.noalias() += cache.context.transpose() * d_out;
  grad.bo.noalias() += d_out.colwise().sum().transpose();
  const Matrix d_context = d_out * w.wo.transpose();

  Matrix dq(cache.q.rows(), d);
  Matrix dk(cache.k.rows(), d);
  Matrix dv(cache.v.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const auto q_h = cache.q.middleCols(h * head_dim, head_dim);
    const auto k_h = cache.k.middleCols(h * head_dim, head_dim);
    const auto v_h = cache.v.middleCols(h * head_dim, head_dim);
    const auto d_ctx_h = d_context.middleCols(h * head_dim, head_dim);
    const Matrix& probs = cache.probs[h];

    const Matrix d_probs = d_ctx_h * v_h.transpose();
    dv.middleCols(h * head_dim, head_dim).noalias() = probs.transpose() * d_ctx_h;

    // Softmax rows: dS = P .* (dP - rowsum(dP .* P)).
    Matrix d_scores(probs.rows(), probs.cols());
    for (Index i = 0; i < probs.rows(); ++i) {
      const double dot = d_probs.row(i).dot(probs.row(i));
      d_scores.row(i) =
          (probs.row(i).array() * (d_probs.row(i).array() - dot)).matrix();
    }
    d_scores *= scale;
    dq.middleCols(h * head_dim, head_dim).noalias() = d_scores * k_h;
    dk.middleCols(h * head_dim, head_dim).noalias() = d_scores.transpose() * q_h;
  }

  grad.wq.noalias() += cache.query_input.transpose() * dq;
  grad.bq.noalias() += dq.colwise().sum().transpose();
  grad.wk.noalias() += cache.kv_input.transpose() * dk;
  grad.bk.noalias() += dk.colwise().sum().transpose();
  grad.wv.noalias() += cache.kv_input.transpose() * dv;
  grad.bv.noalias() += dv.colwise().sum().transpose();

  AttentionInputGrads grads;
  grads.d_query_input.noalias() = dq * w.wq.transpose();
  grads.d_kv_input.noalias() = dk * w.wk.transpose();
  grads.d_kv_input.noalias() += dv * w.wv.transpose();
  return grads;
}

struct FeedForwardCache {
  Matrix input;    // n x d
  Matrix pre_act;  // n x d_ff
};

Matrix feed_forward_forward(const Matrix& x, const FeedForwardWeights& w,
                            FeedForwardCache& cache) {
  cache.input = x;
  cache.pre_act.noalias() = x * w.w1;
  cache.pre_act.rowwise() += w.b1.transpose();
  Matrix out = cache.pre_act.cwiseMax(0.0) * w.w2;
  out.rowwise() += w.b2.transpose();
  return out;
}

Matrix feed_forward_backward(const Matrix& d_out, const FeedForwardWeights& w,
                             const FeedForwardCache& cache, FeedForwardWeights& grad) {
  const Matrix act = cache.pre_act.cwiseMax(0.0);
  grad.w2.noalias() += act.transpose() * d_out;
  grad.b2.noalias() += d_out.colwise().sum().transpose();
  Matrix d_pre = d_out * w.w2.transpose();
  d_pre = d_pre.cwiseProduct(
      (cache.pre_act.array() > 0.0).cast<double>().matrix());
  grad.w1.noalias() += cache.input.transpose() * d_pre;
  grad.b1.noalias() += d_pre.colwise().sum().transpose();
  return d_pre * w.w1.transpose();
}

// ---------------------------------------------------------------------------
// Whole-model forward cache.
// ---------------------------------------------------------------------------

struct EncoderLayerCache {
  Matrix input;
  LayerNormCache ln1;
  AttentionCache attn;
  DropoutCache drop1;
  Matrix mid;
  LayerNormCache ln2;
  FeedForwardCache ff;
  DropoutCache drop2;
};

struct DecoderLayerCache {
  Matrix input;
  LayerNormCache ln1;
  AttentionCache self_attn;
  DropoutCache drop1;
  Matrix mid1;
  LayerNormCache ln2;
  AttentionCache cross_attn;
  DropoutCache drop2;
  Matrix mid2;
  LayerNormCache ln3;
  FeedForwardCache ff;
  DropoutCache drop3;
};

struct ForwardCache {
  TokenIds context_ids;
  TokenIds prefix_ids;
  DropoutCache enc_emb_drop;
  std::vector<EncoderLayerCache> enc_layers;
  Matrix enc_pre_norm;
  LayerNormCache enc_norm;
  Matrix enc_out;
  DropoutCache dec_emb_drop;
  std::vector<DecoderLayerCache> dec_layers;
  Matrix dec_pre_norm;
  LayerNormCache dec_norm;
  Matrix dec_out;
  Matrix logits;
};

Matrix embed(const ModelParameters& params, const TokenIds& ids) {
  const Index n = static_cast<Index>(ids.size());
  Matrix x(n, params.config.d_model);
  for (Index i = 0; i < n; ++i) {
    x.row(i) = params.token_embedding.row(ids[static_cast<std::size_t>(i)]) +
               params.positional.row(i);
  }
  return x;
}

void forward_cached(const ModelParameters& params, const TokenIds& context_ids,
                    const TokenIds& prefix_ids, bool train_mode, Rng* rng,
                    ForwardCache& cache) {
  const ModelConfig& config = params.config;
  check_token_ids(context_ids, config.vocab_size, "context");
  check_token_ids(prefix_ids, config.vocab_size, "response prefix");
  if (static_cast<int>(context_ids.size()) > config.max_context) {
    throw ConfigError("context of " + std::to_string(context_ids.size()) +
                      " tokens exceeds max_context " + std::to_string(config.max_context));
  }
  if (static_cast<Index>(prefix_ids.size()) > params.positional.rows()) {
    throw ConfigError("response prefix exceeds the positional table");
  }
  const double p_drop = config.dropout;

  cache.context_ids = context_ids;
  cache.prefix_ids = prefix_ids;

  // Encoder.
  Matrix x = dropout_forward(embed(params, context_ids), p_drop, train_mode, rng,
                             cache.enc_emb_drop);
  cache.enc_layers.resize(params.encoder.size());
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    const EncoderLayerWeights& w = params.encoder[l];
    EncoderLayerCache& lc = cache.enc_layers[l];
    lc.input = x;
    const Matrix normed = layer_norm_forward(x, w.ln1, lc.ln1);
    const Matrix attn_out =
        attention_forward(normed, normed, w.attn, config.n_heads, false, lc.attn);
    lc.mid = x + dropout_forward(attn_out, p_drop, train_mode, rng, lc.drop1);
    const Matrix normed2 = layer_norm_forward(lc.mid, w.ln2, lc.ln2);
    const Matrix ff_out = feed_forward_forward(normed2, w.ff, lc.ff);
    x = lc.mid + dropout_forward(ff_out, p_drop, train_mode, rng, lc.drop2);
  }
  cache.enc_pre_norm = x;
  cache.enc_out = layer_norm_forward(x, params.encoder_norm, cache.enc_norm);

  // Decoder.
  Matrix y = dropout_forward(embed(params, prefix_ids), p_drop, train_mode, rng,
                             cache.dec_emb_drop);
  cache.dec_layers.resize(params.decoder.size());
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    const DecoderLayerWeights& w = params.decoder[l];
    DecoderLayerCache& lc = cache.dec_layers[l];
    lc.input = y;
    const Matrix normed1 = layer_norm_forward(y, w.ln1, lc.ln1);
    const Matrix self_out =
        attention_forward(normed1, normed1, w.self_attn, config.n_heads, true, lc.self_attn);
    lc.mid1 = y + dropout_forward(self_out, p_drop, train_mode, rng, lc.drop1);
    const Matrix normed2 = layer_norm_forward(lc.mid1, w.ln2, lc.ln2);
    const Matrix cross_out = attention_forward(normed2, cache.enc_out, w.cross_attn,
                                               config.n_heads, false, lc.cross_attn);
    lc.mid2 = lc.mid1 + dropout_forward(cross_out, p_drop, train_mode, rng, lc.drop2);
    const Matrix normed3 = layer_norm_forward(lc.mid2, w.ln3, lc.ln3);
    const Matrix ff_out = feed_forward_forward(normed3, w.ff, lc.ff);
    y = lc.mid2 + dropout_forward(ff_out, p_drop, train_mode, rng, lc.drop3);
  }
  cache.dec_pre_norm = y;
  cache.dec_out = layer_norm_forward(y, params.decoder_norm, cache.dec_norm);

  cache.logits.noalias() = cache.dec_out * params.output_weight;
  cache.logits.rowwise() += params.output_bias.transpose();
}

/// Accumulates gradients of a scalar loss whose logits-gradient is d_logits.
void backward_cached(const ModelParameters& params, const ForwardCache& cache,
                     const Matrix& d_logits, ModelParameters& grads) {
  const ModelConfig& config = params.config;

  grads.output_weight.noalias() += cache.dec_out.transpose() * d_logits;
  grads.output_bias.noalias() += d_logits.colwise().sum().transpose();
  Matrix dy = d_logits * params.output_weight.transpose();
  dy = layer_norm_backward(dy, params.decoder_norm, cache.dec_norm, grads.decoder_norm);

  Matrix d_enc_out = Matrix::Zero(cache.enc_out.rows(), cache.enc_out.cols());

  for (std::size_t l = params.decoder.size(); l-- > 0;) {
    const DecoderLayerWeights& w = params.decoder[l];
    const DecoderLayerCache& lc = cache.dec_layers[l];
    DecoderLayerWeights& gw = grads.decoder[l];

    // y = mid2 + drop(ff(ln3(mid2)))
    Matrix d_ff_out = dropout_backward(dy, lc.drop3);
    Matrix d_norm3 = feed_forward_backward(d_ff_out, w.ff, lc.ff, gw.ff);
    Matrix d_mid2 = dy + layer_norm_backward(d_norm3, w.ln3, lc.ln3, gw.ln3);

    // mid2 = mid1 + drop(cross(ln2(mid1), enc_out))
    Matrix d_cross_out = dropout_backward(d_mid2, lc.drop2);
    AttentionInputGrads cross_grads = attention_backward(
        d_cross_out, w.cross_attn, config.n_heads, lc.cross_attn, gw.cross_attn);
    d_enc_out += cross_grads.d_kv_input;
    Matrix d_mid1 =
        d_mid2 + layer_norm_backward(cross_grads.d_query_input, w.ln2, lc.ln2, gw.ln2);

    // mid1 = y_in + drop(self(ln1(y_in)))
    Matrix d_self_out = dropout_backward(d_mid1, lc.drop1);
    AttentionInputGrads self_grads = attention_backward(
        d_self_out, w.self_attn, config.n_heads, lc.self_attn, gw.self_attn);
    Matrix d_normed1 = self_grads.d_query_input + self_grads.d_kv_input;
    dy = d_mid1 + layer_norm_backward(d_normed1, w.ln1, lc.ln1, gw.ln1);
  }

  Matrix d_dec_embedded = dropout_backward(dy, cache.dec_emb_drop);
  for (std::size_t i = 0; i < cache.prefix_ids.size(); ++i) {
    grads.token_embedding.row(cache.prefix_ids[i]) +=
        d_dec_embedded.row(static_cast<Index>(i));
  }

  // Encoder, fed by the accumulated cross-attention gradient.
  Matrix dx = layer_norm_backward(d_enc_out, params.encoder_norm, cache.enc_norm,
                                  grads.encoder_norm);
  for (std::size_t l = params.encoder.size(); l-- > 0;) {
    const EncoderLayerWeights& w = params.encoder[l];
    const EncoderLayerCache& lc = cache.enc_layers[l];
    EncoderLayerWeights& gw = grads.encoder[l];

    Matrix d_ff_out = dropout_backward(dx, lc.drop2);
    Matrix d_norm2 = feed_forward_backward(d_ff_out, w.ff, lc.ff, gw.ff);
    Matrix d_mid = dx + layer_norm_backward(d_norm2, w.ln2, lc.ln2, gw.ln2);

    Matrix d_attn_out = dropout_backward(d_mid, lc.drop1);
    AttentionInputGrads attn_grads =
        attention_backward(d_attn_out, w.attn, config.n_heads, lc.attn, gw.attn);
    Matrix d_normed = attn_grads.d_query_input + attn_grads.d_kv_input;
    dx = d_mid + layer_norm_backward(d_normed, w.ln1, lc.ln1, gw.ln1);
  }
  Matrix d_enc_embedded = dropout_backward(dx, cache.enc_emb_drop);
  for (std::size_t i = 0; i < cache.context_ids.size(); ++i) {
    grads.token_embedding.row(cache.context_ids[i]) +=
        d_enc_embedded.row(static_cast<Index>(i));
  }
}

Matrix xavier_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  double* data = w.data();
  for (Index i = 0; i < w.size(); ++i) {
    data[i] = rng.uniform(-bound, bound);
  }
  return w;
}

Matrix sinusoidal_positional(Index rows, Index d) {
  Matrix pe(rows, d);
  for (Index pos = 0; pos < rows; ++pos) {
    for (Index i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe(pos, i) = std::sin(angle);
      if (i + 1 < d) {
        pe(pos, i + 1) = std::cos(angle);
      }
    }
  }
  return pe;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config and parameter plumbing.
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model must be divisible by n_heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  if (vocab_size < kNumSpecialTokens) {
    throw ConfigError("vocab_size must cover the special tokens");
  }
  if (max_context < 1) {
    throw ConfigError("max_context must be >= 1");
  }
}

ModelConfig ModelConfig::paper_preset(int vocab_size, std::uint64_t seed) {
  ModelConfig config;
  config.n_layers = 3;
  config.d_model = 300;
  config.n_heads = 6;
  config.d_ff = 1200;
  config.dropout = 0.1;
  config.vocab_size = vocab_size;
  config.seed = seed;
  return config;
}

ModelConfig ModelConfig::desk_preset(int vocab_size, std::uint64_t seed) {
  ModelConfig config;
  config.n_layers = 2;
  config.d_model = 64;
  config.n_heads = 2;
  config.d_ff = 256;
  config.dropout = 0.1;
  config.vocab_size = vocab_size;
  config.seed = seed;
  return config;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (epochs < 1) {
    throw ConfigError("epochs must be >= 1");
  }
  if (batch_size < 1) {
    throw ConfigError("batch_size must be >= 1");
  }
  if (clip_norm <= 0.0) {
    throw ConfigError("clip_norm must be > 0");
  }
  if (weight_decay < 0.0) {
    throw ConfigError("weight_decay must be >= 0");
  }
}

TrainConfig TrainConfig::desk_preset(std::uint64_t seed) {
  TrainConfig config;
  config.batch_size = 16;
  config.epochs = 5;
  config.seed = seed;
  return config;
}

ModelParameters make_parameters(const ModelConfig& config) {
  config.validate();
  const Index d = config.d_model;
  const Index k = config.vocab_size;
  ModelParameters params;
  params.config = config;
  params.token_embedding = Matrix::Zero(k, d);
  params.positional = Matrix::Zero(positional_rows(config), d);
  auto make_ln = [&] {
    return LayerNormWeights{Vector::Zero(d), Vector::Zero(d)};
  };
  auto make_attn = [&] {
    return AttentionWeights{Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d),
                            Matrix::Zero(d, d), Vector::Zero(d),    Vector::Zero(d),
                            Vector::Zero(d),    Vector::Zero(d)};
  };
  auto make_ff = [&] {
    return FeedForwardWeights{Matrix::Zero(d, config.d_ff), Vector::Zero(config.d_ff),
                              Matrix::Zero(config.d_ff, d), Vector::Zero(d)};
  };
  params.encoder.reserve(config.n_layers);
  params.decoder.reserve(config.n_layers);
  for (int l = 0; l < config.n_layers; ++l) {
    params.encoder.push_back(EncoderLayerWeights{make_ln(), make_ln(), make_attn(), make_ff()});
    params.decoder.push_back(DecoderLayerWeights{make_ln(), make_ln(), make_ln(),
                                                 make_attn(), make_attn(), make_ff()});
  }
  params.encoder_norm = make_ln();
  params.decoder_norm = make_ln();
  params.output_weight = Matrix::Zero(d, k);
  params.output_bias = Vector::Zero(k);
  return params;
}

std::vector<TensorView> tensor_views(ModelParameters& params) {
  std::vector<TensorView> views;
  for_each_tensor(params, [&](const std::string& name, auto& tensor, bool trainable) {
    using T = std::decay_t<decltype(tensor)>;
    views.push_back(TensorView{name, tensor.data(), tensor.rows(), tensor.cols(),
                               trainable, std::is_same_v<T, Matrix>});
  });
  return views;
}

ModelParameters zeros_like(const ModelParameters& params) {
  return make_parameters(params.config);
}

ModelParameters init_model(const ModelConfig& config, const EmbeddingMatrix& embeddings) {
  config.validate();
  if (embeddings.rows() != config.vocab_size) {
    throw ConfigError("embedding row count " + std::to_string(embeddings.rows()) +
                      " does not match vocab_size " + std::to_string(config.vocab_size));
  }
  Rng rng(config.seed);
  ModelParameters params = make_parameters(config);

  if (embeddings.dim == config.d_model) {
    params.token_embedding = embeddings.values;
  } else {
    // Seeded random projection adapts mismatched vector widths (desk preset
    // with full-width vectors).
    const Matrix projection = xavier_uniform(embeddings.dim, config.d_model, rng);
    params.token_embedding.noalias() = embeddings.values * projection;
  }
  params.positional = sinusoidal_positional(params.positional.rows(), config.d_model);

  for_each_tensor(params, [&](const std::string& name, auto& tensor, bool trainable) {
    using T = std::decay_t<decltype(tensor)>;
    if (!trainable || name == "token_embedding") {
      return;
    }
    if constexpr (std::is_same_v<T, Matrix>) {
      tensor = xavier_uniform(tensor.rows(), tensor.cols(), rng);
    } else {
      // Vectors: layer-norm gains start at 1, every bias at 0.
      tensor = name.ends_with(".gamma") ? Vector::Ones(tensor.size())
                                        : Vector::Zero(tensor.size());
    }
  });
  return params;
}

// ---------------------------------------------------------------------------
// Target policy.
// ---------------------------------------------------------------------------

TargetPolicy TargetPolicy::hard() { return TargetPolicy{}; }

TargetPolicy TargetPolicy::uniform(double s) {
  if (s < 0.0 || s >= 1.0) {
    throw ConfigError("smoothing factor s must be in [0, 1)");
  }
  TargetPolicy policy;
  policy.kind_ = Kind::uniform;
  policy.s_ = s;
  return policy;
}

TargetPolicy TargetPolicy::table(std::shared_ptr<const TargetTable> table) {
  if (table == nullptr) {
    throw ConfigError("null target table");
  }
  TargetPolicy policy;
  policy.kind_ = Kind::table;
  policy.table_ = std::move(table);
  return policy;
}

TargetDistribution TargetPolicy::distribution(int target_id, int vocab_size) const {
  switch (kind_) {
    case Kind::hard:
      return one_hot(target_id, vocab_size);
    case Kind::uniform:
      return uniform_smoothed_distribution(target_id, vocab_size, s_);
    case Kind::table:
      if (table_->vocab_size() != vocab_size) {
        throw ConfigError("target table size does not match the vocabulary");
      }
      return table_->rows.at(static_cast<std::size_t>(target_id));
  }
  throw ConfigError("invalid target policy");
}

// ---------------------------------------------------------------------------
// Forward / backward / train / decode.
// ---------------------------------------------------------------------------

Matrix forward(const ModelParameters& params, const TokenIds& context_ids,
               const TokenIds& prefix_ids, bool train_mode, Rng* rng) {
  ForwardCache cache;
  forward_cached(params, context_ids, prefix_ids, train_mode, rng, cache);
  return std::move(cache.logits);
}

BackwardResult backward(const ModelParameters& params,
                        std::span<const TrainingExample> batch,
                        const TargetPolicy& policy, LossKind kind, Rng* rng) {
  if (batch.empty()) {
    throw ConfigError("empty batch");
  }
  const int k = params.config.vocab_size;
  BackwardResult result;
  result.gradients = zeros_like(params);

  double loss_sum = 0.0;
  long tokens = 0;
  ForwardCache cache;
  for (const TrainingExample& example : batch) {
    if (example.response_ids.empty()) {
      throw ConfigError("example with empty response");
    }
    TokenIds prefix;
    prefix.reserve(example.response_ids.size());
    prefix.push_back(kBosIndex);
    prefix.insert(prefix.end(), example.response_ids.begin(),
                  example.response_ids.end() - 1);

    forward_cached(params, example.context_ids, prefix, rng != nullptr, rng, cache);

    Matrix d_logits(cache.logits.rows(), cache.logits.cols());
    for (Index i = 0; i < cache.logits.rows(); ++i) {
      const int target = example.response_ids[static_cast<std::size_t>(i)];
      const TargetDistribution q = policy.distribution(target, k);
      const Vector row = cache.logits.row(i).transpose();
      const LossResult token_loss = kind == LossKind::cross_entropy
                                        ? cross_entropy_soft(q, row)
                                        : kl_divergence_loss(q, row);
      loss_sum += token_loss.loss;
      d_logits.row(i) = token_loss.gradient.transpose();
      ++tokens;
    }
    backward_cached(params, cache, d_logits, result.gradients);
  }

  result.token_count = tokens;
  result.mean_loss = loss_sum / static_cast<double>(tokens);
  if (!std::isfinite(result.mean_loss)) {
    throw NumericError("non-finite batch loss");
  }
  // The per-example sums above are gradients of the summed loss; rescale to
  // the mean.
  const double inv = 1.0 / static_cast<double>(tokens);
  for_each_tensor(result.gradients, [&](const std::string&, auto& tensor, bool trainable) {
    if (trainable) {
      tensor *= inv;
    }
  });
  return result;
}

double clip_global_norm(ModelParameters& gradients, double max_norm) {
  double sum_sq = 0.0;
  for_each_tensor(gradients, [&](const std::string&, auto& tensor, bool trainable) {
    if (trainable) {
      sum_sq += tensor.squaredNorm();
    }
  });
  const double norm = std::sqrt(sum_sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for_each_tensor(gradients, [&](const std::string&, auto& tensor, bool trainable) {
      if (trainable) {
        tensor *= scale;
      }
    });
  }
  return norm;
}

TrainResult train(ModelParameters& params, std::span<const TrainingExample> examples,
                  const TargetPolicy& policy, LossKind kind, const TrainConfig& config) {
  config.validate();
  if (examples.empty()) {
    throw ConfigError("no training examples");
  }

  Rng rng(config.seed);
  ModelParameters adam_m = zeros_like(params);
  ModelParameters adam_v = zeros_like(params);
  long step = 0;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.epoch_losses.reserve(config.epochs);
  std::vector<TrainingExample> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss_sum = 0.0;
    long epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(examples[order[i]]);
      }
      BackwardResult bw;
      try {
        bw = backward(params, batch, policy, kind, &rng);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(start / config.batch_size + 1) +
                           ": " + e.what());
      }
      epoch_loss_sum += bw.mean_loss * static_cast<double>(bw.token_count);
      epoch_tokens += bw.token_count;

      clip_global_norm(bw.gradients, config.clip_norm);

      // AdamW: decoupled weight decay on matrices only.
      ++step;
      const double bias1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      auto params_views = tensor_views(params);
      auto grad_views = tensor_views(bw.gradients);
      auto m_views = tensor_views(adam_m);
      auto v_views = tensor_views(adam_v);
      for (std::size_t t = 0; t < params_views.size(); ++t) {
        if (!params_views[t].trainable) {
          continue;
        }
        const double decay = params_views[t].is_matrix ? config.weight_decay : 0.0;
        double* p = params_views[t].data;
        const double* g = grad_views[t].data;
        double* m = m_views[t].data;
        double* v = v_views[t].data;
        const Index size = params_views[t].size();
        for (Index i = 0; i < size; ++i) {
          m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
          v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
          const double m_hat = m[i] / bias1;
          const double v_hat = v[i] / bias2;
          p[i] -= config.learning_rate *
                  (m_hat / (std::sqrt(v_hat) + config.adam_eps) + decay * p[i]);
        }
      }

      bool finite = true;
      for_each_tensor(params, [&](const std::string&, auto& tensor, bool) {
        finite = finite && tensor.allFinite();
      });
      if (!finite) {
        throw NumericError("non-finite parameters after epoch " +
                           std::to_string(epoch + 1) + ", batch " +
                           std::to_string(start / config.batch_size + 1));
      }
    }
    result.epoch_losses.push_back(epoch_loss_sum / static_cast<double>(epoch_tokens));
  }
  return result;
}

TokenIds greedy_decode(const ModelParameters& params, const TokenIds& context_ids,
                       int max_len) {
  TokenIds prefix{kBosIndex};
  TokenIds generated;
  while (static_cast<int>(generated.size()) < max_len) {
    const Matrix logits = forward(params, context_ids, prefix);
    const auto last = logits.row(logits.rows() - 1);
    int best = 0;
    for (int m = 1; m < params.config.vocab_size; ++m) {
      if (last[m] > last[best]) {
        best = m;
      }
    }
    generated.push_back(best);
    if (best == kEosIndex) {
      break;
    }
    prefix.push_back(best);
  }
  return generated;
}

Matrix response_token_probabilities(const ModelParameters& params,
                                    const TrainingExample& example) {
  TokenIds prefix;
  prefix.reserve(example.response_ids.size());
  prefix.push_back(kBosIndex);
  prefix.insert(prefix.end(), example.response_ids.begin(), example.response_ids.end() - 1);
  Matrix logits = forward(params, example.context_ids, prefix);
  for (Index i = 0; i < logits.rows(); ++i) {
    logits.row(i) = softmax(logits.row(i).transpose()).transpose();
  }
  return logits;
}

}  // namespace semsmooth

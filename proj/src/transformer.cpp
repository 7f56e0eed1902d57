#include "ehrtraj/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ehrtraj::nn {

void TransformerConfig::check() const {
  if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
  if (max_seq <= 0 || layers <= 0 || heads <= 0 || model_dim <= 0 || ff_dim <= 0) {
    throw std::invalid_argument("transformer dimensions must be positive");
  }
  if (model_dim % heads != 0) throw std::invalid_argument("model_dim must be divisible by heads");
}

namespace {

constexpr int kPerLayer = 12;
enum LayerSlot {
  kLn1G, kLn1B, kWqkv, kBqkv, kWo, kBo, kLn2G, kLn2B, kW1, kB1, kW2, kB2,
};
constexpr double kLnEps = 1e-5;

}  // namespace

template <typename T>
struct Transformer<T>::LayerView {
  using CMap = Eigen::Map<const Mat>;
  using CVec = Eigen::Map<const RowVec>;
  CVec ln1_g, ln1_b;
  CMap wqkv;
  CVec bqkv;
  CMap wo;
  CVec bo;
  CVec ln2_g, ln2_b;
  CMap w1;
  CVec b1;
  CMap w2;
  CVec b2;
};

template <typename T>
struct Transformer<T>::Trace {
  struct Layer {
    Mat x_in, xhat1, a, qkv, ctx, x_mid, xhat2, b, h1, g;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd1, rstd2;
    std::vector<Mat> probs;
  };
  std::vector<Layer> layers;
  Mat x_last, xhatf, f;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstdf;
};

template <typename T>
Transformer<T>::Transformer(const TransformerConfig& cfg) : cfg_(cfg) {
  cfg_.check();
  build_layout();
}

template <typename T>
void Transformer<T>::build_layout() {
  tensors_.clear();
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols, bool decay) {
    TensorInfo info{std::move(name), offset, rows, cols, decay};
    offset += info.size();
    tensors_.push_back(std::move(info));
  };
  const int d = cfg_.model_dim;
  const int ff = cfg_.ff_dim;
  add("tok_emb", cfg_.vocab_size, d, true);
  add("pos_emb", cfg_.max_seq, d, false);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.g", 1, d, false);
    add(p + "ln1.b", 1, d, false);
    add(p + "attn.wqkv", d, 3 * d, true);
    add(p + "attn.bqkv", 1, 3 * d, false);
    add(p + "attn.wo", d, d, true);
    add(p + "attn.bo", 1, d, false);
    add(p + "ln2.g", 1, d, false);
    add(p + "ln2.b", 1, d, false);
    add(p + "mlp.w1", d, ff, true);
    add(p + "mlp.b1", 1, ff, false);
    add(p + "mlp.w2", ff, d, true);
    add(p + "mlp.b2", 1, d, false);
  }
  add("lnf.g", 1, d, false);
  add("lnf.b", 1, d, false);
  params_.assign(offset, T(0));
}

template <typename T>
void Transformer<T>::init(Rng& rng) {
  const double proj_scale = 0.02 / std::sqrt(2.0 * cfg_.layers);
  for (const auto& info : tensors_) {
    T* p = params_.data() + info.offset;
    const bool gain = info.name.ends_with(".g");
    const bool bias = info.rows == 1 && !gain;
    const bool proj = info.name.ends_with("attn.wo") || info.name.ends_with("mlp.w2");
    for (std::size_t i = 0; i < info.size(); ++i) {
      if (gain) {
        p[i] = T(1);
      } else if (bias) {
        p[i] = T(0);
      } else {
        p[i] = static_cast<T>(normal01(rng) * (proj ? proj_scale : 0.02));
      }
    }
  }
}

template <typename T>
typename Transformer<T>::LayerView Transformer<T>::layer(int l) const {
  const std::size_t base = 2 + static_cast<std::size_t>(l) * kPerLayer;
  auto vec = [&](int slot) {
    const auto& info = tensors_[base + slot];
    return Eigen::Map<const RowVec>(params_.data() + info.offset, info.cols);
  };
  auto mat = [&](int slot) {
    const auto& info = tensors_[base + slot];
    return Eigen::Map<const Mat>(params_.data() + info.offset, info.rows, info.cols);
  };
  return LayerView{vec(kLn1G), vec(kLn1B), mat(kWqkv), vec(kBqkv), mat(kWo), vec(kBo),
                   vec(kLn2G), vec(kLn2B), mat(kW1),   vec(kB1),   mat(kW2), vec(kB2)};
}

namespace {

template <typename Mat, typename Vec, typename Gain>
Mat layer_norm(const Mat& x, const Gain& g, const Gain& b, Mat* xhat_out, Vec* rstd_out) {
  using T = typename Mat::Scalar;
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Mat xhat(n, d);
  Vec rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T r = T(1) / std::sqrt(var + T(kLnEps));
    rstd(i) = r;
    xhat.row(i) = (x.row(i).array() - mean) * r;
  }
  Mat y = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
  if (xhat_out) *xhat_out = std::move(xhat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

// dx from dy for y = xhat * g + b; accumulates dg and db.
template <typename Mat, typename Vec, typename Gain, typename GradVec>
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& rstd, const Gain& g,
                        GradVec& dg, GradVec& db) {
  dg += (dy.array() * xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * g.array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const auto m1 = dxhat.row(i).mean();
    const auto m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <typename T>
T gelu(T x) {
  const T u = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T u = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  const T th = std::tanh(u);
  return T(0.5) * (T(1) + th) +
         T(0.5) * x * (T(1) - th * th) * T(kGeluC) * (T(1) + T(3 * kGeluA) * x * x);
}

inline bool mask_allows(const AttnMask& mask, int i, int j) {
  return mask.empty() ? j <= i : mask.allowed(i, j);
}

}  // namespace

template <typename T>
typename Transformer<T>::Mat Transformer<T>::embed(const Sequence<T>& seq) const {
  const int n = seq.size();
  const int d = cfg_.model_dim;
  if (n > cfg_.max_seq) throw std::invalid_argument("sequence longer than max_seq");
  if (!seq.targets.empty() && static_cast<int>(seq.targets.size()) != n) {
    throw std::invalid_argument("targets size does not match ids");
  }
  if (!seq.mask.empty() && seq.mask.size() != n) {
    throw std::invalid_argument("attention mask size does not match ids");
  }
  Eigen::Map<const Mat> tok(tensor(0), cfg_.vocab_size, d);
  Eigen::Map<const Mat> pos(tensor(1), cfg_.max_seq, d);
  Mat x(n, d);
  for (int i = 0; i < n; ++i) {
    const int id = seq.ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= cfg_.vocab_size) throw std::invalid_argument("token id out of range");
    x.row(i) = tok.row(id) + pos.row(i);
  }
  for (const auto& [p, v] : seq.injections) {
    if (p < 0 || p >= n || static_cast<int>(v.size()) != d) {
      throw std::invalid_argument("bad injection");
    }
    x.row(p) = Eigen::Map<const RowVec>(v.data(), d) + pos.row(p);
  }
  return x;
}

template <typename T>
typename Transformer<T>::Mat Transformer<T>::run(const Sequence<T>& seq, Trace* trace,
                                                 AttentionMaps<T>* attention) const {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const int n = seq.size();
  const int d = cfg_.model_dim;
  const int heads = cfg_.heads;
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat x = embed(seq);
  if (trace) trace->layers.resize(static_cast<std::size_t>(cfg_.layers));
  if (attention) attention->assign(static_cast<std::size_t>(cfg_.layers), {});

  for (int l = 0; l < cfg_.layers; ++l) {
    const LayerView w = layer(l);
    Mat xhat1, xhat2;
    Vec rstd1, rstd2;
    Mat a = layer_norm<Mat, Vec>(x, w.ln1_g, w.ln1_b, &xhat1, &rstd1);
    Mat qkv = (a * w.wqkv).rowwise() + w.bqkv;
    Mat ctx(n, d);
    std::vector<Mat> probs;
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.middleCols(h * dh, dh);
      const auto k = qkv.middleCols(d + h * dh, dh);
      const auto v = qkv.middleCols(2 * d + h * dh, dh);
      Mat s = (q * k.transpose()) * scale;
      for (int i = 0; i < n; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (int j = 0; j < n; ++j) {
          if (mask_allows(seq.mask, i, j)) {
            mx = std::max(mx, s(i, j));
            any = true;
          }
        }
        if (!any) {
          s.row(i).setZero();
          s(i, i) = T(1);
          continue;
        }
        T sum = T(0);
        for (int j = 0; j < n; ++j) {
          if (mask_allows(seq.mask, i, j)) {
            s(i, j) = std::exp(s(i, j) - mx);
            sum += s(i, j);
          } else {
            s(i, j) = T(0);
          }
        }
        s.row(i) /= sum;
      }
      ctx.middleCols(h * dh, dh).noalias() = s * v;
      if (trace || attention) probs.push_back(std::move(s));
    }
    Mat x_mid = x + ((ctx * w.wo).rowwise() + w.bo);
    Mat b = layer_norm<Mat, Vec>(x_mid, w.ln2_g, w.ln2_b, &xhat2, &rstd2);
    Mat h1 = (b * w.w1).rowwise() + w.b1;
    Mat g = h1.unaryExpr([](T z) { return gelu(z); });
    Mat x_out = x_mid + ((g * w.w2).rowwise() + w.b2);
    if (attention) (*attention)[static_cast<std::size_t>(l)] = probs;
    if (trace) {
      auto& lt = trace->layers[static_cast<std::size_t>(l)];
      lt.x_in = std::move(x);
      lt.xhat1 = std::move(xhat1);
      lt.rstd1 = std::move(rstd1);
      lt.a = std::move(a);
      lt.qkv = std::move(qkv);
      lt.probs = std::move(probs);
      lt.ctx = std::move(ctx);
      lt.x_mid = std::move(x_mid);
      lt.xhat2 = std::move(xhat2);
      lt.rstd2 = std::move(rstd2);
      lt.b = std::move(b);
      lt.h1 = std::move(h1);
      lt.g = std::move(g);
    }
    x = std::move(x_out);
  }
  const std::size_t fi = tensors_.size() - 2;
  Eigen::Map<const RowVec> gf(tensor(fi), d);
  Eigen::Map<const RowVec> bf(tensor(fi + 1), d);
  Mat xhatf;
  Vec rstdf;
  Mat f = layer_norm<Mat, Vec>(x, gf, bf, &xhatf, &rstdf);
  if (trace) {
    trace->x_last = std::move(x);
    trace->xhatf = std::move(xhatf);
    trace->rstdf = std::move(rstdf);
    trace->f = f;
  }
  return f;
}

template <typename T>
typename Transformer<T>::Mat Transformer<T>::hidden_states(const Sequence<T>& seq,
                                                           AttentionMaps<T>* attention) const {
  return run(seq, nullptr, attention);
}

template <typename T>
typename Transformer<T>::Mat Transformer<T>::logits(const Sequence<T>& seq) const {
  Eigen::Map<const Mat> tok(tensor(0), cfg_.vocab_size, cfg_.model_dim);
  return run(seq, nullptr, nullptr) * tok.transpose();
}

namespace {

// Positions i whose logits predict a target at i + 1.
template <typename T>
std::vector<int> scored_rows(const Sequence<T>& seq) {
  std::vector<int> rows;
  if (seq.targets.empty()) return rows;
  for (int i = 1; i < seq.size(); ++i) {
    if (seq.targets[static_cast<std::size_t>(i)]) rows.push_back(i - 1);
  }
  return rows;
}

}  // namespace

template <typename T>
LossStats Transformer<T>::evaluate(const Sequence<T>& seq) const {
  LossStats stats;
  const auto rows = scored_rows(seq);
  if (rows.empty()) return stats;
  const Mat f = run(seq, nullptr, nullptr);
  Eigen::Map<const Mat> tok(tensor(0), cfg_.vocab_size, cfg_.model_dim);
  for (int r : rows) {
    const RowVec z = f.row(r) * tok.transpose();
    const T mx = z.maxCoeff();
    const double lse = static_cast<double>(mx) + std::log(static_cast<double>((z.array() - mx).exp().sum()));
    stats.loss_sum += lse - static_cast<double>(z(seq.ids[static_cast<std::size_t>(r + 1)]));
    stats.tokens += 1.0;
  }
  return stats;
}

template <typename T>
LossStats Transformer<T>::accumulate_gradients(const Sequence<T>& seq, double normaliser,
                                               std::span<T> grad,
                                               std::vector<std::vector<T>>* injection_grads) const {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using GMap = Eigen::Map<Mat>;
  using GVec = Eigen::Map<RowVec>;
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  LossStats stats;
  const auto rows = scored_rows(seq);
  const int n = seq.size();
  const int d = cfg_.model_dim;
  const int heads = cfg_.heads;
  const int dh = d / heads;
  if (rows.empty()) {
    if (injection_grads) {
      for (std::size_t k = 0; k < seq.injections.size(); ++k) {
        injection_grads->emplace_back(static_cast<std::size_t>(d), T(0));
      }
    }
    return stats;
  }
  if (!(normaliser > 0.0)) throw std::invalid_argument("normaliser must be positive");

  Trace tr;
  run(seq, &tr, nullptr);
  Eigen::Map<const Mat> tok(tensor(0), cfg_.vocab_size, d);
  auto gmat = [&](std::size_t index) {
    const auto& info = tensors_[index];
    return GMap(grad.data() + info.offset, info.rows, info.cols);
  };
  auto gvec = [&](std::size_t index) {
    const auto& info = tensors_[index];
    return GVec(grad.data() + info.offset, info.cols);
  };

  // Head and loss.
  const int r = static_cast<int>(rows.size());
  Mat fr(r, d);
  for (int k = 0; k < r; ++k) fr.row(k) = tr.f.row(rows[static_cast<std::size_t>(k)]);
  Mat z = fr * tok.transpose();
  const T inv_norm = static_cast<T>(1.0 / normaliser);
  for (int k = 0; k < r; ++k) {
    const int target = seq.ids[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)] + 1)];
    const T mx = z.row(k).maxCoeff();
    z.row(k) = (z.row(k).array() - mx).exp();
    const T sum = z.row(k).sum();
    stats.loss_sum += std::log(static_cast<double>(sum)) - static_cast<double>(std::log(z(k, target)));
    stats.tokens += 1.0;
    z.row(k) /= sum;
    z(k, target) -= T(1);
    z.row(k) *= inv_norm;
  }
  GMap g_tok = gmat(0);
  g_tok.noalias() += z.transpose() * fr;
  Mat df = Mat::Zero(n, d);
  Mat dfr = z * tok;
  for (int k = 0; k < r; ++k) df.row(rows[static_cast<std::size_t>(k)]) = dfr.row(k);

  const std::size_t fi = tensors_.size() - 2;
  Eigen::Map<const RowVec> gf(tensor(fi), d);
  GVec g_gf = gvec(fi);
  GVec g_bf = gvec(fi + 1);
  Mat dx = layer_norm_backward(df, tr.xhatf, tr.rstdf, gf, g_gf, g_bf);

  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const auto& lt = tr.layers[static_cast<std::size_t>(l)];
    const LayerView w = layer(l);
    const std::size_t base = 2 + static_cast<std::size_t>(l) * kPerLayer;

    // MLP.
    GMap g_w2 = gmat(base + kW2);
    g_w2.noalias() += lt.g.transpose() * dx;
    gvec(base + kB2) += dx.colwise().sum();
    Mat dg = dx * w.w2.transpose();
    Mat dh1 = dg.array() * lt.h1.unaryExpr([](T v) { return gelu_grad(v); }).array();
    GMap g_w1 = gmat(base + kW1);
    g_w1.noalias() += lt.b.transpose() * dh1;
    gvec(base + kB1) += dh1.colwise().sum();
    Mat db = dh1 * w.w1.transpose();
    GVec g_ln2g = gvec(base + kLn2G);
    GVec g_ln2b = gvec(base + kLn2B);
    Mat dx_mid = dx + layer_norm_backward(db, lt.xhat2, lt.rstd2, w.ln2_g, g_ln2g, g_ln2b);

    // Attention.
    GMap g_wo = gmat(base + kWo);
    g_wo.noalias() += lt.ctx.transpose() * dx_mid;
    gvec(base + kBo) += dx_mid.colwise().sum();
    Mat dctx = dx_mid * w.wo.transpose();
    Mat dqkv(n, 3 * d);
    for (int h = 0; h < heads; ++h) {
      const Mat& p = lt.probs[static_cast<std::size_t>(h)];
      const auto q = lt.qkv.middleCols(h * dh, dh);
      const auto k = lt.qkv.middleCols(d + h * dh, dh);
      const auto v = lt.qkv.middleCols(2 * d + h * dh, dh);
      const auto dc = dctx.middleCols(h * dh, dh);
      Mat dp = dc * v.transpose();
      dqkv.middleCols(2 * d + h * dh, dh).noalias() = p.transpose() * dc;
      Vec rowdot = (dp.array() * p.array()).rowwise().sum();
      Mat ds = (p.array() * (dp.array().colwise() - rowdot.array())) * scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(d + h * dh, dh).noalias() = ds.transpose() * q;
    }
    GMap g_wqkv = gmat(base + kWqkv);
    g_wqkv.noalias() += lt.a.transpose() * dqkv;
    gvec(base + kBqkv) += dqkv.colwise().sum();
    Mat da = dqkv * w.wqkv.transpose();
    GVec g_ln1g = gvec(base + kLn1G);
    GVec g_ln1b = gvec(base + kLn1B);
    dx = dx_mid + layer_norm_backward(da, lt.xhat1, lt.rstd1, w.ln1_g, g_ln1g, g_ln1b);
  }

  // Embeddings.
  GMap g_pos = gmat(1);
  g_pos.topRows(n) += dx;
  std::vector<std::uint8_t> injected(static_cast<std::size_t>(n), 0);
  for (const auto& inj : seq.injections) injected[static_cast<std::size_t>(inj.first)] = 1;
  for (int i = 0; i < n; ++i) {
    if (!injected[static_cast<std::size_t>(i)]) g_tok.row(seq.ids[static_cast<std::size_t>(i)]) += dx.row(i);
  }
  if (injection_grads) {
    for (const auto& inj : seq.injections) {
      std::vector<T> gv(static_cast<std::size_t>(d));
      Eigen::Map<RowVec>(gv.data(), d) = dx.row(inj.first);
      injection_grads->push_back(std::move(gv));
    }
  }
  return stats;
}

template <typename T>
typename Transformer<T>::DecodeState Transformer<T>::start_decode() const {
  DecodeState state;
  state.keys.assign(static_cast<std::size_t>(cfg_.layers), Mat(cfg_.max_seq, cfg_.model_dim));
  state.values.assign(static_cast<std::size_t>(cfg_.layers), Mat(cfg_.max_seq, cfg_.model_dim));
  return state;
}

template <typename T>
typename Transformer<T>::RowVec Transformer<T>::prefill(DecodeState& state,
                                                        const Sequence<T>& prompt) const {
  if (prompt.size() == 0) throw std::invalid_argument("empty prompt");
  if (state.keys.empty()) state = start_decode();
  Trace tr;
  const Mat f = run(prompt, &tr, nullptr);
  const int n = prompt.size();
  const int d = cfg_.model_dim;
  for (int l = 0; l < cfg_.layers; ++l) {
    const auto& qkv = tr.layers[static_cast<std::size_t>(l)].qkv;
    state.keys[static_cast<std::size_t>(l)].topRows(n) = qkv.middleCols(d, d);
    state.values[static_cast<std::size_t>(l)].topRows(n) = qkv.middleCols(2 * d, d);
  }
  state.length = n;
  Eigen::Map<const Mat> tok(tensor(0), cfg_.vocab_size, d);
  return f.row(n - 1) * tok.transpose();
}

template <typename T>
typename Transformer<T>::RowVec Transformer<T>::step(DecodeState& state, int token) const {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const int d = cfg_.model_dim;
  const int heads = cfg_.heads;
  const int dh = d / heads;
  const int pos = state.length;
  if (pos >= cfg_.max_seq) throw std::length_error("decode state is full");
  if (token < 0 || token >= cfg_.vocab_size) throw std::invalid_argument("token id out of range");
  Eigen::Map<const Mat> tok(tensor(0), cfg_.vocab_size, d);
  Eigen::Map<const Mat> pe(tensor(1), cfg_.max_seq, d);
  Mat x = tok.row(token) + pe.row(pos);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (int l = 0; l < cfg_.layers; ++l) {
    const LayerView w = layer(l);
    Mat a = layer_norm<Mat, Vec>(x, w.ln1_g, w.ln1_b, nullptr, nullptr);
    RowVec qkv = a * w.wqkv + w.bqkv;
    auto& keys = state.keys[static_cast<std::size_t>(l)];
    auto& values = state.values[static_cast<std::size_t>(l)];
    keys.row(pos) = qkv.segment(d, d);
    values.row(pos) = qkv.segment(2 * d, d);
    RowVec ctx(d);
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.segment(h * dh, dh);
      RowVec s = (keys.block(0, h * dh, pos + 1, dh) * q.transpose()).transpose() * scale;
      s = (s.array() - s.maxCoeff()).exp();
      s /= s.sum();
      ctx.segment(h * dh, dh) = s * values.block(0, h * dh, pos + 1, dh);
    }
    Mat x_mid = x + (ctx * w.wo + w.bo);
    Mat b = layer_norm<Mat, Vec>(x_mid, w.ln2_g, w.ln2_b, nullptr, nullptr);
    Mat g = ((b * w.w1).rowwise() + w.b1).unaryExpr([](T z) { return gelu(z); });
    x = x_mid + ((g * w.w2).rowwise() + w.b2);
  }
  const std::size_t fi = tensors_.size() - 2;
  Eigen::Map<const RowVec> gf(tensor(fi), d);
  Eigen::Map<const RowVec> bf(tensor(fi + 1), d);
  Mat f = layer_norm<Mat, Vec>(x, gf, bf, nullptr, nullptr);
  state.length = pos + 1;
  return f.row(0) * tok.transpose();
}

template <typename T>
void AdamW<T>::update(std::span<T> params, std::span<const T> grad,
                      const std::vector<TensorInfo>& tensors) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("optimizer state size mismatch");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
  const T lr = static_cast<T>(opt_.lr);
  const T b1 = static_cast<T>(opt_.beta1);
  const T b2 = static_cast<T>(opt_.beta2);
  const T eps = static_cast<T>(opt_.eps);
  const T c1 = static_cast<T>(1.0 / bc1);
  const T c2 = static_cast<T>(1.0 / bc2);
  for (const auto& info : tensors) {
    const T decay = info.decay ? static_cast<T>(opt_.lr * opt_.weight_decay) : T(0);
    for (std::size_t i = info.offset; i < info.offset + info.size(); ++i) {
      const T g = grad[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
      params[i] -= decay * params[i];
      params[i] -= lr * (m_[i] * c1) / (std::sqrt(v_[i] * c2) + eps);
    }
  }
}

template <typename T>
double clip_grad_norm(std::span<T> grad, double max_norm) {
  double sq = 0.0;
  for (T g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-12));
    for (T& g : grad) g *= s;
  }
  return norm;
}

template class Transformer<float>;
template class Transformer<double>;
template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(std::span<float>, double);
template double clip_grad_norm<double>(std::span<double>, double);

}  // namespace ehrtraj::nn

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ehrtraj/mask.hpp"
#include "ehrtraj/random.hpp"

namespace ehrtraj::nn {

struct TransformerConfig {
  int vocab_size = 0;
  int max_seq = 512;
  int layers = 4;
  int heads = 4;
  int model_dim = 128;
  int ff_dim = 512;

  void check() const;
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  bool decay = false;  // receives weight decay
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// One training or inference sequence. `targets[i]` marks ids[i] as a
/// prediction target (scored from the logits at i - 1). Injected positions
/// replace the token embedding with a caller-supplied vector.
template <typename T>
struct Sequence {
  std::vector<int> ids;
  std::vector<std::uint8_t> targets;
  std::vector<std::pair<int, std::vector<T>>> injections;
  AttnMask mask;  // empty means causal

  int size() const { return static_cast<int>(ids.size()); }
};

/// Per-layer, per-head attention probabilities of one forward pass.
template <typename T>
using AttentionMaps =
    std::vector<std::vector<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>>;

struct LossStats {
  double loss_sum = 0.0;  // summed negative log-likelihood
  double tokens = 0.0;    // number of scored targets
  double mean() const { return tokens > 0 ? loss_sum / tokens : 0.0; }
};

/// Flat buffer with a fixed base alignment. Tensor offsets then have the same
/// alignment in every run, so vectorised reductions sum in the same order and
/// results do not depend on where the allocator put the buffer.
template <typename T>
using ParamBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Pre-norm decoder-only transformer with learned positions, GELU MLPs and a
/// language-model head tied to the token embedding. All parameters live in a
/// single flat buffer described by tensors().
template <typename T>
class Transformer {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  Transformer() = default;
  explicit Transformer(const TransformerConfig& cfg);

  void init(Rng& rng);

  const TransformerConfig& config() const { return cfg_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  /// Final (post-norm) hidden states, one row per position.
  Mat hidden_states(const Sequence<T>& seq, AttentionMaps<T>* attention = nullptr) const;

  /// Logits for every position.
  Mat logits(const Sequence<T>& seq) const;

  /// Accumulates d(loss_sum / normaliser)/d(params) into `grad` and returns the
  /// unnormalised loss. When `injection_grads` is given it receives one
  /// gradient vector per injection of each sequence.
  LossStats accumulate_gradients(const Sequence<T>& seq, double normaliser, std::span<T> grad,
                                 std::vector<std::vector<T>>* injection_grads = nullptr) const;

  /// Scored loss without gradients.
  LossStats evaluate(const Sequence<T>& seq) const;

  /// Incremental causal decoding.
  struct DecodeState {
    std::vector<Mat> keys;    // per layer, max_seq x d
    std::vector<Mat> values;  // per layer, max_seq x d
    int length = 0;
  };
  DecodeState start_decode() const;
  /// Runs the prompt (causal) and returns logits of its last position.
  RowVec prefill(DecodeState& state, const Sequence<T>& prompt) const;
  /// Appends one token and returns its logits.
  RowVec step(DecodeState& state, int token) const;

 private:
  struct LayerView;
  struct Trace;

  LayerView layer(int l) const;
  const T* tensor(std::size_t index) const { return params_.data() + tensors_[index].offset; }
  void build_layout();
  Mat embed(const Sequence<T>& seq) const;
  Mat run(const Sequence<T>& seq, Trace* trace, AttentionMaps<T>* attention) const;

  TransformerConfig cfg_;
  std::vector<TensorInfo> tensors_;
  ParamBuffer<T> params_;
};

/// AdamW over a flat parameter buffer.
template <typename T>
class AdamW {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  AdamW(std::size_t n, Options options) : opt_(options), m_(n, T(0)), v_(n, T(0)) {}

  void update(std::span<T> params, std::span<const T> grad, const std::vector<TensorInfo>& tensors);

  Options& options() { return opt_; }
  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }
  std::vector<T>& first_moment() { return m_; }
  std::vector<T>& second_moment() { return v_; }
  const std::vector<T>& first_moment() const { return m_; }
  const std::vector<T>& second_moment() const { return v_; }

 private:
  Options opt_;
  std::vector<T> m_;
  std::vector<T> v_;
  long step_ = 0;
};

/// Rescales grad in place so that its L2 norm is at most max_norm; returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(std::span<T> grad, double max_norm);

}  // namespace ehrtraj::nn

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ehrtraj/mask.hpp"
#include "ehrtraj/transformer.hpp"

using namespace ehrtraj;
using namespace ehrtraj::nn;

namespace {

TransformerConfig tiny(int layers = 1, int dim = 16) {
  TransformerConfig c;
  c.vocab_size = 11;
  c.max_seq = 16;
  c.layers = layers;
  c.heads = 2;
  c.model_dim = dim;
  c.ff_dim = 2 * dim;
  return c;
}

Sequence<double> sample_sequence(bool bottleneck) {
  Sequence<double> s;
  s.ids = {1, 7, 8, 9, 3, 3, 5, 10, 6, 2};
  s.targets = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
  if (bottleneck) s.mask = bottleneck_mask({4, 2, 4});
  return s;
}

double loss_of(const Transformer<double>& model, const Sequence<double>& s) {
  return model.evaluate(s).loss_sum;
}

}  // namespace

TEST(Transformer, LayoutCountsParameters) {
  Transformer<float> model(tiny());
  const int d = 16, ff = 32, v = 11, s = 16;
  const std::size_t expected = v * d + s * d + (2 * d + d * 3 * d + 3 * d + d * d + d + 2 * d +
                                                d * ff + ff + ff * d + d) + 2 * d;
  EXPECT_EQ(model.num_params(), expected);
}

TEST(Transformer, LogitsShape) {
  Transformer<float> model(tiny());
  Rng rng(1);
  model.init(rng);
  Sequence<float> s;
  s.ids = {1, 2, 3};
  const auto z = model.logits(s);
  EXPECT_EQ(z.rows(), 3);
  EXPECT_EQ(z.cols(), 11);
}

TEST(Transformer, GradientMatchesFiniteDifferences) {
  Transformer<double> model(tiny(1, 16));
  Rng rng(3);
  model.init(rng);
  // Larger weights make the check sensitive to every term.
  for (auto& p : model.params()) p += 0.05 * normal01(rng);
  for (bool bottleneck : {false, true}) {
    const auto seq = sample_sequence(bottleneck);
    std::vector<double> grad(model.num_params(), 0.0);
    model.accumulate_gradients(seq, 1.0, grad);
    auto params = model.params();
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t i = 0; i < params.size(); i += 7) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = loss_of(model, seq);
      params[i] = saved - h;
      const double down = loss_of(model, seq);
      params[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      if (std::abs(fd) < 1e-9 && std::abs(grad[i]) < 1e-9) continue;
      EXPECT_LT(std::abs(fd - grad[i]) / denom, 1e-3) << "param " << i;
      ++checked;
    }
    EXPECT_GT(checked, 100);
  }
}

TEST(Transformer, InjectionGradientMatchesFiniteDifferences) {
  Transformer<double> model(tiny(2, 8));
  Rng rng(5);
  model.init(rng);
  Sequence<double> s;
  s.ids = {1, 3, 3, 4, 7, 8};
  s.targets = {0, 0, 0, 0, 1, 1};
  std::vector<double> a(8), b(8);
  for (auto& v : a) v = normal01(rng);
  for (auto& v : b) v = normal01(rng);
  s.injections = {{1, a}, {2, b}};
  std::vector<double> grad(model.num_params(), 0.0);
  std::vector<std::vector<double>> ig;
  model.accumulate_gradients(s, 1.0, grad, &ig);
  ASSERT_EQ(ig.size(), 2u);
  const double h = 1e-5;
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 8; ++j) {
      auto up = s, down = s;
      up.injections[k].second[j] += h;
      down.injections[k].second[j] -= h;
      const double fd = (loss_of(model, up) - loss_of(model, down)) / (2 * h);
      EXPECT_NEAR(fd, ig[k][j], 1e-6 + 1e-4 * std::abs(fd));
    }
  }
}

TEST(Transformer, EmptyTargetsGiveZeroLossAndGradient) {
  Transformer<double> model(tiny());
  Rng rng(2);
  model.init(rng);
  Sequence<double> s;
  s.ids = {1, 4, 5};
  s.targets = {0, 0, 0};
  std::vector<double> grad(model.num_params(), 0.0);
  const auto stats = model.accumulate_gradients(s, 1.0, grad);
  EXPECT_EQ(stats.loss_sum, 0.0);
  for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(Transformer, CausalLogitsIgnoreLaterTokens) {
  Transformer<float> model(tiny(2));
  Rng rng(9);
  model.init(rng);
  Sequence<float> a;
  a.ids = {1, 5, 6, 7, 8, 9};
  auto b = a;
  b.ids[4] = 2;
  b.ids[5] = 3;
  const auto za = model.logits(a);
  const auto zb = model.logits(b);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(za.row(k), zb.row(k)) << k;
  }
}

TEST(Transformer, BottleneckAttentionIsZeroOnInputs) {
  Transformer<float> model(tiny(2));
  Rng rng(4);
  model.init(rng);
  Sequence<float> s;
  s.ids = {7, 8, 9, 10, 3, 3, 5, 6, 7};
  const MaskSpec spec{4, 2, 3};
  s.mask = bottleneck_mask(spec);
  AttentionMaps<float> maps;
  model.hidden_states(s, &maps);
  ASSERT_EQ(maps.size(), 2u);
  for (const auto& layer : maps) {
    for (const auto& p : layer) {
      for (int i = spec.n + spec.m; i < spec.total(); ++i) {
        for (int j = 0; j < spec.n; ++j) EXPECT_EQ(p(i, j), 0.0f);
      }
    }
  }
}

TEST(Transformer, IncrementalDecodingMatchesFullForward) {
  Transformer<double> model(tiny(2));
  Rng rng(8);
  model.init(rng);
  Sequence<double> s;
  s.ids = {1, 4, 5, 6, 7, 8};
  std::vector<double> inj(16, 0.3);
  s.injections = {{1, inj}};
  const auto full = model.logits(s);
  auto state = model.start_decode();
  Sequence<double> prompt = s;
  prompt.ids.resize(3);
  auto z = model.prefill(state, prompt);
  EXPECT_LT((z - full.row(2)).cwiseAbs().maxCoeff(), 1e-10);
  for (int k = 3; k < 6; ++k) {
    z = model.step(state, s.ids[k]);
    EXPECT_LT((z - full.row(k)).cwiseAbs().maxCoeff(), 1e-10) << k;
  }
}

TEST(Transformer, OverfitsSingleSequence) {
  Transformer<float> model(tiny(1, 16));
  Rng rng(11);
  model.init(rng);
  Sequence<float> s;
  s.ids = {1, 7, 8, 9, 10, 6, 2};
  s.targets = {0, 1, 1, 1, 1, 1, 1};
  AdamW<float> opt(model.num_params(), {.lr = 1e-2, .weight_decay = 0.0});
  std::vector<float> grad(model.num_params());
  double loss = 0;
  for (int it = 0; it < 200; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0f);
    loss = model.accumulate_gradients(s, 6.0, grad).mean();
    opt.update(model.params(), grad, model.tensors());
  }
  EXPECT_LT(loss, 0.01);
}

TEST(Optim, ClipGradNorm) {
  std::vector<double> g{3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-12);
  EXPECT_NEAR(g[1], 0.8, 1e-12);
}

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ehrtraj/synth.hpp"
#include "ehrtraj/tasks.hpp"
#include "ehrtraj/training.hpp"

namespace ehrtraj {

using ProgressFn = std::function<void(const std::string&)>;

struct SummarizerSetup {
  nn::TransformerConfig net;  // vocab_size is filled from the vocabulary
  int m = 8;
  int output_reserve = 64;
  TrainOptions train;
  std::size_t val_samples = 200;
};

struct TrainedSummarizer {
  Summarizer model;
  TrainResult result;
  long step = 0;
  nn::AdamW<float> optimizer;
};

/// Trains the bottleneck summarizer on next-hour section outputs of `train`
/// and reports loss on up to val_samples section samples of `val`.
TrainedSummarizer train_summarizer(const std::vector<PatientRecord>& train, const std::vector<PatientRecord>& val,
                                   const Vocab& vocab, const SummarizerSetup& setup,
                                   const CurveFn& on_point = {});

struct PathwaySetup {
  nn::TransformerConfig net;  // vocab_size is filled from the vocabulary
  PathwayConfig pathway;
  TrainOptions train;
  PathwayAugment augment{true, 1.0 / 3.0, 1.0 / 3.0};
  double transition_boost = 4.0;
  bool weighted = true;
  std::size_t val_samples = 100;
};

struct TrainedPathway {
  PathwayModel model;
  TrainResult result;
  long step = 0;
  nn::AdamW<float> optimizer;
};

/// Trains a pathway model from scratch (or continues `resume`) on `pool`, or
/// on rarity-weighted next-hour examples of `train` when the pool is empty.
TrainedPathway train_pathway(const std::vector<PatientRecord>& train, const std::vector<PatientRecord>& val,
                             const Vocab& vocab, const PathwaySetup& setup, const Summarizer* summarizer,
                             std::vector<PathwayExample> pool = {}, TrainedPathway* resume = nullptr,
                             const CurveFn& on_point = {});

Checkpoint to_checkpoint(const TrainedSummarizer& s);
Checkpoint to_checkpoint(const TrainedPathway& p);
TrainedSummarizer summarizer_state(const Checkpoint& c);
TrainedPathway pathway_state(const Checkpoint& c);

// Ablations

struct BottleneckSweepConfig {
  CohortConfig cohort;
  std::vector<int> ms{1, 8};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SummarizerSetup setup;
  double val_fraction = 0.2;
};

struct BottleneckRow {
  int m = 0;
  std::uint64_t seed = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Desk-scale sweep: 120 ED-only patients with four slowly switching
/// categorical features, a 2-layer single-head dim-32 summarizer and 6000
/// steps per run.
BottleneckSweepConfig toy_bottleneck_config();

std::vector<BottleneckRow> bottleneck_sweep(const BottleneckSweepConfig& cfg, const ProgressFn& progress = {});
std::string bottleneck_table(const std::vector<BottleneckRow>& rows);

struct LosAblationConfig {
  CohortConfig cohort;
  PathwaySetup setup;  // include_los is set per arm
  std::size_t rollouts = 200;
  DecodeConfig decode;
  /// Rollout step cap; 0 uses the longest training stay.
  int step_cap = 0;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct LosAblationRow {
  bool with_los = false;
  std::size_t rollouts = 0;
  std::size_t converged = 0;
  std::size_t step_cap = 0;
  std::size_t parse_failure = 0;
  int cap = 0;
  double train_loss = 0.0;
  double converged_rate() const {
    return rollouts ? static_cast<double>(converged) / static_cast<double>(rollouts) : 0.0;
  }
};

/// Desk-scale ablation: 60 ED-only patients whose stays end with a constant
/// hourly hazard (1 to 30 hours), so elapsed time says little about the end.
LosAblationConfig toy_los_config();

std::vector<LosAblationRow> los_ablation(const LosAblationConfig& cfg, const ProgressFn& progress = {});
std::string los_table(const std::vector<LosAblationRow>& rows);

}  // namespace ehrtraj

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ehrtraj/model.hpp"
#include "ehrtraj/sampling.hpp"

namespace ehrtraj {

struct TrainOptions {
  long steps = 1000;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double clip = 1.0;
  int warmup = 0;        // linear warmup steps
  int eval_every = 100;  // 0 disables periodic validation
  std::uint64_t seed = 1;

  Json to_json() const;
};

struct CurvePoint {
  long step = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  double final_loss = 0.0;  // mean over the last evaluation interval
  std::optional<double> val_loss;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Token-weighted mean loss over a fixed set of sequences.
double mean_loss(const Net& net, const std::vector<Seq>& seqs);

using SampleFn = std::function<Seq(Rng&)>;
using CurveFn = std::function<void(const CurvePoint&)>;

/// AdamW on mini-batches drawn from `draw`; `step` is the persistent step
/// counter (resumed runs continue from it). Each batch's loss is normalised
/// by its scored token count. Non-finite losses abort with TrainingError.
TrainResult train_loop(Net& net, nn::AdamW<float>& opt, long& step, const SampleFn& draw,
                       const std::vector<Seq>& val, const TrainOptions& options, const CurveFn& on_point = {});

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

/// Vocabulary over rendered inputs, outputs and section blocks of the cohort
/// plus any extra strings.
Vocab corpus_vocab(const std::vector<PatientRecord>& cohort, const std::vector<std::string>& extra = {},
                   int stride = 1);

Net make_net(const nn::TransformerConfig& cfg, Rng& rng);

// Summarizer samples: the full-history section text at t and the section's
// output at t + 1.

struct SectionSample {
  std::size_t patient = 0;
  int t = 0;
  Unit unit = Unit::ED;
  std::string category;
};

std::vector<SectionSample> section_samples(const std::vector<PatientRecord>& cohort);

/// Bottleneck training sequence for one sample; the most recent block is
/// used when the section is longer than one block. nullopt if the output
/// does not fit.
std::optional<Seq> summarizer_sequence(const Summarizer& s, const PatientRecord& record,
                                       const SectionSample& sample);

// Pathway samples

/// One training example: input at tp.t and either the next-hour output or a
/// fixed target (outcome fine-tuning).
struct PathwayExample {
  TimePoint tp;
  std::optional<std::string> target;
  double weight = 1.0;
};

struct PathwayAugment {
  bool los = true;         // drop/noise LOS augmentation (if the model uses LOS)
  double drop_text = 0.0;  // SUMM_TEXT only
  double drop_summaries = 0.0;
};

/// Builds pathway sequences, caching summaries per (patient, t).
class PathwaySampler {
 public:
  PathwaySampler(const std::vector<PatientRecord>& cohort, const PathwayModel& model,
                 const Summarizer* summarizer, std::vector<PathwayExample> pool, PathwayAugment augment);

  /// Weighted draw from the pool; retries when a sample exceeds max_seq.
  Seq draw(Rng& rng);
  /// Deterministic sequence without augmentation (LOS as recorded).
  std::optional<Seq> build(const PathwayExample& ex, Rng* rng);
  std::size_t pool_size() const { return pool_.size(); }
  std::size_t skipped() const { return skipped_; }

  /// Target text for the next hour of a timepoint, honouring include_los.
  std::string next_hour_target(const TimePoint& tp) const;

 private:
  const SummaryState& summaries(const TimePoint& tp);

  const std::vector<PatientRecord>& cohort_;
  const PathwayModel& model_;
  const Summarizer* summarizer_;
  std::vector<PathwayExample> pool_;
  std::vector<double> cumulative_;
  PathwayAugment augment_;
  std::map<std::pair<std::size_t, int>, SummaryState> cache_;
  std::size_t skipped_ = 0;
};

/// Rarity-weighted next-hour examples over every timepoint of the cohort.
std::vector<PathwayExample> next_hour_pool(const std::vector<PatientRecord>& cohort,
                                           const SampleWeightTable& table);

/// The record the model sees for predicting hour t + 1: snapshot at t with
/// the true remaining LOS (training inputs) or with LOS cleared (inference).
PatientRecord training_view(const PatientRecord& record, int t);
PatientRecord inference_view(const PatientRecord& record, int t);

}  // namespace ehrtraj

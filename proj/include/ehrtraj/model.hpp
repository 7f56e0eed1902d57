#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrtraj/codec.hpp"
#include "ehrtraj/io.hpp"
#include "ehrtraj/metrics.hpp"
#include "ehrtraj/random.hpp"
#include "ehrtraj/transformer.hpp"
#include "ehrtraj/vocab.hpp"

namespace ehrtraj {

using Net = nn::Transformer<float>;
using Seq = nn::Sequence<float>;

/// TEXT reads the recent window as text, SUMM reads per-section summaries,
/// SUMM_TEXT reads both.
enum class Variant { Text, Summ, SummText };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);
inline bool uses_summaries(Variant v) { return v != Variant::Text; }
inline bool uses_text(Variant v) { return v != Variant::Summ; }

struct DecodeConfig {
  double temperature = 0.7;  // 0 selects greedy decoding
  int top_k = 20;
  double top_p = 0.8;
  int max_new_tokens = 256;

  static DecodeConfig greedy() { return {0.0, 1, 1.0, 256}; }
};

/// Picks the next token from logits. Reserved ids other than EOS are never
/// produced.
int sample_token(std::span<const float> logits, const DecodeConfig& cfg, Rng& rng);

struct Generation {
  std::vector<int> ids;
  std::string text;
  bool hit_eos = false;
};

/// Decodes after `prompt` until EOS, max_new_tokens or the context limit.
Generation generate(const Net& net, const Vocab& vocab, const Seq& prompt, const DecodeConfig& cfg,
                    Rng& rng);

/// Summary vectors of one (unit, category) section: blocks * m rows.
struct SummaryBlock {
  Unit unit = Unit::ED;
  std::string category;
  std::vector<std::vector<float>> vectors;
};
using SummaryState = std::vector<SummaryBlock>;

/// Compresses section text into m hidden states per block via the bottleneck
/// mask. Trained to predict the section's next-hour output from those states
/// only.
class Summarizer {
 public:
  Summarizer() = default;
  Summarizer(Net net, Vocab vocab, int m, int output_reserve);

  int m() const { return m_; }
  int output_reserve() const { return output_reserve_; }
  /// Section tokens that fit in one block next to m summary slots and the
  /// output reserve.
  int block_tokens() const;
  const Net& net() const { return net_; }
  Net& net() { return net_; }
  const Vocab& vocab() const { return vocab_; }

  std::vector<std::vector<int>> split_blocks(std::string_view section_text) const;

  /// [block tokens | m SUM] with the bottleneck mask and no output.
  Seq summary_sequence(std::span<const int> block) const;
  /// As above followed by OUT, the output tokens and EOS, which are scored.
  Seq training_sequence(std::span<const int> block, std::string_view output_text) const;

  std::vector<std::vector<float>> summarize_block(std::span<const int> block) const;
  SummaryBlock summarize_section(Unit unit, const std::string& category,
                                 std::string_view section_text) const;
  /// Full-history summaries of every section recorded at or before t.
  SummaryState summarize_record(const PatientRecord& record, int t) const;

 private:
  Net net_;
  Vocab vocab_;
  int m_ = 8;
  int output_reserve_ = 64;
};

struct PathwayConfig {
  Variant variant = Variant::Text;
  std::optional<int> window_hours = 24;  // text window; nullopt = full history
  bool include_los = true;
  double los_noise_pct = 0.2;
  double los_drop_prob = 0.5;
  int m = 8;  // summary slots per block, must match the summarizer

  Json to_json() const;
  static PathwayConfig from_json(const Json& j);
};

struct AssemblyOptions {
  bool drop_text = false;
  bool drop_summaries = false;
  /// Training-time LOS augmentation; when null the record's LOS is rendered
  /// as is.
  Rng* los_rng = nullptr;
};

struct Assembled {
  Seq seq;          // ends with OUT; no targets
  TokenCounts counts;
};

/// Builds the prompt for predicting hour t + 1.
///  TEXT:      BOS text OUT
///  SUMM:      BOS (SEP SUM*m)* skeleton OUT
///  SUMM_TEXT: BOS (SEP SUM*m)* text OUT
/// where skeleton is the text without category blocks. Dropping the text of
/// SUMM_TEXT therefore yields SUMM, and dropping its summaries yields TEXT.
Assembled assemble_pathway_input(const PatientRecord& record, int t, const PathwayConfig& cfg,
                                 const Vocab& vocab, const SummaryState* summaries,
                                 const AssemblyOptions& opts = {});

/// Record with every unit's LOS replaced by the true remaining stay at t
/// (cleared where the unit is inactive or its end is unknown).
PatientRecord with_true_los(const PatientRecord& record, int t);

/// Removes LOS values from an output.
TimestepOutput strip_los(TimestepOutput out);

class PathwayModel {
 public:
  PathwayModel() = default;
  PathwayModel(Net net, Vocab vocab, PathwayConfig cfg);

  const Net& net() const { return net_; }
  Net& net() { return net_; }
  const Vocab& vocab() const { return vocab_; }
  const PathwayConfig& config() const { return cfg_; }

  /// Prompt followed by the scored target text and EOS. Returns nullopt when
  /// it does not fit in max_seq.
  std::optional<Seq> training_sequence(const Assembled& input, std::string_view target_text) const;

 private:
  Net net_;
  Vocab vocab_;
  PathwayConfig cfg_;
};

// Checkpoints

struct Checkpoint {
  std::string role;  // "summarizer" or "pathway"
  nn::TransformerConfig net;
  Vocab vocab;
  Json meta = Json::object();  // role-specific settings
  long step = 0;
  std::vector<float> params;
  std::vector<float> adam_m;  // empty when no optimiser state was saved
  std::vector<float> adam_v;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Net net_from_checkpoint(const Checkpoint& ckpt);
Summarizer summarizer_from_checkpoint(const Checkpoint& ckpt);
PathwayModel pathway_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ehrtraj

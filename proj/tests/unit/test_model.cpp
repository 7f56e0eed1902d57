#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ehrtraj/model.hpp"
#include "ehrtraj/training.hpp"
#include "tiny.hpp"

using namespace ehrtraj;

namespace {

struct Fixture {
  std::vector<PatientRecord> cohort = generate_cohort(fixtures::tiny_cohort(4, 21, 5, 8));
  Vocab vocab = corpus_vocab(cohort);
  Rng rng{3};
  Summarizer summarizer{make_net(fixtures::tiny_net(vocab.size(), 192), rng), vocab, 2, 48};

  PathwayConfig cfg(Variant v) const {
    PathwayConfig c;
    c.variant = v;
    c.m = 2;
    return c;
  }
};

std::vector<float> random_logits(Rng& rng, int n) {
  std::vector<float> z(static_cast<std::size_t>(n));
  for (auto& v : z) v = static_cast<float>(normal01(rng) * 2);
  return z;
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (Variant v : {Variant::Text, Variant::Summ, Variant::SummText}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_EQ(parse_variant("summ+text"), Variant::SummText);
  EXPECT_EQ(parse_variant("e2p"), std::nullopt);
}

TEST(Sampling, GreedyNeverPicksReservedIds) {
  std::vector<float> z(20, 0.0f);
  z[kSum] = 50.0f;
  z[kBos] = 40.0f;
  z[kEos] = 10.0f;
  z[12] = 5.0f;
  Rng rng(1);
  EXPECT_EQ(sample_token(z, DecodeConfig::greedy(), rng), kEos);
  z[kEos] = 0.0f;
  EXPECT_EQ(sample_token(z, DecodeConfig::greedy(), rng), 12);
  DecodeConfig hot{5.0, 0, 1.0, 10};
  for (int i = 0; i < 500; ++i) {
    const int t = sample_token(z, hot, rng);
    EXPECT_TRUE(t == kEos || !Vocab::is_reserved(t));
  }
}

TEST(Sampling, TopKOneIsGreedy) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto z = random_logits(rng, 30);
    DecodeConfig k1{0.7, 1, 0.8, 10};
    EXPECT_EQ(sample_token(z, k1, rng), sample_token(z, DecodeConfig::greedy(), rng));
  }
}

TEST(Sampling, FrequenciesFollowTemperedSoftmax) {
  // Oracle: softmax(z / T) over non-reserved ids.
  std::vector<float> z(kNumReserved + 3, -100.0f);
  z[kEos] = -100.0f;
  z[kNumReserved + 0] = 1.0f;
  z[kNumReserved + 1] = 0.5f;
  z[kNumReserved + 2] = -0.5f;
  const double temp = 0.8;
  double zsum = 0;
  std::vector<double> want(3);
  for (int i = 0; i < 3; ++i) zsum += want[i] = std::exp(z[kNumReserved + i] / temp);
  for (auto& w : want) w /= zsum;
  Rng rng(11);
  std::vector<int> hits(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int t = sample_token(z, DecodeConfig{temp, 0, 1.0, 1}, rng);
    ASSERT_GE(t, kNumReserved);
    ++hits[static_cast<std::size_t>(t - kNumReserved)];
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(hits[i] / double(n), want[i], 0.01);
}

TEST(Sampling, NucleusKeepsSmallestPrefix) {
  std::vector<float> z(kNumReserved + 3, -100.0f);
  z[kNumReserved] = 3.0f;  // ~0.84 of the mass at T = 1
  z[kNumReserved + 1] = 1.0f;
  z[kNumReserved + 2] = 0.0f;
  Rng rng(2);
  for (int i = 0; i < 300; ++i) EXPECT_EQ(sample_token(z, DecodeConfig{1.0, 0, 0.8, 1}, rng), kNumReserved);
}

TEST(Generate, StopsAtTokenBudget) {
  Fixture f;
  Rng rng(4);
  PathwayModel model(make_net(fixtures::tiny_net(f.vocab.size()), rng), f.vocab, f.cfg(Variant::Text));
  const auto in = assemble_pathway_input(inference_view(f.cohort[0], 2), 2, model.config(), f.vocab, nullptr);
  const auto g = generate(model.net(), f.vocab, in.seq, DecodeConfig{1.0, 0, 1.0, 7}, rng);
  EXPECT_LE(g.ids.size(), 7u);
  EXPECT_EQ(f.vocab.decode(g.ids), g.text);
  Rng a(9), b(9);
  EXPECT_EQ(generate(model.net(), f.vocab, in.seq, DecodeConfig{}, a).ids,
            generate(model.net(), f.vocab, in.seq, DecodeConfig{}, b).ids);
}

TEST(Assembly, TextLayoutAndCounts) {
  Fixture f;
  const auto view = inference_view(f.cohort[0], 3);
  const auto a = assemble_pathway_input(view, 3, f.cfg(Variant::Text), f.vocab, nullptr);
  ASSERT_GE(a.seq.size(), 3);
  EXPECT_EQ(a.seq.ids.front(), kBos);
  EXPECT_EQ(a.seq.ids.back(), kOut);
  EXPECT_TRUE(a.seq.injections.empty());
  EXPECT_EQ(a.counts.input_tokens, a.seq.ids.size());
  EXPECT_EQ(a.counts.context_tokens + 2, a.counts.input_tokens);
  EXPECT_EQ(std::count(a.seq.targets.begin(), a.seq.targets.end(), 1), 0);
}

TEST(Assembly, SummaryVariantsInjectEverySlot) {
  Fixture f;
  const int t = 4;
  const auto view = inference_view(f.cohort[1], t);
  const auto summ = f.summarizer.summarize_record(view, t);
  ASSERT_FALSE(summ.empty());
  std::size_t slots = 0;
  for (const auto& b : summ) slots += b.vectors.size();
  for (Variant v : {Variant::Summ, Variant::SummText}) {
    const auto a = assemble_pathway_input(view, t, f.cfg(v), f.vocab, &summ);
    EXPECT_EQ(a.seq.injections.size(), slots);
    EXPECT_EQ(static_cast<std::size_t>(std::count(a.seq.ids.begin(), a.seq.ids.end(), kSep)), summ.size());
    for (const auto& [pos, vec] : a.seq.injections) {
      EXPECT_EQ(a.seq.ids[static_cast<std::size_t>(pos)], kSum);
      EXPECT_EQ(vec.size(), 16u);
    }
    // context covers the full history, which is longer than the compressed input
    EXPECT_GT(a.counts.context_tokens, 0u);
  }
  EXPECT_THROW(assemble_pathway_input(view, t, f.cfg(Variant::Summ), f.vocab, nullptr), std::invalid_argument);
}

TEST(Assembly, DroppingPartsOfSummTextGivesTheOtherVariants) {
  Fixture f;
  const int t = 5;
  const auto view = inference_view(f.cohort[2], t);
  const auto summ = f.summarizer.summarize_record(view, t);
  const auto no_text = assemble_pathway_input(view, t, f.cfg(Variant::SummText), f.vocab, &summ, {true, false});
  const auto summ_only = assemble_pathway_input(view, t, f.cfg(Variant::Summ), f.vocab, &summ);
  EXPECT_EQ(no_text.seq.ids, summ_only.seq.ids);
  EXPECT_EQ(no_text.seq.injections, summ_only.seq.injections);
  const auto no_summ = assemble_pathway_input(view, t, f.cfg(Variant::SummText), f.vocab, nullptr, {false, true});
  const auto text_only = assemble_pathway_input(view, t, f.cfg(Variant::Text), f.vocab, nullptr);
  EXPECT_EQ(no_summ.seq.ids, text_only.seq.ids);
  EXPECT_TRUE(no_summ.seq.injections.empty());
  EXPECT_THROW(assemble_pathway_input(view, t, f.cfg(Variant::SummText), f.vocab, &summ, {true, true}),
               std::invalid_argument);
}

TEST(Assembly, LosAugmentationDropsAboutHalf) {
  Fixture f;
  const int t = 2;
  const auto view = training_view(f.cohort[0], t);
  const std::string plain = f.vocab.decode(assemble_pathway_input(view, t, f.cfg(Variant::Text), f.vocab, nullptr).seq.ids);
  ASSERT_NE(plain.find("LOS: "), std::string::npos);
  Rng rng(5);
  int with = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    AssemblyOptions o;
    o.los_rng = &rng;
    const auto a = assemble_pathway_input(view, t, f.cfg(Variant::Text), f.vocab, nullptr, o);
    if (f.vocab.decode(a.seq.ids).find("LOS: ") != std::string::npos) ++with;
  }
  EXPECT_NEAR(with / double(n), 0.5, 0.05);
}

TEST(Views, TrainingViewCarriesTrueRemainingStay) {
  Fixture f;
  const auto& rec = f.cohort[0];
  for (int t = 0; t < rec.total_hours; ++t) {
    const auto view = training_view(rec, t);
    ASSERT_TRUE(view.units.at(Unit::ED).los_remaining.has_value()) << t;
    EXPECT_EQ(*view.units.at(Unit::ED).los_remaining, true_los(rec, t).at(Unit::ED));
    EXPECT_FALSE(inference_view(rec, t).units.at(Unit::ED).los_remaining.has_value());
  }
}

TEST(Pathway, TrainingSequenceScoresOutputAndEos) {
  Fixture f;
  Rng rng(1);
  PathwayModel model(make_net(fixtures::tiny_net(f.vocab.size()), rng), f.vocab, f.cfg(Variant::Text));
  const auto in = assemble_pathway_input(inference_view(f.cohort[0], 1), 1, model.config(), f.vocab, nullptr);
  const std::string target = "ED:\n  Vital Signs:\n    Heart Rate: 80.0\n";
  const auto seq = model.training_sequence(in, target);
  ASSERT_TRUE(seq);
  const auto scored = std::count(seq->targets.begin(), seq->targets.end(), 1);
  EXPECT_EQ(static_cast<std::size_t>(scored), f.vocab.encode(target).size() + 1);
  EXPECT_EQ(seq->ids.back(), kEos);
  EXPECT_FALSE(model.training_sequence(in, std::string(2000, 'x')));
}

TEST(Summarizer, SequenceUsesBottleneckMask) {
  Fixture f;
  const std::vector<int> block = {10, 11, 12};
  const auto s = f.summarizer.summary_sequence(block);
  EXPECT_EQ(s.size(), 5);
  const auto t = f.summarizer.training_sequence(block, "ED:\n");
  EXPECT_FALSE(t.mask.empty());
  // the OUT token sits after the summaries and may not see the block
  EXPECT_FALSE(t.mask.allowed(5, 0));
  EXPECT_TRUE(t.mask.allowed(5, 3));
  EXPECT_EQ(f.summarizer.summarize_block(block).size(), 2u);
}

TEST(Checkpoint, RoundTrip) {
  Fixture f;
  Rng rng(8);
  Checkpoint c;
  c.role = "pathway";
  c.net = fixtures::tiny_net(f.vocab.size());
  c.vocab = f.vocab;
  c.meta["pathway"] = f.cfg(Variant::SummText).to_json();
  c.step = 17;
  const Net net = make_net(c.net, rng);
  c.params.assign(net.params().begin(), net.params().end());
  c.adam_m.assign(c.params.size(), 0.25f);
  c.adam_v.assign(c.params.size(), 0.5f);
  const auto path = std::filesystem::temp_directory_path() / "ehrtraj_test.ckpt";
  save_checkpoint(path, c);
  const auto d = load_checkpoint(path);
  EXPECT_EQ(d.role, c.role);
  EXPECT_EQ(d.net, c.net);
  EXPECT_EQ(d.vocab, c.vocab);
  EXPECT_EQ(d.meta, c.meta);
  EXPECT_EQ(d.step, 17);
  EXPECT_EQ(d.params, c.params);
  EXPECT_EQ(d.adam_m, c.adam_m);
  EXPECT_EQ(d.adam_v, c.adam_v);
  const auto model = pathway_from_checkpoint(d);
  EXPECT_EQ(model.config().variant, Variant::SummText);
  EXPECT_THROW(summarizer_from_checkpoint(d), std::runtime_error);

  std::ofstream(path, std::ios::binary) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

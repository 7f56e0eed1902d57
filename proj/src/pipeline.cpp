#include "ehrtraj/pipeline.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace ehrtraj {

namespace {

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
  }
}

nn::TransformerConfig with_vocab(nn::TransformerConfig c, const Vocab& v) {
  c.vocab_size = v.size();
  c.check();
  return c;
}

}  // namespace

TrainedSummarizer train_summarizer(const std::vector<PatientRecord>& train, const std::vector<PatientRecord>& val,
                                   const Vocab& vocab, const SummarizerSetup& setup, const CurveFn& on_point) {
  Rng init = child_rng(setup.train.seed, 0xabc);
  TrainedSummarizer out;
  out.model = Summarizer(make_net(with_vocab(setup.net, vocab), init), vocab, setup.m, setup.output_reserve);
  out.optimizer = nn::AdamW<float>(out.model.net().num_params(), {});

  const auto samples = section_samples(train);
  if (samples.empty()) throw TrainingError("no section samples in the training cohort");
  std::vector<Seq> val_seqs;
  auto val_samples = section_samples(val);
  Rng vrng = child_rng(setup.train.seed, 0xdef);
  shuffle(val_samples, vrng);
  for (const auto& s : val_samples) {
    if (val_seqs.size() >= setup.val_samples) break;
    if (auto seq = summarizer_sequence(out.model, val[s.patient], s)) val_seqs.push_back(std::move(*seq));
  }
  const Summarizer& model = out.model;
  auto draw = [&](Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto& s = samples[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(samples.size()) - 1))];
      if (auto seq = summarizer_sequence(model, train[s.patient], s)) return std::move(*seq);
    }
    throw TrainingError("section outputs do not fit the output reserve");
  };
  out.result = train_loop(out.model.net(), out.optimizer, out.step, draw, val_seqs, setup.train, on_point);
  return out;
}

TrainedPathway train_pathway(const std::vector<PatientRecord>& train, const std::vector<PatientRecord>& val,
                             const Vocab& vocab, const PathwaySetup& setup, const Summarizer* summarizer,
                             std::vector<PathwayExample> pool, TrainedPathway* resume, const CurveFn& on_point) {
  TrainedPathway out;
  if (resume) {
    out = std::move(*resume);
  } else {
    Rng init = child_rng(setup.train.seed, 0xabc);
    out.model = PathwayModel(make_net(with_vocab(setup.net, vocab), init), vocab, setup.pathway);
    out.optimizer = nn::AdamW<float>(out.model.net().num_params(), {});
  }
  if (pool.empty()) {
    const auto table = SampleWeightTable::build(train, setup.transition_boost);
    pool = next_hour_pool(train, table);
    if (!setup.weighted) {
      for (auto& e : pool) e.weight = 1.0;
    }
  }
  PathwaySampler sampler(train, out.model, summarizer, std::move(pool), setup.augment);

  std::vector<Seq> val_seqs;
  if (!val.empty() && setup.val_samples > 0) {
    PathwaySampler vs(val, out.model, summarizer, next_hour_pool(val, SampleWeightTable::build(val)), {});
    Rng vrng = child_rng(setup.train.seed, 0xdef);
    std::vector<std::string> ids;
    for (const auto& r : val) ids.push_back(r.patient_id);
    for (const auto& tp : eval_timepoints(val, ids, setup.val_samples, vrng)) {
      if (auto s = vs.build({tp, std::nullopt, 1.0}, nullptr)) val_seqs.push_back(std::move(*s));
    }
  }
  out.result = train_loop(out.model.net(), out.optimizer, out.step, [&](Rng& r) { return sampler.draw(r); },
                          val_seqs, setup.train, on_point);
  return out;
}

Checkpoint to_checkpoint(const TrainedSummarizer& s) {
  Checkpoint c;
  c.role = "summarizer";
  c.net = s.model.net().config();
  c.vocab = s.model.vocab();
  c.meta = {{"m", s.model.m()}, {"output_reserve", s.model.output_reserve()}};
  c.step = s.step;
  c.params.assign(s.model.net().params().begin(), s.model.net().params().end());
  c.adam_m = s.optimizer.first_moment();
  c.adam_v = s.optimizer.second_moment();
  return c;
}

Checkpoint to_checkpoint(const TrainedPathway& p) {
  Checkpoint c;
  c.role = "pathway";
  c.net = p.model.net().config();
  c.vocab = p.model.vocab();
  c.meta = {{"pathway", p.model.config().to_json()}};
  c.step = p.step;
  c.params.assign(p.model.net().params().begin(), p.model.net().params().end());
  c.adam_m = p.optimizer.first_moment();
  c.adam_v = p.optimizer.second_moment();
  return c;
}

namespace {

nn::AdamW<float> restore_optimizer(const Checkpoint& c) {
  nn::AdamW<float> opt(c.params.size(), {});
  if (c.adam_m.size() == c.params.size() && c.adam_v.size() == c.params.size()) {
    opt.first_moment() = c.adam_m;
    opt.second_moment() = c.adam_v;
    opt.set_step_count(c.step);
  }
  return opt;
}

}  // namespace

TrainedSummarizer summarizer_state(const Checkpoint& c) {
  TrainedSummarizer s;
  s.model = summarizer_from_checkpoint(c);
  s.step = c.step;
  s.optimizer = restore_optimizer(c);
  return s;
}

TrainedPathway pathway_state(const Checkpoint& c) {
  TrainedPathway p;
  p.model = pathway_from_checkpoint(c);
  p.step = c.step;
  p.optimizer = restore_optimizer(c);
  return p;
}

std::vector<BottleneckRow> bottleneck_sweep(const BottleneckSweepConfig& cfg, const ProgressFn& progress) {
  const auto cohort = generate_cohort(cfg.cohort);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(cohort.size()) * cfg.val_fraction);
  if (n_val == 0 || n_val >= cohort.size()) throw std::invalid_argument("bottleneck sweep needs a train/val split");
  const std::vector<PatientRecord> val(cohort.begin(), cohort.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<PatientRecord> train(cohort.begin() + static_cast<std::ptrdiff_t>(n_val), cohort.end());
  const Vocab vocab = corpus_vocab(train);
  std::vector<BottleneckRow> rows;
  for (const auto seed : cfg.seeds) {
    for (const int m : cfg.ms) {
      SummarizerSetup setup = cfg.setup;
      setup.m = m;
      setup.train.seed = seed;
      const auto trained = train_summarizer(train, val, vocab, setup);
      rows.push_back({m, seed, trained.result.final_loss, trained.result.val_loss.value_or(0.0)});
      if (progress) {
        std::ostringstream os;
        os << "m=" << m << " seed=" << seed << " val_loss=" << rows.back().val_loss;
        progress(os.str());
      }
    }
  }
  return rows;
}

std::string bottleneck_table(const std::vector<BottleneckRow>& rows) {
  std::ostringstream os;
  os << "m,seed,train_loss,val_loss\n" << std::setprecision(6);
  for (const auto& r : rows) os << r.m << ',' << r.seed << ',' << r.train_loss << ',' << r.val_loss << '\n';
  return os.str();
}

BottleneckSweepConfig toy_bottleneck_config() {
  BottleneckSweepConfig cfg;
  CohortConfig& c = cfg.cohort;
  c = CohortConfig::defaults();
  c.n_patients = 120;
  c.seed = 3;
  c.p_hospital_admit = 0.0;
  c.units[Unit::ED] = {3, 8, 0.0};
  c.features.clear();
  // Slowly switching categorical states, one token per value. With a single
  // head each summary slot gets one attention read per layer, so m = 1 cannot
  // pick out four features at once.
  for (int i = 0; i < 4; ++i) {
    FeatureSpec f;
    f.unit = Unit::ED;
    f.category = "State";
    f.name = "S" + std::to_string(i);
    f.kind = FeatureKind::Categorical;
    f.values = {"a", "b", "c", "d"};
    f.switch_prob = 0.02;
    c.features.push_back(f);
  }
  cfg.setup.net = {0, 256, 2, 1, 32, 128};
  cfg.setup.output_reserve = 64;
  cfg.setup.train.steps = 6000;
  cfg.setup.train.lr = 3e-3;
  cfg.setup.train.warmup = 20;
  cfg.setup.train.eval_every = 0;
  return cfg;
}

LosAblationConfig toy_los_config() {
  LosAblationConfig cfg;
  CohortConfig& c = cfg.cohort;
  c = CohortConfig::defaults();
  c.n_patients = 60;
  c.seed = 7;
  // narrow ages keep test patients inside the training vocabulary
  c.age_min = 60;
  c.age_max = 64;
  c.p_hospital_admit = 0.0;
  c.units[Unit::ED] = {1, 30, 0.0, 0.12};
  c.features.clear();
  FeatureSpec f;
  f.unit = Unit::ED;
  f.category = "Vital Signs";
  f.name = "Rhythm";
  f.kind = FeatureKind::Categorical;
  f.values = {"sinus", "afib"};
  f.switch_prob = 0.05;
  c.features.push_back(f);
  cfg.setup.net = {0, 128, 2, 4, 64, 256};
  cfg.setup.pathway.variant = Variant::Text;
  cfg.setup.weighted = false;
  cfg.setup.augment = {true, 0.0, 0.0};
  cfg.setup.train.steps = 3000;
  cfg.setup.train.lr = 3e-3;
  cfg.setup.train.warmup = 20;
  cfg.setup.train.weight_decay = 0.0;
  cfg.setup.train.eval_every = 0;
  cfg.rollouts = 200;
  return cfg;
}

std::vector<LosAblationRow> los_ablation(const LosAblationConfig& cfg, const ProgressFn& progress) {
  const auto cohort = generate_cohort(cfg.cohort);
  const auto n_test = static_cast<std::size_t>(static_cast<double>(cohort.size()) * cfg.test_fraction);
  if (n_test == 0 || n_test >= cohort.size()) throw std::invalid_argument("LOS ablation needs a train/test split");
  const std::vector<PatientRecord> test(cohort.begin(), cohort.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<PatientRecord> train(cohort.begin() + static_cast<std::ptrdiff_t>(n_test), cohort.end());
  const Vocab vocab = corpus_vocab(train);
  const auto schema = schema_of(train);

  int cap = cfg.step_cap;
  if (cap <= 0) {
    for (const auto& r : train) cap = std::max(cap, r.total_hours);
  }

  std::vector<LosAblationRow> rows;
  for (const bool with_los : {true, false}) {
    PathwaySetup setup = cfg.setup;
    setup.pathway.include_los = with_los;
    setup.augment.los = with_los;
    const auto trained = train_pathway(train, {}, vocab, setup, nullptr);
    ModelPredictor predictor(trained.model, nullptr, cfg.decode);
    LosAblationRow row;
    row.with_los = with_los;
    row.cap = cap;
    row.train_loss = trained.result.final_loss;
    SimConfig sc;
    sc.max_steps = cap;
    sc.schema = schema;
    for (std::size_t i = 0; i < cfg.rollouts; ++i) {
      const auto& rec = test[i % test.size()];
      Rng rng = child_rng(cfg.seed, i);
      const auto traj = simulate(rec, 0, predictor, sc, rng);
      ++row.rollouts;
      switch (traj.terminal) {
        case Terminal::Converged: ++row.converged; break;
        case Terminal::StepCap: ++row.step_cap; break;
        case Terminal::ParseFailure: ++row.parse_failure; break;
      }
    }
    if (progress) {
      std::ostringstream os;
      os << (with_los ? "with LOS" : "without LOS") << ": converged " << row.converged << "/" << row.rollouts;
      progress(os.str());
    }
    rows.push_back(row);
  }
  return rows;
}

std::string los_table(const std::vector<LosAblationRow>& rows) {
  std::ostringstream os;
  os << "los,rollouts,converged,step_cap,parse_failure,converged_pct,cap,train_loss\n" << std::setprecision(6);
  for (const auto& r : rows) {
    os << (r.with_los ? "on" : "off") << ',' << r.rollouts << ',' << r.converged << ',' << r.step_cap << ','
       << r.parse_failure << ',' << 100.0 * r.converged_rate() << ',' << r.cap << ',' << r.train_loss << '\n';
  }
  return os.str();
}

}  // namespace ehrtraj

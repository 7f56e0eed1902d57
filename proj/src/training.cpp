#include "ehrtraj/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ehrtraj {

Json TrainOptions::to_json() const {
  return {{"steps", steps}, {"batch_size", batch_size}, {"lr", lr},        {"weight_decay", weight_decay},
          {"clip", clip},   {"warmup", warmup},         {"eval_every", eval_every}, {"seed", seed}};
}

double mean_loss(const Net& net, const std::vector<Seq>& seqs) {
  nn::LossStats total;
  for (const auto& s : seqs) {
    const auto st = net.evaluate(s);
    total.loss_sum += st.loss_sum;
    total.tokens += st.tokens;
  }
  return total.mean();
}

namespace {

double scored(const Seq& s) {
  double n = 0;
  for (std::size_t i = 1; i < s.targets.size(); ++i) n += s.targets[i] ? 1 : 0;
  return n;
}

}  // namespace

TrainResult train_loop(Net& net, nn::AdamW<float>& opt, long& step, const SampleFn& draw,
                       const std::vector<Seq>& val, const TrainOptions& options, const CurveFn& on_point) {
  if (options.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  Rng rng = child_rng(options.seed, static_cast<std::uint64_t>(step));
  nn::ParamBuffer<float> grad(net.num_params());
  TrainResult result;
  double interval_loss = 0.0;
  long interval_n = 0;
  const long end = step + options.steps;
  while (step < end) {
    std::vector<Seq> batch;
    double tokens = 0;
    for (int b = 0; b < options.batch_size; ++b) {
      batch.push_back(draw(rng));
      tokens += scored(batch.back());
    }
    std::fill(grad.begin(), grad.end(), 0.0f);
    nn::LossStats stats;
    if (tokens > 0) {
      for (const auto& s : batch) {
        const auto st = net.accumulate_gradients(s, tokens, grad);
        stats.loss_sum += st.loss_sum;
        stats.tokens += st.tokens;
      }
    }
    const double loss = stats.mean();
    if (!std::isfinite(loss)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " (lr " +
                          std::to_string(opt.options().lr) + ")");
    }
    if (options.clip > 0) nn::clip_grad_norm<float>(grad, options.clip);
    double lr = options.lr;
    if (options.warmup > 0 && step < options.warmup) lr *= static_cast<double>(step + 1) / options.warmup;
    opt.options().lr = lr;
    opt.options().weight_decay = options.weight_decay;
    opt.update(net.params(), grad, net.tensors());
    ++step;
    interval_loss += loss;
    ++interval_n;

    const bool last = step == end;
    const bool checkpoint = options.eval_every > 0 && step % options.eval_every == 0;
    if (checkpoint || last) {
      CurvePoint p{step, interval_loss / static_cast<double>(interval_n), std::nullopt};
      if (!val.empty()) p.val_loss = mean_loss(net, val);
      result.curve.push_back(p);
      result.final_loss = p.loss;
      result.val_loss = p.val_loss;
      if (on_point) on_point(p);
      interval_loss = 0.0;
      interval_n = 0;
    }
  }
  return result;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,loss,val_loss\n";
  for (const auto& p : curve) {
    os << p.step << ',' << p.loss << ',';
    if (p.val_loss) os << *p.val_loss;
    os << '\n';
  }
}

PatientRecord training_view(const PatientRecord& record, int t) {
  // The snapshot ends at t, so the remaining stay comes from the full record.
  PatientRecord r = snapshot(record, t);
  for (auto& [u, ud] : r.units) ud.los_remaining.reset();
  for (const auto& [u, h] : true_los(record, t)) r.units[u].los_remaining = h;
  return r;
}

PatientRecord inference_view(const PatientRecord& record, int t) {
  PatientRecord r = snapshot(record, t);
  for (auto& [u, ud] : r.units) ud.los_remaining.reset();
  return r;
}

Vocab corpus_vocab(const std::vector<PatientRecord>& cohort, const std::vector<std::string>& extra,
                   int stride) {
  std::vector<std::string> corpus = extra;
  stride = std::max(1, stride);
  for (const auto& rec : cohort) {
    for (int t = 0; t < rec.total_hours; t += stride) {
      const auto view = training_view(rec, t);
      corpus.push_back(render_input(view, t, RenderConfig{}).text());
      corpus.push_back(render_output(label_at(rec, t + 1)));
    }
    corpus.push_back(render_output(label_at(rec, rec.total_hours)));
    for (const auto& [unit, cat] : sections_at(rec, rec.total_hours)) {
      corpus.push_back(render_section(rec, rec.total_hours, unit, cat, std::nullopt));
    }
  }
  return Vocab::build(corpus);
}

Net make_net(const nn::TransformerConfig& cfg, Rng& rng) {
  Net net(cfg);
  net.init(rng);
  return net;
}

std::vector<SectionSample> section_samples(const std::vector<PatientRecord>& cohort) {
  std::vector<SectionSample> out;
  for (std::size_t p = 0; p < cohort.size(); ++p) {
    const auto& rec = cohort[p];
    for (int t = 0; t < rec.total_hours; ++t) {
      for (const auto& [unit, cat] : sections_at(rec, t)) out.push_back({p, t, unit, cat});
    }
  }
  return out;
}

std::optional<Seq> summarizer_sequence(const Summarizer& s, const PatientRecord& record,
                                       const SectionSample& sample) {
  const std::string text = render_section(record, sample.t, sample.unit, sample.category, std::nullopt);
  const auto blocks = s.split_blocks(text);
  const std::string out = render_section_output(label_at(record, sample.t + 1), sample.unit, sample.category);
  try {
    return s.training_sequence(blocks.back(), out);
  } catch (const std::length_error&) {
    return std::nullopt;
  }
}

std::vector<PathwayExample> next_hour_pool(const std::vector<PatientRecord>& cohort,
                                           const SampleWeightTable& table) {
  std::vector<PathwayExample> pool;
  for (const auto& tp : all_timepoints(cohort)) {
    const auto label = label_at(cohort[tp.patient], tp.t + 1);
    pool.push_back({tp, std::nullopt, compute_weight(label, table)});
  }
  return pool;
}

PathwaySampler::PathwaySampler(const std::vector<PatientRecord>& cohort, const PathwayModel& model,
                               const Summarizer* summarizer, std::vector<PathwayExample> pool,
                               PathwayAugment augment)
    : cohort_(cohort), model_(model), summarizer_(summarizer), pool_(std::move(pool)), augment_(augment) {
  if (pool_.empty()) throw std::invalid_argument("empty training pool");
  if (uses_summaries(model_.config().variant)) {
    if (!summarizer_) throw std::invalid_argument("summary variants need a summarizer");
    if (summarizer_->net().config().model_dim != model_.net().config().model_dim) {
      throw std::invalid_argument("summarizer and pathway model_dim differ");
    }
    if (summarizer_->m() != model_.config().m) throw std::invalid_argument("summarizer m differs from pathway m");
  }
  double acc = 0.0;
  for (const auto& ex : pool_) {
    if (!(ex.weight > 0)) throw std::invalid_argument("pool weights must be positive");
    acc += ex.weight;
    cumulative_.push_back(acc);
  }
}

const SummaryState& PathwaySampler::summaries(const TimePoint& tp) {
  const auto key = std::make_pair(tp.patient, tp.t);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, summarizer_->summarize_record(snapshot(cohort_[tp.patient], tp.t), tp.t)).first;
  }
  return it->second;
}

std::string PathwaySampler::next_hour_target(const TimePoint& tp) const {
  auto label = label_at(cohort_[tp.patient], tp.t + 1);
  if (!model_.config().include_los) label = strip_los(std::move(label));
  return render_output(label);
}

std::optional<Seq> PathwaySampler::build(const PathwayExample& ex, Rng* rng) {
  const auto& rec = cohort_[ex.tp.patient];
  const auto view = training_view(rec, ex.tp.t);
  AssemblyOptions opts;
  const Variant v = model_.config().variant;
  if (rng) {
    if (augment_.los) opts.los_rng = rng;
    if (v == Variant::SummText) {
      const double u = uniform01(*rng);
      if (u < augment_.drop_text) {
        opts.drop_text = true;
      } else if (u < augment_.drop_text + augment_.drop_summaries) {
        opts.drop_summaries = true;
      }
    }
  }
  const SummaryState* summ = nullptr;
  if (uses_summaries(v) && !opts.drop_summaries) summ = &summaries(ex.tp);
  const auto input = assemble_pathway_input(view, ex.tp.t, model_.config(), model_.vocab(), summ, opts);
  const std::string target = ex.target ? *ex.target : next_hour_target(ex.tp);
  return model_.training_sequence(input, target);
}

Seq PathwaySampler::draw(Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double u = uniform01(rng) * cumulative_.back();
    const auto idx = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                              cumulative_.begin());
    auto seq = build(pool_[std::min(idx, pool_.size() - 1)], &rng);
    if (seq) return std::move(*seq);
    ++skipped_;
  }
  throw TrainingError("could not draw a sample that fits max_seq; raise max_seq or shorten the window");
}

}  // namespace ehrtraj

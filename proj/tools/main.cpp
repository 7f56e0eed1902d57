#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ehrtraj/evaluation.hpp"
#include "ehrtraj/io.hpp"
#include "ehrtraj/pipeline.hpp"
#include "ehrtraj/synth.hpp"
#include "ehrtraj/tasks.hpp"

#ifndef EHRTRAJ_VERSION
#define EHRTRAJ_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace ehrtraj;

namespace {

// Exit codes
constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    started_ = buf;
  }
  Json config = Json::object();
  Json artifacts = Json::object();
  std::uint64_t seed = 0;
  Json results = Json::object();

  void write(const fs::path& path) const {
    Json j;
    j["command"] = command_;
    j["tool_version"] = EHRTRAJ_VERSION;
    j["seed"] = seed;
    j["config"] = config;
    j["artifacts"] = artifacts;
    j["results"] = results;
    j["started_at"] = started_;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json_file(path, j);
  }

 private:
  std::string command_;
  std::string started_;
  std::chrono::steady_clock::time_point start_;
};

fs::path manifest_path(const std::string& explicit_path, const std::string& primary, const std::string& cmd) {
  if (!explicit_path.empty()) return explicit_path;
  if (!primary.empty()) return primary + ".manifest.json";
  return "ehrtraj-" + cmd + ".manifest.json";
}

struct SplitArgs {
  std::uint64_t seed = 1;
  std::vector<double> fractions{0.95, 0.025, 0.025};
};

void add_split_options(CLI::App* cmd, SplitArgs& s) {
  cmd->add_option("--split-seed", s.seed, "Seed of the patient-level train/val/test split");
  cmd->add_option("--split", s.fractions, "Train, val and test fractions")->expected(3)->delimiter(',');
}

PatientSplit make_split(const std::vector<PatientRecord>& cohort, const SplitArgs& s) {
  std::vector<std::string> ids;
  for (const auto& r : cohort) ids.push_back(r.patient_id);
  Rng rng(s.seed);
  try {
    return fixed_eval_split(ids, {s.fractions[0], s.fractions[1], s.fractions[2]}, rng);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

const std::vector<std::string>& split_part(const PatientSplit& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw UsageError("unknown split '" + name + "' (train, val, test)");
}

Json split_json(const SplitArgs& s) { return {{"split_seed", s.seed}, {"fractions", s.fractions}}; }

struct DecodeArgs {
  bool greedy = false;
  double temperature = 0.7;
  int top_k = 20;
  double top_p = 0.8;
  int max_new_tokens = 256;

  DecodeConfig config() const {
    if (greedy) {
      auto g = DecodeConfig::greedy();
      g.max_new_tokens = max_new_tokens;
      return g;
    }
    return {temperature, top_k, top_p, max_new_tokens};
  }
  Json json() const {
    const auto c = config();
    return {{"temperature", c.temperature}, {"top_k", c.top_k}, {"top_p", c.top_p},
            {"max_new_tokens", c.max_new_tokens}};
  }
};

void add_decode_options(CLI::App* cmd, DecodeArgs& d) {
  cmd->add_flag("--greedy", d.greedy, "Greedy decoding (temperature 0)");
  cmd->add_option("--temperature", d.temperature, "Sampling temperature")->capture_default_str();
  cmd->add_option("--top-k", d.top_k, "Top-k cutoff")->capture_default_str();
  cmd->add_option("--top-p", d.top_p, "Nucleus cutoff")->capture_default_str();
  cmd->add_option("--max-new-tokens", d.max_new_tokens, "Generation cap per step")->capture_default_str();
}

std::vector<PatientRecord> load_cohort(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("cohort file not found: " + path);
  return read_cohort(path);
}

Checkpoint load_ckpt(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " checkpoint is required");
  if (!fs::exists(path)) throw UsageError(what + " checkpoint not found: " + path);
  return load_checkpoint(path);
}

std::optional<int> parse_window(const std::string& w) {
  if (w == "full") return std::nullopt;
  try {
    const int h = std::stoi(w);
    if (h < 0) throw UsageError("--window must be >= 0 or 'full'");
    return h;
  } catch (const std::logic_error&) {
    throw UsageError("--window must be an hour count or 'full'");
  }
}

// generate

struct GenerateArgs {
  std::string config;
  std::optional<std::size_t> patients;
  std::optional<std::uint64_t> seed;
  std::string out = "cohort.jsonl";
  std::string dump_config;
  std::string manifest;
};

int cmd_generate(const GenerateArgs& a) {
  CohortConfig cfg = CohortConfig::defaults();
  if (!a.config.empty()) cfg = CohortConfig::from_json(read_json_file(a.config));
  if (a.patients) cfg.n_patients = *a.patients;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  if (!a.dump_config.empty()) write_json_file(a.dump_config, cfg.to_json());
  const auto cohort = generate_cohort(cfg);
  write_cohort(a.out, cohort);
  Manifest m("generate");
  m.seed = cfg.seed;
  m.config = cfg.to_json();
  m.artifacts["cohort"] = a.out;
  m.results["patients"] = cohort.size();
  m.write(manifest_path(a.manifest, a.out, "generate"));
  std::cout << "wrote " << cohort.size() << " patients to " << a.out << "\n";
  return kOk;
}

// train

struct TrainArgs {
  std::string cohort;
  std::string role = "pathway";
  std::string variant = "TEXT";
  std::string out = "model.ckpt";
  std::string summarizer;
  std::string resume;
  std::string finetune;
  std::string task;
  std::string curve;
  std::string manifest;
  long steps = 1000;
  int batch = 8;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double clip = 1.0;
  int warmup = 0;
  int eval_every = 100;
  std::uint64_t seed = 1;
  int layers = 4, heads = 4, dim = 128, ff = 512, max_seq = 512;
  int m = 8;
  int output_reserve = 64;
  std::string window = "24";
  bool no_los = false;
  bool no_weighting = false;
  double transition_boost = 4.0;
  std::size_t overfit = 0;
  std::size_t val_samples = 100;
  std::size_t outcome_cases = 1000;
  SplitArgs split;
};

int cmd_train(const TrainArgs& a) {
  const auto cohort = load_cohort(a.cohort);
  const auto split = make_split(cohort, a.split);
  const auto train = select_patients(cohort, split.train);
  const auto val = select_patients(cohort, split.val);
  if (train.empty()) throw UsageError("training split is empty");

  TrainOptions topt;
  topt.steps = a.steps;
  topt.batch_size = a.batch;
  topt.lr = a.lr;
  topt.weight_decay = a.weight_decay;
  topt.clip = a.clip;
  topt.warmup = a.warmup;
  topt.eval_every = a.eval_every;
  topt.seed = a.seed;
  const nn::TransformerConfig net{0, a.max_seq, a.layers, a.heads, a.dim, a.ff};

  Manifest man("train");
  man.seed = a.seed;
  man.config = {{"role", a.role}, {"train", topt.to_json()}, {"split", split_json(a.split)}, {"cohort", a.cohort}};
  auto log_point = [](const CurvePoint& p) {
    std::cout << "step " << p.step << " loss " << p.loss;
    if (p.val_loss) std::cout << " val_loss " << *p.val_loss;
    std::cout << std::endl;
  };

  std::vector<CurvePoint> curve;
  Checkpoint ckpt;
  if (a.role == "summarizer") {
    if (!a.finetune.empty()) throw UsageError("--finetune applies to pathway models");
    SummarizerSetup setup;
    setup.net = net;
    setup.m = a.m;
    setup.output_reserve = a.output_reserve;
    setup.train = topt;
    setup.val_samples = a.val_samples;
    const Vocab vocab = corpus_vocab(train);
    auto trained = train_summarizer(train, val, vocab, setup, log_point);
    curve = trained.result.curve;
    ckpt = to_checkpoint(trained);
    man.results["final_loss"] = trained.result.final_loss;
    if (trained.result.val_loss) man.results["val_loss"] = *trained.result.val_loss;
  } else if (a.role == "pathway") {
    PathwaySetup setup;
    setup.net = net;
    setup.train = topt;
    setup.transition_boost = a.transition_boost;
    setup.weighted = !a.no_weighting;
    setup.val_samples = a.val_samples;
    const auto variant = parse_variant(a.variant);
    if (!variant) throw UsageError("unknown variant '" + a.variant + "' (TEXT, SUMM, SUMM_TEXT)");
    setup.pathway.variant = *variant;
    setup.pathway.window_hours = parse_window(a.window);
    setup.pathway.include_los = !a.no_los;
    setup.pathway.m = a.m;
    setup.augment.los = !a.no_los;

    std::optional<TrainedPathway> base;
    if (!a.resume.empty()) {
      base = pathway_state(load_ckpt(a.resume, "resume"));
      setup.pathway = base->model.config();
      setup.augment.los = setup.pathway.include_los;
    } else if (!a.finetune.empty()) {
      throw UsageError("--finetune needs the base model via --resume");
    }
    std::optional<Summarizer> summ;
    if (uses_summaries(setup.pathway.variant)) {
      summ = summarizer_from_checkpoint(load_ckpt(a.summarizer, "--summarizer"));
      if (summ->m() != setup.pathway.m) setup.pathway.m = summ->m();
    }

    std::vector<PathwayExample> pool;
    if (!a.finetune.empty()) {
      const auto task = find_task(a.task);
      if (!task) throw UsageError("--finetune needs --task (one of the task names)");
      Rng prng(a.seed);
      if (a.finetune == "pathway") {
        pool = pathway_task_pool(train, *task);
      } else if (a.finetune == "outcome") {
        pool = outcome_task_pool(train, *task, a.outcome_cases, prng);
        setup.augment.drop_text = setup.augment.drop_summaries = 0.0;
      } else {
        throw UsageError("--finetune must be 'pathway' or 'outcome'");
      }
      if (pool.empty()) throw UsageError("task " + a.task + " has no training cases in this cohort");
      man.config["finetune"] = {{"mode", a.finetune}, {"task", a.task}};
    }
    if (a.overfit > 0) {
      if (pool.empty()) pool = next_hour_pool(train, SampleWeightTable::build(train));
      if (pool.size() > a.overfit) pool.resize(a.overfit);
      for (auto& e : pool) e.weight = 1.0;
      setup.augment = {false, 0.0, 0.0};
    }

    const std::vector<std::string> extra = {"Outcome: yes\n", "Outcome: no\n"};
    const Vocab vocab = base ? base->model.vocab() : corpus_vocab(train, extra);
    TrainedPathway* resume = base ? &*base : nullptr;
    auto trained = train_pathway(train, a.overfit > 0 ? std::vector<PatientRecord>{} : val, vocab, setup,
                                 summ ? &*summ : nullptr, pool, resume, log_point);
    curve = trained.result.curve;
    man.results["final_loss"] = trained.result.final_loss;
    if (trained.result.val_loss) man.results["val_loss"] = *trained.result.val_loss;
    if (a.overfit > 0) {
      PathwaySampler s(train, trained.model, summ ? &*summ : nullptr, pool, {false, 0.0, 0.0});
      std::vector<Seq> seqs;
      for (const auto& e : pool) {
        if (auto q = s.build(e, nullptr)) seqs.push_back(std::move(*q));
      }
      const double loss = mean_loss(trained.model.net(), seqs);
      man.results["overfit_loss"] = loss;
      std::cout << "overfit loss " << loss << " on " << seqs.size() << " samples\n";
    }
    ckpt = to_checkpoint(trained);
    man.config["pathway"] = setup.pathway.to_json();
  } else {
    throw UsageError("--role must be 'summarizer' or 'pathway'");
  }
  ckpt.meta["split"] = split_json(a.split);
  save_checkpoint(a.out, ckpt);
  man.config["net"] = {{"layers", ckpt.net.layers}, {"heads", ckpt.net.heads}, {"model_dim", ckpt.net.model_dim},
                       {"ff_dim", ckpt.net.ff_dim}, {"max_seq", ckpt.net.max_seq}, {"vocab_size", ckpt.net.vocab_size}};
  man.results["step"] = ckpt.step;
  man.artifacts["checkpoint"] = a.out;
  if (!a.curve.empty()) {
    write_curve_csv(a.curve, curve);
    man.artifacts["curve"] = a.curve;
  }
  man.write(manifest_path(a.manifest, a.out, "train"));
  std::cout << "saved " << a.role << " checkpoint " << a.out << " at step " << ckpt.step << "\n";
  return kOk;
}

// shared model loading for simulate / evaluate

struct LoadedModels {
  std::optional<PathwayModel> pathway;
  std::optional<Summarizer> summarizer;
  std::unique_ptr<StepPredictor> predictor;
};

LoadedModels load_predictor(const std::string& model, const std::string& summarizer, const DecodeConfig& decode) {
  LoadedModels lm;
  lm.pathway = pathway_from_checkpoint(load_ckpt(model, "--model"));
  if (uses_summaries(lm.pathway->config().variant)) {
    lm.summarizer = summarizer_from_checkpoint(load_ckpt(summarizer, "--summarizer"));
  }
  lm.predictor = std::make_unique<ModelPredictor>(*lm.pathway, lm.summarizer ? &*lm.summarizer : nullptr, decode);
  return lm;
}

// simulate

struct SimulateArgs {
  std::string cohort;
  std::string model;
  std::string summarizer;
  std::string task;
  std::string patient;
  int t0 = 0;
  int steps = 24;
  std::string split_name = "test";
  std::size_t cases = 100;
  int retries = 3;
  bool direct_outcome = false;
  std::uint64_t seed = 1;
  std::string out;
  std::string report;
  std::string manifest;
  DecodeArgs decode;
  SplitArgs split;
};

std::string step_summary(const SimStep& s) {
  std::ostringstream os;
  os << "hour " << s.hour << " [" << status_name(s.status) << "] ";
  os << s.output.recorded_features().size() << " features";
  for (StateKind k : s.output.states) os << ", " << state_name(k);
  for (const auto& [u, h] : s.output.los) os << ", " << unit_name(u) << " LOS " << h;
  if (s.attempts > 1) os << " (" << s.attempts << " attempts)";
  return os.str();
}

int cmd_simulate(const SimulateArgs& a) {
  const auto cohort = load_cohort(a.cohort);
  std::optional<TaskSpec> task;
  if (!a.task.empty()) {
    task = find_task(a.task);
    if (!task) {
      std::string names;
      for (const auto& n : task_names()) names += " " + n;
      throw UsageError("unknown task '" + a.task + "'; valid tasks:" + names);
    }
  } else if (a.patient.empty()) {
    throw UsageError("give --task or --patient");
  }
  auto lm = load_predictor(a.model, a.summarizer, a.decode.config());
  const auto split = make_split(cohort, a.split);
  const auto train = select_patients(cohort, split.train);
  const auto schema = schema_of(cohort);

  Manifest man("simulate");
  man.seed = a.seed;
  man.config = {{"cohort", a.cohort}, {"model", a.model}, {"decode", a.decode.json()}, {"retries", a.retries},
                {"split", split_json(a.split)}};
  if (!a.summarizer.empty()) man.config["summarizer"] = a.summarizer;
  std::string primary = a.out.empty() ? a.report : a.out;

  if (task) {
    TaskOptions opts;
    opts.max_cases = a.cases;
    opts.retries = a.retries;
    opts.direct_outcome = a.direct_outcome;
    opts.seed = a.seed;
    for (const auto& r : train) {
      for (const auto& iv : unit_intervals(r)) {
        if (iv.unit == Unit::ED && iv.end) opts.admission_step_cap = std::max(opts.admission_step_cap, *iv.end - iv.start);
      }
    }
    const auto run = run_task(cohort, split_part(split, a.split_name), *task, *lm.predictor, NormStats::fit(train),
                              schema, opts);
    man.config["task"] = task->name;
    man.config["split_name"] = a.split_name;
    man.config["cases"] = a.cases;
    std::cout << task->title << "\n" << run.report.table();
    if (!a.out.empty()) {
      write_trajectories(a.out, run.trajectories);
      man.artifacts["trajectories"] = a.out;
    }
    if (!a.report.empty()) {
      write_json_file(a.report, run.report.to_json());
      man.artifacts["report"] = a.report;
    }
    man.results = run.report.to_json();
  } else {
    const PatientRecord* rec = nullptr;
    for (const auto& r : cohort) {
      if (r.patient_id == a.patient) rec = &r;
    }
    if (!rec) throw UsageError("patient " + a.patient + " not in cohort");
    if (a.t0 < 0 || a.t0 > rec->total_hours) throw UsageError("--t0 outside the patient's record");
    SimConfig sc;
    sc.max_steps = a.steps;
    sc.retries = a.retries;
    sc.schema = schema;
    Rng rng(a.seed);
    const auto traj = simulate(*rec, a.t0, *lm.predictor, sc, rng);
    for (const auto& s : traj.steps) std::cout << step_summary(s) << "\n";
    std::cout << "terminal: " << terminal_name(traj.terminal) << "\n";
    if (!a.out.empty()) {
      write_trajectories(a.out, {traj});
      man.artifacts["trajectories"] = a.out;
    }
    man.config["patient"] = a.patient;
    man.config["t0"] = a.t0;
    man.config["steps"] = a.steps;
    man.results = {{"terminal", terminal_name(traj.terminal)}, {"steps", traj.steps.size()}};
  }
  man.write(manifest_path(a.manifest, primary, "simulate"));
  return kOk;
}

// evaluate

struct EvaluateArgs {
  std::string cohort;
  std::string model;
  std::string summarizer;
  std::string baseline;
  std::string split_name = "test";
  std::size_t cases = 200;
  std::string mode = "max-error";
  int tol = 1;
  std::uint64_t seed = 1;
  std::string report;
  std::string csv;
  std::string manifest;
  DecodeArgs decode;
  SplitArgs split;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto cohort = load_cohort(a.cohort);
  const auto split = make_split(cohort, a.split);
  const auto train = select_patients(cohort, split.train);
  NextStepOptions opts;
  opts.max_cases = a.cases;
  opts.seed = a.seed;
  opts.score.tol_hours = a.tol;
  if (a.mode == "max-error") {
    opts.score.mode = MatchMode::MissingIsMaxError;
  } else if (a.mode == "matched-only") {
    opts.score.mode = MatchMode::MatchedOnly;
  } else {
    throw UsageError("--mode must be 'max-error' or 'matched-only'");
  }
  LoadedModels lm;
  std::unique_ptr<StepPredictor> baseline;
  StepPredictor* predictor = nullptr;
  if (!a.baseline.empty()) {
    if (a.baseline != "statistic") throw UsageError("--baseline must be 'statistic'");
    if (!a.model.empty()) throw UsageError("give either --model or --baseline");
    baseline = std::make_unique<StatisticBaseline>(FeatureStats::fit(train));
    predictor = baseline.get();
  } else {
    lm = load_predictor(a.model, a.summarizer, a.decode.config());
    predictor = lm.predictor.get();
  }
  const auto report = evaluate_next_step(cohort, split_part(split, a.split_name), *predictor, NormStats::fit(train),
                                         schema_of(cohort), opts);
  std::cout << report.table();
  Manifest man("evaluate");
  man.seed = a.seed;
  man.config = {{"cohort", a.cohort}, {"cases", a.cases}, {"mode", a.mode}, {"tol_hours", a.tol},
                {"split", split_json(a.split)}, {"split_name", a.split_name}};
  if (baseline) {
    man.config["baseline"] = a.baseline;
  } else {
    man.config["model"] = a.model;
    man.config["decode"] = a.decode.json();
  }
  if (!a.report.empty()) {
    write_json_file(a.report, report.to_json());
    man.artifacts["report"] = a.report;
  }
  if (!a.csv.empty()) {
    std::ofstream(a.csv) << report.per_feature_csv();
    man.artifacts["per_feature_csv"] = a.csv;
  }
  man.results = report.to_json();
  man.write(manifest_path(a.manifest, a.report, "evaluate"));
  return kOk;
}

// ablate

struct AblateArgs {
  std::string which;
  std::optional<long> steps;
  std::vector<int> ms;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> rollouts;
  std::optional<double> lr;
  bool dry_run = false;
  std::string out;
  std::string manifest;
};

int cmd_ablate(const AblateArgs& a) {
  Manifest man("ablate");
  man.config["experiment"] = a.which;
  std::string table;
  if (a.which == "bottleneck") {
    auto cfg = toy_bottleneck_config();
    if (a.steps) cfg.setup.train.steps = *a.steps;
    if (a.lr) cfg.setup.train.lr = *a.lr;
    if (!a.ms.empty()) cfg.ms = a.ms;
    if (!a.seeds.empty()) cfg.seeds = a.seeds;
    man.seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();
    man.config["cohort"] = cfg.cohort.to_json();
    man.config["train"] = cfg.setup.train.to_json();
    man.config["ms"] = cfg.ms;
    man.config["seeds"] = cfg.seeds;
    std::cout << "plan: " << cfg.seeds.size() * cfg.ms.size() << " summarizer runs of " << cfg.setup.train.steps
              << " steps (m in";
    for (int m : cfg.ms) std::cout << " " << m;
    std::cout << ") on " << cfg.cohort.n_patients << " patients\n";
    if (!a.dry_run) {
      const auto rows = bottleneck_sweep(cfg, [](const std::string& s) { std::cout << s << std::endl; });
      table = bottleneck_table(rows);
    }
  } else if (a.which == "los") {
    auto cfg = toy_los_config();
    if (a.steps) cfg.setup.train.steps = *a.steps;
    if (a.lr) cfg.setup.train.lr = *a.lr;
    if (a.rollouts) cfg.rollouts = *a.rollouts;
    man.seed = cfg.seed;
    man.config["cohort"] = cfg.cohort.to_json();
    man.config["train"] = cfg.setup.train.to_json();
    man.config["rollouts"] = cfg.rollouts;
    std::cout << "plan: train TEXT models with and without LOS for " << cfg.setup.train.steps << " steps on "
              << cfg.cohort.n_patients << " patients, then " << cfg.rollouts << " rollouts each\n";
    if (!a.dry_run) {
      const auto rows = los_ablation(cfg, [](const std::string& s) { std::cout << s << std::endl; });
      table = los_table(rows);
    }
  } else {
    throw UsageError("ablate needs 'bottleneck' or 'los'");
  }
  man.config["dry_run"] = a.dry_run;
  if (!table.empty()) {
    std::cout << table;
    if (!a.out.empty()) {
      std::ofstream(a.out) << table;
      man.artifacts["table"] = a.out;
    }
  }
  man.write(manifest_path(a.manifest, a.out, "ablate"));
  return kOk;
}

// fmt-check

struct FmtArgs {
  std::vector<std::string> files;
  std::string kind = "auto";
  std::string manifest;
};

int cmd_fmt_check(const FmtArgs& a) {
  if (a.kind != "auto" && a.kind != "input" && a.kind != "output") {
    throw UsageError("--kind must be auto, input or output");
  }
  int bad = 0;
  Manifest man("fmt-check");
  Json files = Json::array();
  for (const auto& f : a.files) {
    std::ifstream is(f);
    if (!is) throw UsageError("cannot read " + f);
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    std::string kind = a.kind;
    if (kind == "auto") kind = text.rfind("Patient:", 0) == 0 ? "input" : "output";
    std::vector<Diagnostic> diags;
    if (kind == "input") {
      diags = check_input_text(text);
    } else {
      const auto r = parse_output(text);
      diags = r.diagnostics;
      if (r.status == ParseStatus::Malformed && diags.empty()) diags.push_back({1, 1, "malformed output"});
    }
    for (const auto& d : diags) std::cout << f << ":" << d.line << ":" << d.column << ": " << d.message << "\n";
    if (diags.empty()) std::cout << f << ": ok (" << kind << ")\n";
    bad += diags.empty() ? 0 : 1;
    files.push_back({{"file", f}, {"kind", kind}, {"diagnostics", diags.size()}});
  }
  man.config["kind"] = a.kind;
  man.results["files"] = files;
  man.write(manifest_path(a.manifest, "", "fmt-check"));
  return bad ? kRuntime : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patient pathway modelling toolkit: synthetic cohorts, text codec, toy models, rollouts"};
  app.set_version_flag("--version", EHRTRAJ_VERSION);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic cohort");
  g->add_option("--config", gen.config, "Cohort config file (JSON)");
  g->add_option("--patients", gen.patients, "Number of patients (overrides config)");
  g->add_option("--seed", gen.seed, "Seed (overrides config)");
  g->add_option("--out", gen.out, "Cohort output (JSON lines)")->capture_default_str();
  g->add_option("--dump-config", gen.dump_config, "Write the effective config here");
  g->add_option("--manifest", gen.manifest, "Manifest path (default <out>.manifest.json)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a summarizer or pathway model");
  t->add_option("--cohort", tr.cohort, "Cohort file")->required();
  t->add_option("--role", tr.role, "summarizer | pathway")->capture_default_str();
  t->add_option("--variant", tr.variant, "TEXT | SUMM | SUMM_TEXT")->capture_default_str();
  t->add_option("--out", tr.out, "Checkpoint output")->capture_default_str();
  t->add_option("--summarizer", tr.summarizer, "Summarizer checkpoint (SUMM variants)");
  t->add_option("--resume", tr.resume, "Continue from this pathway checkpoint");
  t->add_option("--finetune", tr.finetune, "pathway | outcome (needs --resume and --task)");
  t->add_option("--task", tr.task, "Task for fine-tuning");
  t->add_option("--curve", tr.curve, "Training curve CSV");
  t->add_option("--steps", tr.steps, "Optimiser steps")->capture_default_str();
  t->add_option("--batch", tr.batch, "Sequences per step")->capture_default_str();
  t->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  t->add_option("--weight-decay", tr.weight_decay, "AdamW weight decay")->capture_default_str();
  t->add_option("--clip", tr.clip, "Gradient norm clip (0 = off)")->capture_default_str();
  t->add_option("--warmup", tr.warmup, "Linear warmup steps")->capture_default_str();
  t->add_option("--eval-every", tr.eval_every, "Validation interval")->capture_default_str();
  t->add_option("--seed", tr.seed, "Seed")->capture_default_str();
  t->add_option("--layers", tr.layers, "Transformer layers")->capture_default_str();
  t->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
  t->add_option("--dim", tr.dim, "Model dimension")->capture_default_str();
  t->add_option("--ff", tr.ff, "Feed-forward dimension")->capture_default_str();
  t->add_option("--max-seq", tr.max_seq, "Context length")->capture_default_str();
  t->add_option("--m", tr.m, "Summary slots per block")->capture_default_str();
  t->add_option("--output-reserve", tr.output_reserve, "Summarizer output tokens per block")->capture_default_str();
  t->add_option("--window", tr.window, "Text window in hours or 'full'")->capture_default_str();
  t->add_flag("--no-los", tr.no_los, "Train without the LOS indicator");
  t->add_flag("--no-weighting", tr.no_weighting, "Uniform instead of rarity-weighted sampling");
  t->add_option("--transition-boost", tr.transition_boost, "Weight multiplier for state transitions")
      ->capture_default_str();
  t->add_option("--overfit", tr.overfit, "Train on the first N samples only, without augmentation");
  t->add_option("--val-samples", tr.val_samples, "Validation sequences")->capture_default_str();
  t->add_option("--outcome-cases", tr.outcome_cases, "Cases for outcome fine-tuning")->capture_default_str();
  t->add_option("--manifest", tr.manifest, "Manifest path");
  add_split_options(t, tr.split);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Roll out trajectories for a task or one patient");
  s->add_option("--cohort", sim.cohort, "Cohort file")->required();
  s->add_option("--model", sim.model, "Pathway checkpoint")->required();
  s->add_option("--summarizer", sim.summarizer, "Summarizer checkpoint (SUMM variants)");
  s->add_option("--task", sim.task, "Task name");
  s->add_option("--patient", sim.patient, "Patient id for an ad-hoc rollout");
  s->add_option("--t0", sim.t0, "Start hour of the ad-hoc rollout")->capture_default_str();
  s->add_option("--steps", sim.steps, "Step cap of the ad-hoc rollout")->capture_default_str();
  s->add_option("--split-name", sim.split_name, "train | val | test")->capture_default_str();
  s->add_option("--cases", sim.cases, "Maximum task cases")->capture_default_str();
  s->add_option("--retries", sim.retries, "Resamples after unusable output")->capture_default_str();
  s->add_flag("--direct-outcome", sim.direct_outcome, "Model was fine-tuned to answer the outcome directly");
  s->add_option("--seed", sim.seed, "Seed")->capture_default_str();
  s->add_option("--out", sim.out, "Trajectory output (JSON lines)");
  s->add_option("--report", sim.report, "Metric report (JSON)");
  s->add_option("--manifest", sim.manifest, "Manifest path");
  add_decode_options(s, sim.decode);
  add_split_options(s, sim.split);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Next-hour evaluation of a model or the Statistic baseline");
  e->add_option("--cohort", ev.cohort, "Cohort file")->required();
  e->add_option("--model", ev.model, "Pathway checkpoint");
  e->add_option("--summarizer", ev.summarizer, "Summarizer checkpoint (SUMM variants)");
  e->add_option("--baseline", ev.baseline, "statistic");
  e->add_option("--split-name", ev.split_name, "train | val | test")->capture_default_str();
  e->add_option("--cases", ev.cases, "Evaluation timepoints")->capture_default_str();
  e->add_option("--mode", ev.mode, "max-error | matched-only")->capture_default_str();
  e->add_option("--tol", ev.tol, "Match tolerance in hours")->capture_default_str();
  e->add_option("--seed", ev.seed, "Seed")->capture_default_str();
  e->add_option("--report", ev.report, "Metric report (JSON)");
  e->add_option("--csv", ev.csv, "Per-feature CSV");
  e->add_option("--manifest", ev.manifest, "Manifest path");
  add_decode_options(e, ev.decode);
  add_split_options(e, ev.split);

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Bottleneck-size sweep or LOS indicator ablation");
  a->add_option("experiment", ab.which, "bottleneck | los")->required();
  a->add_option("--steps", ab.steps, "Training steps per run");
  a->add_option("--lr", ab.lr, "Learning rate");
  a->add_option("--ms", ab.ms, "Summary sizes")->delimiter(',');
  a->add_option("--seeds", ab.seeds, "Seeds")->delimiter(',');
  a->add_option("--rollouts", ab.rollouts, "Rollouts per arm (los)");
  a->add_flag("--dry-run", ab.dry_run, "Print the plan only");
  a->add_option("--out", ab.out, "Result table (CSV)");
  a->add_option("--manifest", ab.manifest, "Manifest path");

  FmtArgs fmt;
  auto* f = app.add_subcommand("fmt-check", "Validate rendered input or output text files");
  f->add_option("files", fmt.files, "Files to check")->required();
  f->add_option("--kind", fmt.kind, "auto | input | output")->capture_default_str();
  f->add_option("--manifest", fmt.manifest, "Manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*s) return cmd_simulate(sim);
    if (*e) return cmd_evaluate(ev);
    if (*a) return cmd_ablate(ab);
    if (*f) return cmd_fmt_check(fmt);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

#include "ehrtraj/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ehrtraj {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Text: return "TEXT";
    case Variant::Summ: return "SUMM";
    case Variant::SummText: return "SUMM_TEXT";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  std::string up(name);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  std::replace(up.begin(), up.end(), '-', '_');
  std::replace(up.begin(), up.end(), '+', '_');
  if (up == "TEXT") return Variant::Text;
  if (up == "SUMM") return Variant::Summ;
  if (up == "SUMM_TEXT") return Variant::SummText;
  return std::nullopt;
}

int sample_token(std::span<const float> logits, const DecodeConfig& cfg, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  auto allowed = [](int id) { return id == kEos || !Vocab::is_reserved(id); };
  if (cfg.temperature <= 0.0 || cfg.top_k == 1) {
    int best = -1;
    for (int i = 0; i < v; ++i) {
      if (allowed(i) && (best < 0 || logits[i] > logits[best])) best = i;
    }
    return best;
  }
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) {
    if (allowed(i)) order.push_back(i);
  }
  // stable: equal logits keep id order
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits[a] > logits[b]; });
  if (cfg.top_k > 0 && static_cast<int>(order.size()) > cfg.top_k) order.resize(static_cast<std::size_t>(cfg.top_k));
  const double top = logits[order.front()];
  std::vector<double> probs;
  double z = 0.0;
  for (int id : order) {
    probs.push_back(std::exp((logits[id] - top) / cfg.temperature));
    z += probs.back();
  }
  std::size_t keep = probs.size();
  if (cfg.top_p < 1.0) {
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i] / z;
      if (cum >= cfg.top_p) {
        keep = i + 1;
        break;
      }
    }
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += probs[i];
  const double u = uniform01(rng) * mass;
  double acc = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    acc += probs[i];
    if (u < acc) return order[i];
  }
  return order[keep - 1];
}

Generation generate(const Net& net, const Vocab& vocab, const Seq& prompt, const DecodeConfig& cfg,
                    Rng& rng) {
  Generation g;
  const int max_seq = net.config().max_seq;
  if (prompt.size() >= max_seq) return g;
  auto state = net.start_decode();
  auto logits = net.prefill(state, prompt);
  for (int i = 0; i < cfg.max_new_tokens; ++i) {
    const int tok = sample_token(std::span<const float>(logits.data(), static_cast<std::size_t>(logits.size())), cfg, rng);
    if (tok == kEos) {
      g.hit_eos = true;
      break;
    }
    g.ids.push_back(tok);
    if (state.length >= max_seq) break;
    logits = net.step(state, tok);
  }
  g.text = vocab.decode(g.ids);
  return g;
}

// Summarizer

Summarizer::Summarizer(Net net, Vocab vocab, int m, int output_reserve)
    : net_(std::move(net)), vocab_(std::move(vocab)), m_(m), output_reserve_(output_reserve) {
  if (m_ < 1) throw std::invalid_argument("summarizer needs m >= 1");
  if (block_tokens() < 1) throw std::invalid_argument("max_seq too small for m and output reserve");
}

int Summarizer::block_tokens() const { return net_.config().max_seq - m_ - output_reserve_; }

std::vector<std::vector<int>> Summarizer::split_blocks(std::string_view section_text) const {
  const auto ids = vocab_.encode(section_text);
  const auto block = static_cast<std::size_t>(block_tokens());
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < ids.size(); i += block) {
    out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                     ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), i + block)));
  }
  if (out.empty()) out.emplace_back();
  return out;
}

Seq Summarizer::summary_sequence(std::span<const int> block) const {
  Seq s;
  s.ids.assign(block.begin(), block.end());
  s.ids.insert(s.ids.end(), static_cast<std::size_t>(m_), kSum);
  s.targets.assign(s.ids.size(), 0);
  s.mask = bottleneck_mask({static_cast<int>(block.size()), m_, 0});
  return s;
}

Seq Summarizer::training_sequence(std::span<const int> block, std::string_view output_text) const {
  Seq s;
  s.ids.assign(block.begin(), block.end());
  s.ids.insert(s.ids.end(), static_cast<std::size_t>(m_), kSum);
  s.ids.push_back(kOut);
  const auto out = vocab_.encode(output_text);
  s.ids.insert(s.ids.end(), out.begin(), out.end());
  s.ids.push_back(kEos);
  if (s.size() > net_.config().max_seq) throw std::length_error("summarizer sample exceeds max_seq");
  const int n = static_cast<int>(block.size());
  const int o = s.size() - n - m_;
  s.targets.assign(s.ids.size(), 0);
  // OUT itself is predicted from the summary slots but carries no content.
  for (int i = n + m_ + 1; i < s.size(); ++i) s.targets[static_cast<std::size_t>(i)] = 1;
  s.mask = bottleneck_mask({n, m_, o});
  return s;
}

std::vector<std::vector<float>> Summarizer::summarize_block(std::span<const int> block) const {
  const Seq s = summary_sequence(block);
  const auto h = net_.hidden_states(s);
  std::vector<std::vector<float>> out;
  const int n = static_cast<int>(block.size());
  for (int i = 0; i < m_; ++i) {
    const auto row = h.row(n + i);
    out.emplace_back(row.data(), row.data() + row.size());
  }
  return out;
}

SummaryBlock Summarizer::summarize_section(Unit unit, const std::string& category,
                                           std::string_view section_text) const {
  SummaryBlock b{unit, category, {}};
  for (const auto& block : split_blocks(section_text)) {
    auto v = summarize_block(block);
    b.vectors.insert(b.vectors.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  return b;
}

SummaryState Summarizer::summarize_record(const PatientRecord& record, int t) const {
  SummaryState out;
  for (const auto& [unit, cat] : sections_at(record, t)) {
    const std::string text = render_section(record, t, unit, cat, std::nullopt);
    if (text.empty()) continue;
    out.push_back(summarize_section(unit, cat, text));
  }
  return out;
}

// Pathway

Json PathwayConfig::to_json() const {
  Json j;
  j["variant"] = std::string(variant_name(variant));
  j["window_hours"] = window_hours ? Json(*window_hours) : Json(nullptr);
  j["include_los"] = include_los;
  j["los_noise_pct"] = los_noise_pct;
  j["los_drop_prob"] = los_drop_prob;
  j["m"] = m;
  return j;
}

PathwayConfig PathwayConfig::from_json(const Json& j) {
  PathwayConfig c;
  const auto v = parse_variant(j.at("variant").get<std::string>());
  if (!v) throw std::invalid_argument("unknown variant " + j.at("variant").get<std::string>());
  c.variant = *v;
  if (!j.at("window_hours").is_null()) c.window_hours = j.at("window_hours").get<int>();
  else c.window_hours.reset();
  c.include_los = j.at("include_los").get<bool>();
  c.los_noise_pct = j.at("los_noise_pct").get<double>();
  c.los_drop_prob = j.at("los_drop_prob").get<double>();
  c.m = j.at("m").get<int>();
  return c;
}

PatientRecord with_true_los(const PatientRecord& record, int t) {
  PatientRecord r = record;
  const auto los = true_los(record, t);
  for (auto& [unit, ud] : r.units) ud.los_remaining.reset();
  for (const auto& [unit, h] : los) r.units[unit].los_remaining = h;
  return r;
}

TimestepOutput strip_los(TimestepOutput out) {
  out.los.clear();
  return out;
}

Assembled assemble_pathway_input(const PatientRecord& record, int t, const PathwayConfig& cfg,
                                 const Vocab& vocab, const SummaryState* summaries,
                                 const AssemblyOptions& opts) {
  const bool want_summaries = uses_summaries(cfg.variant) && !opts.drop_summaries;
  bool want_text = uses_text(cfg.variant) && !opts.drop_text;
  if (cfg.variant == Variant::SummText && opts.drop_text && opts.drop_summaries) {
    throw std::invalid_argument("cannot drop both text and summaries");
  }
  if (cfg.variant == Variant::SummText && opts.drop_summaries) want_text = true;
  if (want_summaries && !summaries) {
    throw std::invalid_argument(std::string(variant_name(cfg.variant)) + " input needs summaries");
  }

  RenderConfig rc;
  rc.window_hours = cfg.window_hours;
  rc.include_los = cfg.include_los;
  PatientRecord view = record;
  if (cfg.include_los && opts.los_rng) {
    Rng& rng = *opts.los_rng;
    if (bernoulli(rng, cfg.los_drop_prob)) {
      for (auto& [u, ud] : view.units) ud.los_remaining.reset();
    } else {
      for (auto& [u, ud] : view.units) {
        if (ud.los_remaining) ud.los_remaining = noisy_los(*ud.los_remaining, cfg.los_noise_pct, rng);
      }
    }
  }
  const RenderedInput rendered = render_input(view, t, rc);

  Assembled a;
  a.seq.ids.push_back(kBos);
  if (want_summaries) {
    for (const auto& block : *summaries) {
      a.seq.ids.push_back(kSep);
      for (const auto& v : block.vectors) {
        a.seq.injections.emplace_back(a.seq.size(), v);
        a.seq.ids.push_back(kSum);
      }
    }
  }
  const std::string body = want_text ? rendered.text() : rendered.skeleton();
  const auto ids = vocab.encode(body);
  a.seq.ids.insert(a.seq.ids.end(), ids.begin(), ids.end());
  a.seq.ids.push_back(kOut);
  a.seq.targets.assign(a.seq.ids.size(), 0);

  // Context is the text the input stands for: the window for TEXT, the whole
  // history once summaries are involved.
  if (uses_summaries(cfg.variant)) {
    RenderConfig full = rc;
    full.window_hours.reset();
    a.counts.context_tokens = vocab.encode(render_input(view, t, full).text()).size();
  } else {
    a.counts.context_tokens = ids.size();
  }
  a.counts.input_tokens = a.seq.ids.size();
  return a;
}

PathwayModel::PathwayModel(Net net, Vocab vocab, PathwayConfig cfg)
    : net_(std::move(net)), vocab_(std::move(vocab)), cfg_(cfg) {}

std::optional<Seq> PathwayModel::training_sequence(const Assembled& input,
                                                   std::string_view target_text) const {
  Seq s = input.seq;
  const auto out = vocab_.encode(target_text);
  if (s.size() + static_cast<int>(out.size()) + 1 > net_.config().max_seq) return std::nullopt;
  s.ids.insert(s.ids.end(), out.begin(), out.end());
  s.ids.push_back(kEos);
  s.targets.resize(s.ids.size(), 1);
  return s;
}

// Checkpoints

namespace {

constexpr char kMagic[8] = {'E', 'H', 'R', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

Json net_to_json(const nn::TransformerConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"max_seq", c.max_seq},     {"layers", c.layers},
          {"heads", c.heads},           {"model_dim", c.model_dim}, {"ff_dim", c.ff_dim}};
}

nn::TransformerConfig net_from_json(const Json& j) {
  nn::TransformerConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq = j.at("max_seq").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.check();
  return c;
}

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

void write_floats(std::ostream& os, const std::vector<float>& v) {
  write_pod<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  std::vector<float> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Json header;
  header["role"] = ckpt.role;
  header["config"] = net_to_json(ckpt.net);
  header["vocab"] = ckpt.vocab.to_json();
  header["meta"] = ckpt.meta;
  header["step"] = ckpt.step;
  const std::string h = header.dump();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, kCkptVersion);
    write_pod<std::uint64_t>(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    write_floats(os, ckpt.params);
    write_floats(os, ckpt.adam_m);
    write_floats(os, ckpt.adam_v);
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCkptVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = read_pod<std::uint64_t>(is);
  std::string h(hlen, '\0');
  is.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("truncated checkpoint");
  const Json header = Json::parse(h);
  Checkpoint c;
  c.role = header.at("role").get<std::string>();
  c.net = net_from_json(header.at("config"));
  c.vocab = Vocab::from_json(header.at("vocab"));
  c.meta = header.at("meta");
  c.step = header.at("step").get<long>();
  c.params = read_floats(is);
  c.adam_m = read_floats(is);
  c.adam_v = read_floats(is);
  return c;
}

Net net_from_checkpoint(const Checkpoint& ckpt) {
  Net net(ckpt.net);
  if (net.num_params() != ckpt.params.size()) throw std::runtime_error("checkpoint parameter count mismatch");
  std::copy(ckpt.params.begin(), ckpt.params.end(), net.params().begin());
  return net;
}

Summarizer summarizer_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.role != "summarizer") throw std::runtime_error("checkpoint role is " + ckpt.role + ", expected summarizer");
  return Summarizer(net_from_checkpoint(ckpt), ckpt.vocab, ckpt.meta.at("m").get<int>(),
                    ckpt.meta.at("output_reserve").get<int>());
}

PathwayModel pathway_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.role != "pathway") throw std::runtime_error("checkpoint role is " + ckpt.role + ", expected pathway");
  return PathwayModel(net_from_checkpoint(ckpt), ckpt.vocab, PathwayConfig::from_json(ckpt.meta.at("pathway")));
}

}  // namespace ehrtraj

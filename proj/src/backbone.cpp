#include "densea/backbone.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace densea {

using nlohmann::json;

void validate_backbone(const BackboneConfig& cfg) {
  if (cfg.feature_dim < 1) throw ConfigError("backbone: feature_dim must be >= 1");
  if (cfg.n_classes < 2) throw ConfigError("backbone: n_classes must be >= 2");
  if (cfg.hidden_dim < 1) throw ConfigError("backbone: hidden_dim must be >= 1");
  if (cfg.encoding_dim < 1) throw ConfigError("backbone: encoding_dim must be >= 1");
  if (cfg.embed_dim < 1) throw ConfigError("backbone: embed_dim must be >= 1");
  if (cfg.max_steps < 1) throw ConfigError("backbone: max_steps must be >= 1");
  if (cfg.conditional && cfg.cond_embed_dim < 1)
    throw ConfigError("backbone: cond_embed_dim must be >= 1 for conditional models");
  if (!(cfg.prob_floor > 0.0)) throw ConfigError("backbone: prob_floor must be positive");
  if (!(cfg.duration_floor > 0.0)) throw ConfigError("backbone: duration_floor must be positive");
}

namespace {

// Uniform +-1/sqrt(fan_in) with a per-parameter stream, so adding or removing
// one parameter never shifts the initialization of the others.
void fill_uniform(Param& p, uint64_t seed) {
  double r = 1.0 / std::sqrt(static_cast<double>(p.cols));
  Rng rng = Rng::derive(seed, "init/" + p.name);
  for (double& v : p.value) v = rng.uniform(-r, r);
}

void fill_lstm_bias(Param& b, int hidden) {
  // forget-gate rows start open so early gradients reach the cell state
  for (int j = hidden; j < 2 * hidden; ++j) b.value[static_cast<size_t>(j)] = 1.0;
}

}  // namespace

Model init_model(const BackboneConfig& cfg, uint64_t seed) {
  validate_backbone(cfg);
  Model m;
  m.cfg = cfg;
  const int h = cfg.hidden_dim;
  const int dI = cfg.encoding_dim;
  const int de = cfg.embed_dim;
  const int K = cfg.n_classes;
  const int dec_in = de + (cfg.conditional ? cfg.cond_embed_dim : 0);

  auto& ps = m.params;
  fill_uniform(ps.add("enc.Wx", 4 * h, cfg.feature_dim), seed);
  fill_uniform(ps.add("enc.Wh", 4 * h, h), seed);
  fill_lstm_bias(ps.add("enc.b", 1, 4 * h), h);
  fill_uniform(ps.add("proj.W", dI, h), seed);
  ps.add("proj.b", 1, dI);
  fill_uniform(ps.add("embed.E", de, K), seed);
  fill_uniform(ps.add("embed.sos", 1, de), seed);
  if (cfg.conditional) fill_uniform(ps.add("cond.C", K, cfg.cond_embed_dim), seed);
  fill_uniform(ps.add("dec.Wx", 4 * h, dec_in), seed);
  fill_uniform(ps.add("dec.Wh", 4 * h, h), seed);
  fill_lstm_bias(ps.add("dec.b", 1, 4 * h), h);
  fill_uniform(ps.add("cls.W", K, h), seed);
  ps.add("cls.b", 1, K);
  fill_uniform(ps.add("attn.W", dI, h), seed);
  ps.add("attn.b", 1, dI);
  fill_uniform(ps.add("dur.attn_beta", 1, dI + h), seed);
  ps.add("dur.attn_eps", 1, 1);
  fill_uniform(ps.add("dur.plain_beta", 1, h), seed);
  ps.add("dur.plain_eps", 1, 1);
  return m;
}

size_t count_parameters(const ParamStore& ps) {
  size_t n = 0;
  for (const Param* p : ps.all()) n += p->size();
  return n;
}

size_t count_parameters(const Model& m) { return count_parameters(m.params); }

BoundModel bind_model(Model& m, Binder& binder) {
  BoundModel bm;
  bm.cfg = &m.cfg;
  auto& ps = m.params;
  bm.enc.Wx = binder.bind(ps.at("enc.Wx"));
  bm.enc.Wh = binder.bind(ps.at("enc.Wh"));
  bm.enc.b = binder.bind(ps.at("enc.b"));
  bm.proj_W = binder.bind(ps.at("proj.W"));
  bm.proj_b = binder.bind(ps.at("proj.b"));
  bm.embed = binder.bind(ps.at("embed.E"));
  bm.sos = binder.bind(ps.at("embed.sos"));
  if (m.cfg.conditional) bm.cond_embed = binder.bind(ps.at("cond.C"));
  bm.dec.Wx = binder.bind(ps.at("dec.Wx"));
  bm.dec.Wh = binder.bind(ps.at("dec.Wh"));
  bm.dec.b = binder.bind(ps.at("dec.b"));
  bm.cls_W = binder.bind(ps.at("cls.W"));
  bm.cls_b = binder.bind(ps.at("cls.b"));
  bm.attn_W = binder.bind(ps.at("attn.W"));
  bm.attn_b = binder.bind(ps.at("attn.b"));
  bm.dur_attn_beta = binder.bind(ps.at("dur.attn_beta"));
  bm.dur_attn_eps = binder.bind(ps.at("dur.attn_eps"));
  bm.dur_plain_beta = binder.bind(ps.at("dur.plain_beta"));
  bm.dur_plain_eps = binder.bind(ps.at("dur.plain_eps"));
  return bm;
}

VideoEncoding encode(Tape& t, const BoundModel& bm, const double* features, int frames) {
  const BackboneConfig& cfg = *bm.cfg;
  if (frames < 1) throw DimensionError("encode: need at least one observed frame");

  LstmState st = lstm_zero_state(t, cfg.hidden_dim);
  std::vector<LstmState> states;
  states.reserve(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    Mat x = make_leaf_mat(t, features + static_cast<size_t>(f) * cfg.feature_dim, 1,
                          cfg.feature_dim);
    st = lstm_step(t, x, st, bm.enc);
    states.push_back(st);
  }

  // Project every hidden state down to an encoding row.  All dot products
  // first, then the bias adds, so the encoding block itself is contiguous.
  std::vector<NodeId> dots(static_cast<size_t>(frames) * cfg.encoding_dim);
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < cfg.encoding_dim; ++j)
      dots[static_cast<size_t>(f) * cfg.encoding_dim + j] =
          t.dot(bm.proj_W.id(j, 0), 1, states[static_cast<size_t>(f)].h.base, 1, cfg.hidden_dim);
  NodeId first = kNoNode;
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < cfg.encoding_dim; ++j) {
      NodeId v = t.add(dots[static_cast<size_t>(f) * cfg.encoding_dim + j], bm.proj_b.id(j));
      if (first == kNoNode) first = v;
    }

  VideoEncoding out;
  out.I = Mat{first, frames, cfg.encoding_dim};
  out.final_state = st;
  out.frames = frames;
  return out;
}

AttentionOut attention_score(Tape& t, const Mat& h, const VideoEncoding& enc, const Mat& attn_W,
                             const Mat& attn_b) {
  const int dI = attn_W.rows;
  const int dh = attn_W.cols;
  if (h.rows != 1 || h.cols != dh) throw DimensionError("attention_score: query shape mismatch");
  if (enc.I.cols != dI) throw DimensionError("attention_score: encoding width mismatch");
  if (attn_b.size() != dI) throw DimensionError("attention_score: bias shape mismatch");
  const int T = enc.I.rows;

  // query = W h + b
  std::vector<NodeId> qdots(static_cast<size_t>(dI));
  for (int j = 0; j < dI; ++j) qdots[static_cast<size_t>(j)] = t.dot(attn_W.id(j, 0), 1, h.base, 1, dh);
  NodeId q0 = kNoNode;
  for (int j = 0; j < dI; ++j) {
    NodeId v = t.add(qdots[static_cast<size_t>(j)], attn_b.id(j));
    if (q0 == kNoNode) q0 = v;
  }
  Mat q{q0, 1, dI};

  // scaled scores against each encoding row
  std::vector<NodeId> sdots(static_cast<size_t>(T));
  for (int f = 0; f < T; ++f) sdots[static_cast<size_t>(f)] = t.dot(q.base, 1, enc.I.id(f, 0), 1, dI);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dI));
  NodeId s0 = kNoNode;
  for (int f = 0; f < T; ++f) {
    NodeId v = t.mul_c(sdots[static_cast<size_t>(f)], inv_sqrt);
    if (s0 == kNoNode) s0 = v;
  }
  Mat scores{s0, 1, T};

  AttentionOut out;
  out.weights = softmax_row(t, scores);

  // context = weights . I  (column dots, strided over the encoding block)
  NodeId c0 = kNoNode;
  for (int j = 0; j < dI; ++j) {
    NodeId v = t.dot(out.weights.base, 1, enc.I.base + j, dI, T);
    if (c0 == kNoNode) c0 = v;
  }
  out.context = Mat{c0, 1, dI};
  return out;
}

RolloutSession::RolloutSession(Tape& t, const BoundModel& bm, const VideoEncoding& enc,
                               int weak_label)
    : t_(&t), bm_(&bm), enc_(&enc), state_(enc.final_state), weak_label_(weak_label) {
  const BackboneConfig& cfg = *bm.cfg;
  if (cfg.conditional) {
    if (weak_label < 0)
      throw ConfigError("rollout: conditional model requires a weak label at the first step");
    if (weak_label >= cfg.n_classes) throw IndexError("rollout: weak label out of range");
  } else if (weak_label >= 0) {
    throw ConfigError("rollout: weak label given to a non-conditional model");
  }
}

void RolloutSession::force_feedback(std::vector<int> classes) {
  for (int c : classes)
    if (c < 0 || c >= bm_->cfg->n_classes)
      throw IndexError("force_feedback: class out of range");
  forced_ = std::move(classes);
}

StepOutput RolloutSession::step() {
  Tape& t = *t_;
  const BoundModel& bm = *bm_;
  const BackboneConfig& cfg = *bm.cfg;
  const int K = cfg.n_classes;
  const int de = cfg.embed_dim;

  Mat prev_h = state_.h;  // hidden of the previous step (encoder final at step 1)

  // decoder input: start token at step 1, soft class embedding afterwards.
  // Two overrides replace the soft feedback with a known class's embedding
  // column: teacher forcing (training graphs), and — for conditional models —
  // the weak label at step 2, since the first future class is known outright
  // and the rollout should continue from it, not from the step-1 estimate.
  int hard_class = -1;
  if (steps_ > 0 && static_cast<size_t>(steps_ - 1) < forced_.size())
    hard_class = forced_[static_cast<size_t>(steps_ - 1)];
  else if (cfg.conditional && steps_ == 1)
    hard_class = weak_label_;
  Mat emb;
  if (steps_ == 0) {
    emb = bm.sos;
  } else if (hard_class >= 0) {
    NodeId e0 = kNoNode;
    for (int i = 0; i < de; ++i) {
      NodeId v = t.copy(bm.embed.id(i, hard_class));
      if (e0 == kNoNode) e0 = v;
    }
    emb = Mat{e0, 1, de};
  } else {
    NodeId e0 = kNoNode;
    for (int i = 0; i < de; ++i) {
      NodeId v = t.dot(bm.embed.id(i, 0), 1, prev_dist_.base, 1, K);
      if (e0 == kNoNode) e0 = v;
    }
    emb = Mat{e0, 1, de};
  }
  Mat x = emb;
  if (cfg.conditional) {
    if (steps_ == 0) {
      x = concat_rows(t, {emb, row(bm.cond_embed, weak_label_)});
    } else {
      Mat zeros = make_zero_mat(t, 1, cfg.cond_embed_dim);
      x = concat_rows(t, {emb, zeros});
    }
  }

  state_ = lstm_step(t, x, state_, bm.dec);
  Mat h = state_.h;

  // class head
  std::vector<NodeId> ldots(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) ldots[static_cast<size_t>(k)] = t.dot(bm.cls_W.id(k, 0), 1, h.base, 1, cfg.hidden_dim);
  NodeId l0 = kNoNode;
  for (int k = 0; k < K; ++k) {
    NodeId v = t.add(ldots[static_cast<size_t>(k)], bm.cls_b.id(k));
    if (l0 == kNoNode) l0 = v;
  }
  Mat logits{l0, 1, K};

  StepOutput so;
  so.class_dist = softmax_row(t, logits);
  so.hidden = h;

  // duration head: attention context over the observed encoding paired with
  // the previous hidden state, or a plain linear read of the current one
  NodeId raw;
  if (cfg.attention) {
    AttentionOut att = attention_score(t, h, *enc_, bm.attn_W, bm.attn_b);
    so.attn = att.weights;
    Mat cc = concat_rows(t, {att.context, prev_h});
    raw = t.add(t.dot(bm.dur_attn_beta.base, 1, cc.base, 1, cc.cols), bm.dur_attn_eps.id(0));
  } else {
    raw = t.add(t.dot(bm.dur_plain_beta.base, 1, h.base, 1, cfg.hidden_dim),
                bm.dur_plain_eps.id(0));
  }
  so.duration = cfg.raw_linear_duration ? raw : t.softplus(raw);

  prev_dist_ = so.class_dist;
  ++steps_;
  return so;
}

AnticipatedSequence anticipate_full(const Model& m, const double* observed, int frames,
                                    double horizon, int weak_label) {
  if (!(horizon > 0.0)) throw ConfigError("anticipate: horizon must be positive");
  Model scratch = m;  // value-only use; gradients are never harvested
  Tape t;
  Binder binder(t);
  BoundModel bm = bind_model(scratch, binder);
  VideoEncoding enc = encode(t, bm, observed, frames);
  RolloutSession rs(t, bm, enc, weak_label);

  AnticipatedSequence out;
  double cum = 0.0;
  bool covered = false;
  for (int s = 0; s < m.cfg.max_steps; ++s) {
    StepOutput so = rs.step();
    StepValue sv;
    sv.class_dist = read_mat(t, so.class_dist);
    sv.duration = std::max(t.val(so.duration), m.cfg.duration_floor);
    if (!so.attn.empty()) sv.attn = read_mat(t, so.attn);
    cum += sv.duration;
    out.steps.push_back(std::move(sv));
    if (!covered && cum >= horizon) {
      covered = true;
      out.natural_len = s + 1;
    }
  }
  if (covered) {
    out.stop_reason = StopReason::HorizonCovered;
  } else {
    out.stop_reason = StopReason::MaxSteps;
    out.natural_len = static_cast<int>(out.steps.size());
  }
  return out;
}

AnticipatedSequence truncate_to_horizon(const AnticipatedSequence& full, double horizon) {
  if (!(horizon > 0.0)) throw ConfigError("anticipate: horizon must be positive");
  AnticipatedSequence out;
  out.stop_reason = StopReason::MaxSteps;
  double cum = 0.0;
  for (const StepValue& sv : full.steps) {
    out.steps.push_back(sv);
    if (cum + sv.duration >= horizon) {
      out.steps.back().duration = horizon - cum;
      out.stop_reason = StopReason::HorizonCovered;
      break;
    }
    cum += sv.duration;
  }
  out.natural_len = static_cast<int>(out.steps.size());
  return out;
}

AnticipatedSequence anticipate(const Model& m, const double* observed, int frames, double horizon,
                               int weak_label) {
  return truncate_to_horizon(anticipate_full(m, observed, frames, horizon, weak_label), horizon);
}

// ---- checkpoints --------------------------------------------------------

namespace {

json config_to_json(const BackboneConfig& c) {
  return json{{"feature_dim", c.feature_dim},
              {"n_classes", c.n_classes},
              {"hidden_dim", c.hidden_dim},
              {"encoding_dim", c.encoding_dim},
              {"embed_dim", c.embed_dim},
              {"max_steps", c.max_steps},
              {"attention", c.attention},
              {"raw_linear_duration", c.raw_linear_duration},
              {"conditional", c.conditional},
              {"cond_embed_dim", c.cond_embed_dim},
              {"prob_floor", c.prob_floor},
              {"duration_floor", c.duration_floor}};
}

BackboneConfig config_from_json(const json& j, const std::string& path) {
  BackboneConfig c;
  try {
    c.feature_dim = j.at("feature_dim").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.encoding_dim = j.at("encoding_dim").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.max_steps = j.at("max_steps").get<int>();
    c.attention = j.at("attention").get<bool>();
    c.raw_linear_duration = j.at("raw_linear_duration").get<bool>();
    c.conditional = j.at("conditional").get<bool>();
    c.cond_embed_dim = j.at("cond_embed_dim").get<int>();
    c.prob_floor = j.at("prob_floor").get<double>();
    c.duration_floor = j.at("duration_floor").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad checkpoint config: " + e.what());
  }
  return c;
}

}  // namespace

void save_model_checkpoint(const Model& m, const std::string& kind, const std::string& path) {
  if (kind != "conditional" && kind != "primary")
    throw ConfigError("checkpoint kind must be 'conditional' or 'primary', got '" + kind + "'");
  if ((kind == "conditional") != m.cfg.conditional)
    throw ConfigError("checkpoint kind '" + kind + "' does not match the model's conditional flag");

  json j;
  j["version"] = 1;
  j["kind"] = kind;
  j["config"] = config_to_json(m.cfg);
  json params = json::array();
  for (const Param* p : m.params.all()) {
    params.push_back(
        json{{"name", p->name}, {"rows", p->rows}, {"cols", p->cols}, {"data", p->value}});
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

LoadedModel load_model_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }

  if (!j.is_object() || !j.contains("version") || !j.at("version").is_number_integer())
    throw ParseError(path + ": missing checkpoint version");
  if (j.at("version").get<int>() != 1)
    throw ParseError(path + ": unsupported checkpoint version " + j.at("version").dump());
  std::string kind = j.value("kind", std::string());
  if (kind != "conditional" && kind != "primary")
    throw ParseError(path + ": unknown checkpoint kind '" + kind + "'");
  if (!j.contains("config") || !j.contains("params"))
    throw ParseError(path + ": checkpoint needs 'config' and 'params'");

  BackboneConfig cfg = config_from_json(j.at("config"), path);
  if ((kind == "conditional") != cfg.conditional)
    throw ParseError(path + ": kind '" + kind + "' conflicts with the conditional flag");
  validate_backbone(cfg);

  // Build the expected skeleton from the config, then overwrite values; any
  // shape or name drift in the file is an error, not a silent partial load.
  LoadedModel lm;
  lm.kind = kind;
  lm.model = init_model(cfg, 0);
  const json& params = j.at("params");
  if (!params.is_array() || params.size() != lm.model.params.all().size())
    throw ParseError(path + ": parameter list does not match the config's skeleton");
  for (const json& pj : params) {
    std::string name;
    try {
      name = pj.at("name").get<std::string>();
      int rows = pj.at("rows").get<int>();
      int cols = pj.at("cols").get<int>();
      std::vector<double> data = pj.at("data").get<std::vector<double>>();
      if (!lm.model.params.has(name)) throw ParseError(path + ": unexpected parameter '" + name + "'");
      Param& p = lm.model.params.at(name);
      if (p.rows != rows || p.cols != cols || p.size() != data.size())
        throw ParseError(path + ": shape mismatch for parameter '" + name + "'");
      p.value = std::move(data);
    } catch (const json::exception& e) {
      throw ParseError(path + ": bad parameter entry: " + e.what());
    }
  }
  return lm;
}

}  // namespace densea

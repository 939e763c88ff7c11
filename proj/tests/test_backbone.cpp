#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "densea/backbone.hpp"
#include "densea/gradcheck.hpp"

using namespace densea;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig cfg;
  cfg.feature_dim = 3;
  cfg.n_classes = 4;
  cfg.hidden_dim = 5;
  cfg.encoding_dim = 6;
  cfg.embed_dim = 3;
  cfg.max_steps = 4;
  cfg.cond_embed_dim = 2;
  return cfg;
}

std::vector<double> random_features(int frames, int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(static_cast<size_t>(frames) * dim);
  for (double& v : f) v = rng.normal();
  return f;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("encoding has one row per observed frame and stays finite") {
  Model m = init_model(tiny_config(), 7);
  auto feats = random_features(9, 3, 11);
  Tape t;
  Binder b(t);
  BoundModel bm = bind_model(m, b);
  VideoEncoding enc = encode(t, bm, feats.data(), 9);
  CHECK(enc.I.rows == 9);
  CHECK(enc.I.cols == 6);
  auto vals = read_mat(t, enc.I);
  for (double v : vals) CHECK(std::isfinite(v));

  // single frame is the smallest legal observation
  Tape t1;
  Binder b1(t1);
  BoundModel bm1 = bind_model(m, b1);
  VideoEncoding e1 = encode(t1, bm1, feats.data(), 1);
  CHECK(e1.I.rows == 1);
  CHECK_THROWS_AS(encode(t1, bm1, feats.data(), 0), DimensionError);
}

TEST_CASE("zero projection weights give an all-zero encoding") {
  Model m = init_model(tiny_config(), 7);
  for (double& v : m.params.at("proj.W").value) v = 0.0;
  for (double& v : m.params.at("proj.b").value) v = 0.0;
  auto feats = random_features(4, 3, 2);
  Tape t;
  Binder b(t);
  BoundModel bm = bind_model(m, b);
  VideoEncoding enc = encode(t, bm, feats.data(), 4);
  for (double v : read_mat(t, enc.I)) CHECK(v == 0.0);
}

TEST_CASE("permuting feature dimensions together with the input weights is a no-op") {
  BackboneConfig cfg = tiny_config();
  Model m1 = init_model(cfg, 13);
  Model m2 = m1;
  std::vector<int> perm = {2, 0, 1};

  // W2[r][j] = W1[r][perm[j]] and x2[t][j] = x1[t][perm[j]] leave every
  // pre-activation unchanged
  Param& w1 = m1.params.at("enc.Wx");
  Param& w2 = m2.params.at("enc.Wx");
  for (int r = 0; r < w1.rows; ++r)
    for (int j = 0; j < w1.cols; ++j)
      w2.value[static_cast<size_t>(r) * w1.cols + j] =
          w1.value[static_cast<size_t>(r) * w1.cols + perm[static_cast<size_t>(j)]];

  const int frames = 5;
  auto x1 = random_features(frames, cfg.feature_dim, 3);
  std::vector<double> x2(x1.size());
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < cfg.feature_dim; ++j)
      x2[static_cast<size_t>(f) * cfg.feature_dim + j] =
          x1[static_cast<size_t>(f) * cfg.feature_dim + perm[static_cast<size_t>(j)]];

  Tape t1, t2;
  Binder b1(t1), b2(t2);
  VideoEncoding e1 = encode(t1, bind_model(m1, b1), x1.data(), frames);
  VideoEncoding e2 = encode(t2, bind_model(m2, b2), x2.data(), frames);
  auto v1 = read_mat(t1, e1.I);
  auto v2 = read_mat(t2, e2.I);
  REQUIRE(v1.size() == v2.size());
  for (size_t i = 0; i < v1.size(); ++i) CHECK(v1[i] == doctest::Approx(v2[i]).epsilon(1e-12));
}

TEST_CASE("attention over a single encoding row puts all weight on it") {
  Model m = init_model(tiny_config(), 5);
  auto feats = random_features(1, 3, 8);
  Tape t;
  Binder b(t);
  BoundModel bm = bind_model(m, b);
  VideoEncoding enc = encode(t, bm, feats.data(), 1);
  AttentionOut att = attention_score(t, enc.final_state.h, enc, bm.attn_W, bm.attn_b);
  auto w = read_mat(t, att.weights);
  REQUIRE(w.size() == 1);
  CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-15));
  // and the context is exactly that row
  auto ctx = read_mat(t, att.context);
  auto row0 = read_mat(t, enc.I);
  for (size_t i = 0; i < ctx.size(); ++i) CHECK(ctx[i] == doctest::Approx(row0[i]).epsilon(1e-12));
}

TEST_CASE("attention context over identical rows reproduces the row") {
  // hand-built encoding block with three identical rows
  Tape t;
  const int dI = 4, dh = 3, T = 3;
  std::vector<double> rowv = {0.5, -1.0, 2.0, 0.25};
  std::vector<double> block;
  for (int i = 0; i < T; ++i) block.insert(block.end(), rowv.begin(), rowv.end());
  VideoEncoding enc;
  enc.I = make_leaf_mat(t, block.data(), T, dI);
  enc.frames = T;
  std::vector<double> wv(static_cast<size_t>(dI) * dh, 0.3);
  std::vector<double> bv(static_cast<size_t>(dI), 0.1);
  std::vector<double> hv(static_cast<size_t>(dh), -0.7);
  Mat W = make_leaf_mat(t, wv.data(), dI, dh);
  Mat bias = make_leaf_mat(t, bv.data(), 1, dI);
  Mat h = make_leaf_mat(t, hv.data(), 1, dh);
  AttentionOut att = attention_score(t, h, enc, W, bias);

  auto w = read_mat(t, att.weights);
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  for (double x : w) CHECK(x == doctest::Approx(1.0 / T).epsilon(1e-12));
  auto ctx = read_mat(t, att.context);
  for (int i = 0; i < dI; ++i) CHECK(ctx[static_cast<size_t>(i)] == doctest::Approx(rowv[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("rollout steps emit a simplex distribution, positive duration, and simplex attention") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Model m = init_model(tiny_config(), seed);
    auto feats = random_features(6, 3, seed + 100);
    Tape t;
    Binder b(t);
    BoundModel bm = bind_model(m, b);
    VideoEncoding enc = encode(t, bm, feats.data(), 6);
    RolloutSession rs(t, bm, enc, -1);
    for (int s = 0; s < 3; ++s) {
      StepOutput so = rs.step();
      auto dist = read_mat(t, so.class_dist);
      double ds = std::accumulate(dist.begin(), dist.end(), 0.0);
      CHECK(ds == doctest::Approx(1.0).epsilon(1e-12));
      for (double p : dist) CHECK(p > 0.0);
      CHECK(t.val(so.duration) > 0.0);  // softplus head
      auto aw = read_mat(t, so.attn);
      REQUIRE(aw.size() == 6);
      CHECK(std::accumulate(aw.begin(), aw.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(rs.steps_taken() == 3);
  }
}

TEST_CASE("untrained class distributions stay near uniform across seeds") {
  // fan-in scaled init keeps the logits small, so no class should dominate
  // before training
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    BackboneConfig cfg = tiny_config();
    cfg.n_classes = 10;
    cfg.hidden_dim = 32;
    cfg.feature_dim = 16;
    Model m = init_model(cfg, seed);
    auto feats = random_features(10, 16, seed * 7 + 1);
    AnticipatedSequence seq = anticipate_full(m, feats.data(), 10, 0.5);
    const auto& d = seq.steps[0].class_dist;
    double lo = *std::min_element(d.begin(), d.end());
    double hi = *std::max_element(d.begin(), d.end());
    CHECK(hi - lo < 0.2);
  }
}

TEST_CASE("disabled attention leaves the attention parameters out of the gradient") {
  BackboneConfig cfg = tiny_config();
  cfg.attention = false;
  Model m = init_model(cfg, 21);
  auto feats = random_features(5, 3, 22);

  Tape t;
  Binder b(t);
  BoundModel bm = bind_model(m, b);
  VideoEncoding enc = encode(t, bm, feats.data(), 5);
  RolloutSession rs(t, bm, enc, -1);
  NodeId loss = kNoNode;
  for (int s = 0; s < 2; ++s) {
    StepOutput so = rs.step();
    CHECK(so.attn.empty());
    NodeId term = t.add(cross_entropy(t, so.class_dist, s % cfg.n_classes), so.duration);
    loss = (loss == kNoNode) ? term : t.add(loss, term);
  }
  t.backward(loss);
  b.harvest();
  CHECK(max_abs(m.params.at("attn.W").grad) == 0.0);
  CHECK(max_abs(m.params.at("attn.b").grad) == 0.0);
  CHECK(max_abs(m.params.at("dur.attn_beta").grad) == 0.0);
  CHECK(max_abs(m.params.at("dur.attn_eps").grad) == 0.0);
  CHECK(max_abs(m.params.at("dur.plain_beta").grad) > 0.0);
}

TEST_CASE("enabled attention routes duration gradient away from the plain head") {
  Model m = init_model(tiny_config(), 23);
  auto feats = random_features(5, 3, 24);
  Tape t;
  Binder b(t);
  BoundModel bm = bind_model(m, b);
  VideoEncoding enc = encode(t, bm, feats.data(), 5);
  RolloutSession rs(t, bm, enc, -1);
  StepOutput so = rs.step();
  t.backward(so.duration);
  b.harvest();
  CHECK(max_abs(m.params.at("dur.plain_beta").grad) == 0.0);
  CHECK(max_abs(m.params.at("dur.plain_eps").grad) == 0.0);
  CHECK(max_abs(m.params.at("dur.attn_beta").grad) > 0.0);
  CHECK(max_abs(m.params.at("attn.W").grad) > 0.0);
}

TEST_CASE("rollout gradients match central differences") {
  BackboneConfig cfg = tiny_config();
  cfg.conditional = true;
  Model m = init_model(cfg, 31);
  auto feats = random_features(4, 3, 32);

  auto build = [&](Tape& t, Binder& b) -> NodeId {
    BoundModel bm = bind_model(m, b);
    VideoEncoding enc = encode(t, bm, feats.data(), 4);
    RolloutSession rs(t, bm, enc, 1);
    NodeId loss = kNoNode;
    for (int s = 0; s < 2; ++s) {
      StepOutput so = rs.step();
      NodeId term = t.add(cross_entropy(t, so.class_dist, (s + 1) % cfg.n_classes),
                          mse_c(t, so.duration, 0.2));
      loss = (loss == kNoNode) ? term : t.add(loss, term);
    }
    return loss;
  };
  GradCheckReport rep = grad_check(m.params, build, 1e-5);
  CAPTURE(rep.worst_param);
  CAPTURE(rep.worst_index);
  CHECK(rep.max_rel_err < 1e-6);
  CHECK(rep.n_checked == count_parameters(m));
}

TEST_CASE("conditional rollouts require a weak label exactly when conditional") {
  BackboneConfig cfg = tiny_config();
  cfg.conditional = true;
  Model mc = init_model(cfg, 41);
  auto feats = random_features(3, 3, 42);

  Tape t;
  Binder b(t);
  BoundModel bm = bind_model(mc, b);
  VideoEncoding enc = encode(t, bm, feats.data(), 3);
  CHECK_THROWS_AS(RolloutSession(t, bm, enc, -1), ConfigError);
  CHECK_THROWS_AS(RolloutSession(t, bm, enc, cfg.n_classes), IndexError);
  RolloutSession ok(t, bm, enc, 0);  // legal

  Model mp = init_model(tiny_config(), 41);
  Tape t2;
  Binder b2(t2);
  BoundModel bm2 = bind_model(mp, b2);
  VideoEncoding enc2 = encode(t2, bm2, feats.data(), 3);
  CHECK_THROWS_AS(RolloutSession(t2, bm2, enc2, 0), ConfigError);
}

TEST_CASE("the weak label changes the conditional rollout") {
  BackboneConfig cfg = tiny_config();
  cfg.conditional = true;
  Model m = init_model(cfg, 43);
  auto feats = random_features(4, 3, 44);
  AnticipatedSequence a = anticipate_full(m, feats.data(), 4, 0.4, 0);
  AnticipatedSequence b = anticipate_full(m, feats.data(), 4, 0.4, 2);
  double diff = 0.0;
  for (size_t k = 0; k < a.steps[0].class_dist.size(); ++k)
    diff += std::abs(a.steps[0].class_dist[k] - b.steps[0].class_dist[k]);
  CHECK(diff > 1e-9);
}

TEST_CASE("horizon truncation clips the last duration") {
  AnticipatedSequence full;
  full.steps.resize(3);
  full.steps[0].duration = 0.3;
  full.steps[1].duration = 0.3;
  full.steps[2].duration = 0.3;
  AnticipatedSequence cut = truncate_to_horizon(full, 0.5);
  REQUIRE(cut.steps.size() == 2);
  CHECK(cut.steps[0].duration == doctest::Approx(0.3));
  CHECK(cut.steps[1].duration == doctest::Approx(0.2));
  CHECK(cut.stop_reason == StopReason::HorizonCovered);
  CHECK(cut.natural_len == 2);

  // horizon beyond the rollout keeps everything and reports the step cap
  AnticipatedSequence loose = truncate_to_horizon(full, 2.0);
  CHECK(loose.steps.size() == 3);
  CHECK(loose.stop_reason == StopReason::MaxSteps);
  CHECK_THROWS_AS(truncate_to_horizon(full, 0.0), ConfigError);
}

TEST_CASE("full rollouts always run to the step cap and record the natural stop") {
  BackboneConfig cfg = tiny_config();
  cfg.max_steps = 5;
  Model m = init_model(cfg, 51);
  auto feats = random_features(4, 3, 52);
  AnticipatedSequence full = anticipate_full(m, feats.data(), 4, 0.25);
  CHECK(full.steps.size() == 5);
  double cum = 0.0;
  int covered_at = -1;
  for (size_t s = 0; s < full.steps.size(); ++s) {
    cum += full.steps[s].duration;
    if (covered_at < 0 && cum >= 0.25) covered_at = static_cast<int>(s) + 1;
  }
  if (covered_at > 0) {
    CHECK(full.stop_reason == StopReason::HorizonCovered);
    CHECK(full.natural_len == covered_at);
    AnticipatedSequence cut = truncate_to_horizon(full, 0.25);
    CHECK(static_cast<int>(cut.steps.size()) == full.natural_len);
  } else {
    CHECK(full.stop_reason == StopReason::MaxSteps);
  }

  BackboneConfig one = tiny_config();
  one.max_steps = 1;
  Model m1 = init_model(one, 51);
  AnticipatedSequence s1 = anticipate_full(m1, feats.data(), 4, 10.0);
  CHECK(s1.steps.size() == 1);
  CHECK(s1.stop_reason == StopReason::MaxSteps);

  CHECK_THROWS_AS(anticipate(m1, feats.data(), 4, -1.0), ConfigError);
}

TEST_CASE("anticipated durations respect the duration floor") {
  BackboneConfig cfg = tiny_config();
  cfg.raw_linear_duration = true;  // this head can go negative; the floor must catch it
  Model m = init_model(cfg, 53);
  // slam the duration weights negative so the raw head emits negative values
  for (double& v : m.params.at("dur.attn_beta").value) v = -5.0;
  m.params.at("dur.attn_eps").value[0] = -5.0;
  auto feats = random_features(4, 3, 54);
  AnticipatedSequence full = anticipate_full(m, feats.data(), 4, 0.5);
  for (const StepValue& sv : full.steps) CHECK(sv.duration >= cfg.duration_floor);
}

TEST_CASE("parameter counting matches closed-form examples") {
  // dense layer from 10 inputs to 5 outputs with bias
  ParamStore lin;
  lin.add("W", 5, 10);
  lin.add("b", 1, 5);
  CHECK(count_parameters(lin) == 55);

  // LSTM cell, 64-dim input, 512-dim state
  ParamStore cell;
  cell.add("Wx", 4 * 512, 64);
  cell.add("Wh", 4 * 512, 512);
  cell.add("b", 1, 4 * 512);
  CHECK(count_parameters(cell) == 1181696);

  // conditional model carries the label-embedding table on top
  BackboneConfig cfg = tiny_config();
  Model plain = init_model(cfg, 1);
  cfg.conditional = true;
  Model cond = init_model(cfg, 1);
  size_t extra_embed = static_cast<size_t>(cfg.n_classes) * cfg.cond_embed_dim;
  size_t extra_dec_in = static_cast<size_t>(4 * cfg.hidden_dim) * cfg.cond_embed_dim;
  CHECK(count_parameters(cond) == count_parameters(plain) + extra_embed + extra_dec_in);
}

TEST_CASE("model init is deterministic in the seed") {
  BackboneConfig cfg = tiny_config();
  Model a = init_model(cfg, 99);
  Model b = init_model(cfg, 99);
  Model c = init_model(cfg, 100);
  CHECK(a.param_hash() == b.param_hash());
  CHECK(a.param_hash() != c.param_hash());
  // biases start at zero, forget gates start open
  const Param& eb = a.params.at("enc.b");
  for (int j = 0; j < cfg.hidden_dim; ++j) {
    CHECK(eb.value[static_cast<size_t>(j)] == 0.0);
    CHECK(eb.value[static_cast<size_t>(cfg.hidden_dim + j)] == 1.0);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  BackboneConfig cfg = tiny_config();
  cfg.conditional = true;
  cfg.attention = false;
  Model m = init_model(cfg, 61);
  const std::string path = "/tmp/densea_bb_ckpt_test.json";
  save_model_checkpoint(m, "conditional", path);
  LoadedModel lm = load_model_checkpoint(path);
  CHECK(lm.kind == "conditional");
  CHECK(lm.model.cfg.conditional == true);
  CHECK(lm.model.cfg.attention == false);
  CHECK(lm.model.param_hash() == m.param_hash());

  auto feats = random_features(5, 3, 62);
  AnticipatedSequence a = anticipate(m, feats.data(), 5, 0.4, 1);
  AnticipatedSequence b = anticipate(lm.model, feats.data(), 5, 0.4, 1);
  REQUIRE(a.steps.size() == b.steps.size());
  for (size_t s = 0; s < a.steps.size(); ++s) {
    CHECK(a.steps[s].duration == b.steps[s].duration);
    for (size_t k = 0; k < a.steps[s].class_dist.size(); ++k)
      CHECK(a.steps[s].class_dist[k] == b.steps[s].class_dist[k]);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects drift") {
  Model m = init_model(tiny_config(), 63);
  CHECK_THROWS_AS(save_model_checkpoint(m, "conditional", "/tmp/densea_bb_bad.json"),
                  ConfigError);  // kind disagrees with the config
  CHECK_THROWS_AS(save_model_checkpoint(m, "refined", "/tmp/densea_bb_bad.json"), ConfigError);

  const std::string path = "/tmp/densea_bb_ckpt_drift.json";
  save_model_checkpoint(m, "primary", path);

  {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 2");
    std::ofstream out(path);
    out << text;
  }
  CHECK_THROWS_AS(load_model_checkpoint(path), ParseError);

  {
    std::ofstream out(path);
    out << "{not json";
  }
  CHECK_THROWS_AS(load_model_checkpoint(path), ParseError);
  CHECK_THROWS_AS(load_model_checkpoint("/tmp/densea_no_such_ckpt.json"), IoError);
  std::remove(path.c_str());
}

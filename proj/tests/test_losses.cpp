#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "densea/gradcheck.hpp"
#include "densea/losses.hpp"

using namespace densea;

namespace {

StepOutput leaf_step(Tape& t, const std::vector<double>& dist, double duration,
                     const std::vector<double>& attn = {}) {
  StepOutput so;
  so.class_dist = make_leaf_mat(t, dist.data(), 1, static_cast<int>(dist.size()));
  so.duration = t.leaf(duration);
  if (!attn.empty()) so.attn = make_leaf_mat(t, attn.data(), 1, static_cast<int>(attn.size()));
  return so;
}

double term_value(const LossBreakdown& br, const std::string& name) {
  for (const TermValue& tv : br.terms)
    if (tv.name == name) return tv.value;
  throw std::runtime_error("no such term: " + name);
}

int term_videos(const LossBreakdown& br, const std::string& name) {
  for (const TermValue& tv : br.terms)
    if (tv.name == name) return tv.videos;
  throw std::runtime_error("no such term: " + name);
}

BackboneConfig micro_config() {
  BackboneConfig cfg;
  cfg.feature_dim = 3;
  cfg.n_classes = 4;
  cfg.hidden_dim = 5;
  cfg.encoding_dim = 6;
  cfg.embed_dim = 3;
  cfg.max_steps = 3;
  return cfg;
}

std::vector<double> random_features(int frames, int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(static_cast<size_t>(frames) * dim);
  for (double& v : f) v = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("perfect predictions cost nothing") {
  Tape t;
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {0.0, 1.0, 0.0}, 0.25));
  v.steps.push_back(leaf_step(t, {0.0, 0.0, 1.0}, 0.1));
  v.gt = {{1, 0.25}, {2, 0.1}};
  LossBreakdown br = loss_cond_graph(t, {v});
  CHECK(br.total_value == 0.0);
  CHECK(term_value(br, "label_full") == 0.0);
}

TEST_CASE("uniform guesses over two steps cost two log K") {
  Tape t;
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {0.25, 0.25, 0.25, 0.25}, 0.3));
  v.steps.push_back(leaf_step(t, {0.25, 0.25, 0.25, 0.25}, 0.2));
  v.gt = {{0, 0.3}, {3, 0.2}};
  LossBreakdown br = loss_cond_graph(t, {v});
  CHECK(br.total_value == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("duration errors add the squared gap") {
  Tape t;
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {1.0, 0.0}, 0.5));
  v.gt = {{0, 0.2}};
  LossBreakdown br = loss_cond_graph(t, {v});
  CHECK(br.total_value == doctest::Approx(0.09).epsilon(1e-12));  // (0.5-0.2)^2
}

TEST_CASE("terms average over contributing videos") {
  Tape t;
  VideoLossSpec a, b;
  a.steps.push_back(leaf_step(t, {0.25, 0.25, 0.25, 0.25}, 0.1));
  a.gt = {{0, 0.1}};
  b.steps.push_back(leaf_step(t, {1.0, 0.0, 0.0, 0.0}, 0.1));
  b.gt = {{0, 0.1}};
  LossBreakdown br = loss_cond_graph(t, {a, b});
  CHECK(br.total_value == doctest::Approx(0.5 * std::log(4.0)).epsilon(1e-12));
  CHECK(term_videos(br, "label_full") == 2);
}

TEST_CASE("a fully-supervised batch makes the richer composites collapse to the plain one") {
  Model m = init_model(micro_config(), 5);
  auto feats = random_features(4, 3, 6);

  auto build = [&](Tape& t, const std::function<LossBreakdown(Tape&, const std::vector<VideoLossSpec>&)>& loss) {
    Binder b(t);
    BoundModel bm = bind_model(m, b);
    VideoEncoding enc = encode(t, bm, feats.data(), 4);
    RolloutSession rs(t, bm, enc, -1);
    VideoLossSpec v;
    v.steps.push_back(rs.step());
    v.steps.push_back(rs.step());
    v.gt = {{1, 0.2}, {0, 0.15}};
    return loss(t, {v}).total_value;
  };
  Tape t1, t2, t3;
  double c = build(t1, loss_cond_graph);
  double p = build(t2, loss_prim_graph);
  double ad = build(t3, loss_adap_graph);
  CHECK(c == p);
  CHECK(c == ad);
}

TEST_CASE("weak step-one supervision reads exactly the weak label") {
  Tape t;
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {0.1, 0.7, 0.2}, 0.2));
  v.steps.push_back(leaf_step(t, {0.5, 0.25, 0.25}, 0.3));
  v.weak_label = 1;
  LossOptions opt;
  opt.weak_c1 = true;
  LossBreakdown br = batch_loss_graph(t, {v}, opt);
  CHECK(br.total_value == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
}

TEST_CASE("matching your own pseudo target costs exactly the entropy") {
  Tape t;
  std::vector<double> p2 = {0.6, 0.3, 0.1};
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {0.2, 0.3, 0.5}, 0.2));
  v.steps.push_back(leaf_step(t, p2, 0.1));
  v.pseudo_targets.resize(2);
  v.pseudo_targets[0] = {{1.0, 0.0, 0.0}, 0.2, {}};  // step-1 class is never scored
  v.pseudo_targets[1] = {p2, 0.1, {}};
  LossOptions opt;
  opt.pseudo = true;
  LossBreakdown br = batch_loss_graph(t, {v}, opt);
  double entropy = 0.0;
  for (double x : p2) entropy -= x * std::log(x);
  CHECK(term_value(br, "pseudo_class") == doctest::Approx(entropy).epsilon(1e-12));
  CHECK(term_value(br, "pseudo_duration") == 0.0);  // durations match
}

TEST_CASE("single-step alignments feed the duration term but not the class term") {
  Tape t;
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.4));
  v.pseudo_targets = {{{1.0, 0.0}, 0.1, {}}};
  LossOptions opt;
  opt.pseudo = true;
  LossBreakdown br = batch_loss_graph(t, {v}, opt);
  CHECK(term_videos(br, "pseudo_class") == 0);
  CHECK(term_videos(br, "pseudo_duration") == 1);
  CHECK(term_value(br, "pseudo_duration") == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("opposite one-hot attention rows cost two") {
  Tape t;
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {1.0, 0.0}, 0.1, {1.0, 0.0}));
  v.cond_attn = {{0.0, 1.0}};
  LossOptions opt;
  opt.attn_reg = true;
  LossBreakdown br = batch_loss_graph(t, {v}, opt);
  CHECK(br.total_value == doctest::Approx(2.0).epsilon(1e-12));

  // a second video with perfectly aligned attention halves the mean
  VideoLossSpec v2;
  v2.steps.push_back(leaf_step(t, {1.0, 0.0}, 0.1, {0.3, 0.7}));
  v2.cond_attn = {{0.3, 0.7}};
  Tape t2;
  VideoLossSpec w1, w2;
  w1.steps.push_back(leaf_step(t2, {1.0, 0.0}, 0.1, {1.0, 0.0}));
  w1.cond_attn = {{0.0, 1.0}};
  w2.steps.push_back(leaf_step(t2, {1.0, 0.0}, 0.1, {0.3, 0.7}));
  w2.cond_attn = {{0.3, 0.7}};
  LossBreakdown br2 = batch_loss_graph(t2, {w1, w2}, opt);
  CHECK(br2.total_value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(term_videos(br2, "attn_reg") == 2);
}

TEST_CASE("attention alignment is trainable: gradient steps shrink it") {
  // one free logit row, softmaxed into an attention row, pulled toward a target
  ParamStore ps;
  Param& logits = ps.add("logits", 1, 3);
  logits.value = {1.0, -0.5, 0.3};
  std::vector<double> target = {0.2, 0.3, 0.5};

  SgdMomentum sgd;
  sgd.lr = 0.25;
  sgd.momentum = 0.0;
  double prev = 1e300;
  for (int it = 0; it < 150; ++it) {
    Tape t;
    Binder b(t);
    Mat lg = b.bind(ps.at("logits"));
    Mat attn = softmax_row(t, lg);
    VideoLossSpec v;
    StepOutput so;
    so.class_dist = attn;  // unused by this term
    so.duration = t.leaf(0.1);
    so.attn = attn;
    v.steps.push_back(so);
    v.cond_attn = {target};
    LossOptions opt;
    opt.attn_reg = true;
    LossBreakdown br = batch_loss_graph(t, {v}, opt);
    CHECK(br.total_value <= prev + 1e-15);
    prev = br.total_value;
    t.backward(br.total);
    b.harvest();
    sgd.step(ps);
  }
  CHECK(prev < 0.02);
}

TEST_CASE("the breakdown always carries all six terms and sums to the total") {
  Tape t;
  VideoLossSpec f;  // fully-labelled video
  f.steps.push_back(leaf_step(t, {0.7, 0.2, 0.1}, 0.3, {0.5, 0.5}));
  f.gt = {{0, 0.25}};
  f.cond_attn = {{0.4, 0.6}};
  VideoLossSpec w;  // weak video with pseudo targets
  w.steps.push_back(leaf_step(t, {0.3, 0.3, 0.4}, 0.2, {1.0, 0.0}));
  w.steps.push_back(leaf_step(t, {0.2, 0.5, 0.3}, 0.15, {0.0, 1.0}));
  w.weak_label = 2;
  w.pseudo_targets = {{{0.0, 0.0, 1.0}, 0.18, {}}, {{0.1, 0.8, 0.1}, 0.12, {}}};
  w.cond_attn = {{0.9, 0.1}, {0.1, 0.9}};

  LossBreakdown br = loss_prim_graph(t, {f, w});
  REQUIRE(br.terms.size() == 6);
  CHECK(br.terms[0].name == "label_full");
  CHECK(br.terms[1].name == "label_weak_c1");
  CHECK(br.terms[2].name == "pseudo_class");
  CHECK(br.terms[3].name == "pseudo_duration");
  CHECK(br.terms[4].name == "refined_supervised");
  CHECK(br.terms[5].name == "attn_reg");
  double s = 0.0;
  for (const TermValue& tv : br.terms) s += tv.value;
  CHECK(br.total_value == doctest::Approx(s).epsilon(1e-12));
  CHECK(term_videos(br, "label_full") == 1);
  CHECK(term_videos(br, "label_weak_c1") == 1);
  CHECK(term_videos(br, "attn_reg") == 2);
  CHECK(term_videos(br, "refined_supervised") == 0);  // no refiner outputs supplied
  CHECK(br.total_value > 0.0);
}

TEST_CASE("refined steps are scored against the full labels") {
  Refiner r = init_refiner(3, RefinerInit::CopyPrimary);
  Tape t;
  Binder b(t);
  BoundRefiner br = bind_refiner(r, b);
  VideoLossSpec v;
  v.steps.push_back(leaf_step(t, {0.8, 0.1, 0.1}, 0.3));
  v.gt = {{0, 0.3}};
  v.refined.push_back(adaptive_refine_graph(t, br, v.steps[0].class_dist, v.steps[0].duration,
                                            {0.1, 0.1, 0.8}, 0.7));
  LossOptions opt;
  opt.refined_supervised = true;
  LossBreakdown out = batch_loss_graph(t, {v}, opt);
  // copy-primary identity: refined == primary, so the term is CE(p, class 0)
  CHECK(out.total_value == doctest::Approx(-std::log(0.8)).epsilon(1e-9));
}

TEST_CASE("loss inputs are validated") {
  LossOptions full;
  full.label_full = true;

  {
    Tape t;
    CHECK_THROWS_AS(batch_loss_graph(t, {}, full), ConfigError);
  }
  {
    Tape t;
    VideoLossSpec v;
    v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.1));
    v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.1));
    v.gt = {{0, 0.1}};  // fewer targets than steps
    CHECK_THROWS_AS(batch_loss_graph(t, {v}, full), DimensionError);
  }
  {
    Tape t;
    VideoLossSpec v;
    v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.1));
    v.gt = {{7, 0.1}};
    CHECK_THROWS_AS(batch_loss_graph(t, {v}, full), IndexError);
  }
  {
    Tape t;
    VideoLossSpec v;
    v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.1));
    v.weak_label = 5;
    LossOptions opt;
    opt.weak_c1 = true;
    CHECK_THROWS_AS(batch_loss_graph(t, {v}, opt), IndexError);
  }
  {
    Tape t;
    VideoLossSpec v;
    v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.1));
    v.pseudo_targets = {{{1.0, 0.0}, 0.1, {}}, {{1.0, 0.0}, 0.1, {}}};  // misaligned
    LossOptions opt;
    opt.pseudo = true;
    CHECK_THROWS_AS(batch_loss_graph(t, {v}, opt), DimensionError);
  }
  {
    Tape t;
    VideoLossSpec v;  // carries nothing any enabled term can use
    v.steps.push_back(leaf_step(t, {0.5, 0.5}, 0.1));
    CHECK_THROWS_AS(batch_loss_graph(t, {v}, full), ConfigError);
  }
}

TEST_CASE("composite loss gradients match central differences end to end") {
  BackboneConfig cfg = micro_config();
  Model m = init_model(cfg, 11);
  Refiner refiner = init_refiner(cfg.n_classes);
  Rng prng(12);
  for (double& v : refiner.params.at("refiner.W").value) v += 0.1 * prng.normal();
  auto f_feats = random_features(4, 3, 13);
  auto w_feats = random_features(5, 3, 14);
  std::vector<StepValue> w_targets = {
      {{0.0, 1.0, 0.0, 0.0}, 0.22, {}}, {{0.1, 0.2, 0.6, 0.1}, 0.18, {}}};
  std::vector<StepValue> f_pseudo = {{{0.2, 0.2, 0.5, 0.1}, 0.3, {}},
                                     {{0.25, 0.25, 0.25, 0.25}, 0.2, {}}};

  auto build = [&](Tape& t, Binder& b) -> NodeId {
    BoundModel bm = bind_model(m, b);
    BoundRefiner br = bind_refiner(refiner, b);

    VideoLossSpec f;
    VideoEncoding ef = encode(t, bm, f_feats.data(), 4);
    RolloutSession rf(t, bm, ef, -1);
    f.steps.push_back(rf.step());
    f.steps.push_back(rf.step());
    f.gt = {{1, 0.2}, {2, 0.25}};
    f.cond_attn = {{0.3, 0.3, 0.2, 0.2}, {0.1, 0.2, 0.3, 0.4}};
    for (size_t s = 0; s < 2; ++s)
      f.refined.push_back(adaptive_refine_graph(t, br, f.steps[s].class_dist,
                                                f.steps[s].duration, f_pseudo[s].class_dist,
                                                f_pseudo[s].duration));

    VideoLossSpec w;
    VideoEncoding ew = encode(t, bm, w_feats.data(), 5);
    RolloutSession rw(t, bm, ew, -1);
    w.steps.push_back(rw.step());
    w.steps.push_back(rw.step());
    w.weak_label = 1;
    w.pseudo_targets = w_targets;
    w.cond_attn = {{0.2, 0.2, 0.2, 0.2, 0.2}, {0.5, 0.125, 0.125, 0.125, 0.125}};

    return loss_adap_graph(t, {f, w}).total;
  };

  GradCheckReport rm = grad_check(m.params, build, 1e-5);
  CAPTURE(rm.worst_param);
  CAPTURE(rm.worst_index);
  CHECK(rm.max_rel_err < 1e-6);

  GradCheckReport rr = grad_check(refiner.params, build, 1e-5);
  CAPTURE(rr.worst_param);
  CHECK(rr.max_rel_err < 1e-6);
}

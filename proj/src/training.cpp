#include "densea/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <utility>

#include "json.hpp"

namespace densea {

namespace fs = std::filesystem;
using nlohmann::json;

TrainOptions linear_defaults() {
  TrainOptions o;
  o.n1 = 20;
  o.n2 = 25;
  o.n3 = 0;
  return o;
}

TrainOptions adaptive_defaults() {
  TrainOptions o;
  o.n1 = 15;
  o.n2 = 20;
  o.n3 = 20;
  o.cond_subset_fraction = 0.5;
  return o;
}

std::vector<int> interleave_pattern(int n_first, int n_second) {
  if (n_first < 0 || n_second < 0) throw ConfigError("interleave: negative stream length");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(n_first) + static_cast<size_t>(n_second));
  int i = 0, j = 0;
  while (i < n_first || j < n_second) {
    if (j >= n_second) {
      out.push_back(0);
      ++i;
    } else if (i >= n_first) {
      out.push_back(1);
      ++j;
    } else {
      // fractional slot position; the first stream wins ties
      double pi = (i + 0.5) / n_first;
      double pj = (j + 0.5) / n_second;
      if (pi <= pj) {
        out.push_back(0);
        ++i;
      } else {
        out.push_back(1);
        ++j;
      }
    }
  }
  return out;
}

void write_access_log(const TrainResult& r, const std::string& path) {
  json j;
  j["mode"] = r.mode_name;
  j["substituted"] = r.substituted;
  j["exceptions"] = r.substitution_exceptions;
  json reads = json::object();
  for (const auto& [id, fields] : r.access.reads) {
    reads[id] = std::vector<std::string>(fields.begin(), fields.end());
  }
  j["reads"] = reads;
  std::ofstream f(path);
  if (!f) throw IoError("can't write access log: " + path);
  f << j.dump(1) << "\n";
}

namespace {

constexpr const char* kCsvHeader =
    "phase,epoch,alpha,total,label_full,label_weak_c1,pseudo_class,pseudo_duration,"
    "refined_supervised,attn_reg,val_moc\n";

std::vector<StepOutput> roll_n(Tape& t, const BoundModel& bm, const VideoEncoding& enc,
                               int weak_label, int n, std::vector<int> forced = {}) {
  RolloutSession s(t, bm, enc, weak_label);
  if (!forced.empty()) s.force_feedback(std::move(forced));
  std::vector<StepOutput> out;
  out.reserve(static_cast<size_t>(n));
  for (int m = 0; m < n; ++m) out.push_back(s.step());
  return out;
}

// Weak-video rollout: decode until the horizon is covered AND at least
// q_natural steps exist, so the live sequence and the cached pseudo sequence
// can be refined step-for-step (continued decoding past the natural stop).
// Mirrors the coverage rule of value-level inference.
std::vector<StepOutput> roll_aligned(Tape& t, const BoundModel& bm, const VideoEncoding& enc,
                                     double horizon, int q_natural, double dur_floor,
                                     int max_steps) {
  RolloutSession s(t, bm, enc, -1);
  std::vector<StepOutput> out;
  double cum = 0.0;
  bool covered = false;
  while (static_cast<int>(out.size()) < max_steps &&
         (!covered || static_cast<int>(out.size()) < q_natural)) {
    StepOutput so = s.step();
    cum += std::max(t.val(so.duration), dur_floor);
    if (cum >= horizon) covered = true;
    out.push_back(std::move(so));
  }
  return out;
}

std::vector<StepValue> values_of(const Tape& t, const std::vector<StepOutput>& steps,
                                 double dur_floor) {
  std::vector<StepValue> vals(steps.size());
  for (size_t m = 0; m < steps.size(); ++m) {
    vals[m].class_dist = read_mat(t, steps[m].class_dist);
    vals[m].duration = std::max(t.val(steps[m].duration), dur_floor);
  }
  return vals;
}

struct EpochTerms {
  double sum[6] = {0, 0, 0, 0, 0, 0};
  double total = 0.0;
  int batches = 0;
  void accumulate(const LossBreakdown& b) {
    for (int i = 0; i < 6; ++i) sum[i] += b.terms[static_cast<size_t>(i)].value;
    total += b.total_value;
    ++batches;
  }
};

using BatchFn = std::function<LossBreakdown(Tape&, bool, const std::vector<int>&)>;

class Runner {
 public:
  Runner(std::string mode_name, RefineMode refine, std::vector<WindowedSample> full,
         std::vector<WeakSample> weak, const TrainOptions& opt)
      : mode_name_(std::move(mode_name)),
        refine_(refine),
        opt_(opt),
        sgd_{opt.lr, opt.momentum, opt.clip_norm} {
    validate_backbone(opt_.backbone);
    if (opt_.backbone.conditional)
      throw ConfigError("train: pass the primary architecture; the conditional twin is derived");
    if (full.empty()) throw ConfigError("train: needs at least one fully-labelled video");
    if (opt_.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(opt_.lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (opt_.momentum < 0.0 || opt_.momentum >= 1.0)
      throw ConfigError("train: momentum must be in [0, 1)");
    if (opt_.n1 < 0 || opt_.n2 < 0 || opt_.n3 < 0)
      throw ConfigError("train: epoch counts must be non-negative");
    if (opt_.val_fraction < 0.0 || opt_.val_fraction >= 1.0)
      throw ConfigError("train: val_fraction must be in [0, 1)");
    if (!(opt_.cond_subset_fraction > 0.0) || opt_.cond_subset_fraction > 1.0)
      throw ConfigError("train: cond_subset_fraction must be in (0, 1]");
    for (const auto& w : full) check_dim(w.feature_dim, w.id);
    for (const auto& w : weak) {
      check_dim(w.feature_dim, w.id);
      weak_id_set_.insert(w.id);
    }

    split_validation(std::move(full));
    weak_ = std::move(weak);

    if (!opt_.out_dir.empty()) {
      fs::create_directories(opt_.out_dir);
      csv_.open(opt_.out_dir + "/losses.csv");
      if (!csv_) throw IoError("can't write losses.csv under " + opt_.out_dir);
      csv_ << kCsvHeader;
    }
  }

  TrainResult run_main() {
    // ---- stage one: the label-conditioned module on (a subset of) the full set
    has_cond_ = true;
    cond_cfg_ = opt_.backbone;
    cond_cfg_.conditional = true;
    cond_ = init_model(cond_cfg_, fnv1a64("init/cond", opt_.seed));

    std::vector<int> cond_pool = cond_subset_indices();
    auto cond_fn = [&](Tape& t, bool, const std::vector<int>& idx) {
      Binder b(t);
      BoundModel bm = bind_model(cond_, b);
      std::vector<VideoLossSpec> specs;
      specs.reserve(idx.size());
      for (int i : idx) specs.push_back(full_spec(t, bm, nullptr, train_full_[static_cast<size_t>(i)], false));
      LossBreakdown lb = loss_cond_graph(t, specs);
      t.backward(lb.total);
      b.harvest();
      return lb;
    };
    run_phase("cond", opt_.n1, cond_pool, {}, {&cond_.params}, &cond_, false, zero_alpha(), cond_fn);

    freeze_and_cache();

    // ---- stage two (and three): the primary module
    has_prim_ = true;
    prim_ = init_model(opt_.backbone, fnv1a64("init/prim", opt_.seed));
    std::vector<int> full_idx(train_full_.size());
    std::iota(full_idx.begin(), full_idx.end(), 0);
    std::vector<int> weak_idx(weak_.size());
    std::iota(weak_idx.begin(), weak_idx.end(), 0);

    if (refine_ == RefineMode::Adaptive) {
      has_refiner_ = true;
      refiner_ = init_refiner(opt_.backbone.n_classes, opt_.refiner_init);
      auto adapt_fn = [&](Tape& t, bool is_weak, const std::vector<int>& idx) {
        Binder b(t);
        BoundModel bm = bind_model(prim_, b);
        BoundRefiner br = bind_refiner(refiner_, b);
        std::vector<VideoLossSpec> specs;
        specs.reserve(idx.size());
        for (int i : idx) {
          specs.push_back(is_weak ? weak_spec(t, bm, &br, weak_[static_cast<size_t>(i)])
                                  : full_spec(t, bm, &br, train_full_[static_cast<size_t>(i)], true));
        }
        LossBreakdown lb = loss_adap_graph(t, specs);
        t.backward(lb.total);
        b.harvest();
        return lb;
      };
      std::vector<ParamStore*> stores{&prim_.params, &refiner_.params};
      run_phase("adapt_full", opt_.n2, full_idx, {}, stores, &prim_, true, zero_alpha(), adapt_fn);
      run_phase("adapt_weak", opt_.n3, full_idx, weak_idx, stores, &prim_, true, zero_alpha(),
                adapt_fn);
    } else {
      auto prim_fn = [&](Tape& t, bool is_weak, const std::vector<int>& idx) {
        Binder b(t);
        BoundModel bm = bind_model(prim_, b);
        std::vector<VideoLossSpec> specs;
        specs.reserve(idx.size());
        for (int i : idx) {
          specs.push_back(is_weak ? weak_spec(t, bm, nullptr, weak_[static_cast<size_t>(i)])
                                  : full_spec(t, bm, nullptr, train_full_[static_cast<size_t>(i)], false));
        }
        LossBreakdown lb = loss_prim_graph(t, specs);
        t.backward(lb.total);
        b.harvest();
        return lb;
      };
      auto alpha_of = [](int epoch) { return alpha_at(epoch); };
      run_phase("prim", opt_.n2, full_idx, weak_idx, {&prim_.params}, &prim_, true, alpha_of,
                prim_fn);
    }
    return finish();
  }

  TrainResult run_baseline(int kind, const std::vector<WindowedSample>& weak_pool) {
    has_prim_ = true;
    prim_ = init_model(opt_.backbone, fnv1a64("init/prim", opt_.seed));
    if (kind == 1) {
      // the supervised upper bound trains on the weak pool's full labels too
      for (const auto& w : weak_pool) {
        check_dim(w.feature_dim, w.id);
        train_full_.push_back(w);
      }
    }
    std::vector<int> full_idx(train_full_.size());
    std::iota(full_idx.begin(), full_idx.end(), 0);
    std::vector<int> weak_idx(weak_.size());
    std::iota(weak_idx.begin(), weak_idx.end(), 0);

    auto fn = [&](Tape& t, bool is_weak, const std::vector<int>& idx) {
      Binder b(t);
      BoundModel bm = bind_model(prim_, b);
      std::vector<VideoLossSpec> specs;
      specs.reserve(idx.size());
      LossOptions lo;
      lo.prob_floor = opt_.backbone.prob_floor;
      if (is_weak) {
        lo.weak_c1 = true;
        for (int i : idx) specs.push_back(weak_c1_spec(t, bm, weak_[static_cast<size_t>(i)]));
      } else {
        lo.label_full = true;
        for (int i : idx) specs.push_back(full_spec(t, bm, nullptr, train_full_[static_cast<size_t>(i)], false));
      }
      LossBreakdown lb = batch_loss_graph(t, specs, lo);
      t.backward(lb.total);
      b.harvest();
      return lb;
    };
    run_phase("baseline", opt_.n2, full_idx, weak_idx, {&prim_.params}, &prim_, true, zero_alpha(),
              fn);
    return finish();
  }

 private:
  void check_dim(int dim, const std::string& id) const {
    if (dim != opt_.backbone.feature_dim)
      throw ConfigError("train: sample " + id + " has feature_dim " + std::to_string(dim) +
                        ", model expects " + std::to_string(opt_.backbone.feature_dim));
  }

  static std::function<double(int)> zero_alpha() {
    return [](int) { return 0.0; };
  }

  // Validation windows come off the fully-labelled set; tiny sets skip
  // validation entirely (best checkpoint = final weights).
  void split_validation(std::vector<WindowedSample> full) {
    size_t n = full.size();
    size_t n_val = 0;
    if (opt_.val_fraction > 0.0 && n >= 4) {
      n_val = static_cast<size_t>(std::lround(opt_.val_fraction * static_cast<double>(n)));
      n_val = std::min(std::max<size_t>(n_val, 1), n - 1);
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng r = Rng::derive(opt_.seed, "val_split");
    r.shuffle(order);
    std::vector<size_t> val_pick(order.begin(), order.begin() + static_cast<long>(n_val));
    std::sort(val_pick.begin(), val_pick.end());
    std::vector<bool> is_val(n, false);
    for (size_t i : val_pick) is_val[i] = true;
    for (size_t i = 0; i < n; ++i) {
      if (is_val[i]) {
        access_.record(full[i].id, "features");
        access_.record(full[i].id, "full_labels");
        val_.push_back(std::move(full[i]));
      } else {
        train_full_.push_back(std::move(full[i]));
      }
    }
  }

  std::vector<int> cond_subset_indices() {
    std::vector<int> idx(train_full_.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (opt_.cond_subset_fraction >= 1.0) return idx;
    size_t n_keep = static_cast<size_t>(
        std::ceil(opt_.cond_subset_fraction * static_cast<double>(train_full_.size())));
    n_keep = std::min(std::max<size_t>(n_keep, 1), train_full_.size());
    Rng r = Rng::derive(opt_.seed, "cond_subset");
    r.shuffle(idx);
    idx.resize(n_keep);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

  void freeze_and_cache() {
    cond_.params.set_trainable(false);
    result_.cond_hash_at_freeze = cond_.param_hash();
    if (!opt_.out_dir.empty())
      save_model_checkpoint(cond_, "conditional", opt_.out_dir + "/cond_frozen.json");

    // One full rollout per training video, weak first-step substituted.  The
    // fully-labelled side's weak label is its first future class (legal: that
    // set's dense labels are on the table anyway).
    for (const auto& w : train_full_) {
      access_.record(w.id, "features");
      access_.record(w.id, "weak_label");
      AnticipatedSequence seq =
          pseudo_label(cond_, w.observed.data(), w.observed_frames, w.horizon_fraction, w.weak_label);
      cache_.push_back(PseudoEntry{w.id, std::move(seq.steps), seq.natural_len});
    }
    for (const auto& w : weak_) {
      access_.record(w.id, "features");
      access_.record(w.id, "weak_label");
      AnticipatedSequence seq =
          pseudo_label(cond_, w.observed.data(), w.observed_frames, w.horizon_fraction, w.weak_label);
      cache_.push_back(PseudoEntry{w.id, std::move(seq.steps), seq.natural_len});
      ++result_.substituted;
    }
    for (const auto& e : cache_) cache_by_id_[e.id] = &e;
    if (!opt_.out_dir.empty()) write_pseudo_cache(cache_, opt_.out_dir + "/pseudo_cache.json");
  }

  const PseudoEntry& cache_at(const std::string& id) const {
    auto it = cache_by_id_.find(id);
    if (it == cache_by_id_.end()) throw InternalError("no pseudo-cache entry for " + id);
    return *it->second;
  }

  // Teacher-length rollout against the dense future labels.  With a bound
  // refiner the per-step refined outputs (live prediction x cached pseudo) are
  // attached for direct supervision; attn_rows additionally attaches the
  // frozen conditional attention rows for the alignment regularizer.
  VideoLossSpec full_spec(Tape& t, const BoundModel& bm, const BoundRefiner* br,
                          const WindowedSample& w, bool attn_rows) {
    access_.record(w.id, "features");
    access_.record(w.id, "full_labels");
    if (bm.cfg->conditional) access_.record(w.id, "weak_label");
    VideoEncoding enc = encode(t, bm, w.observed.data(), w.observed_frames);
    int n = std::min(static_cast<int>(w.target_segments.size()), bm.cfg->max_steps);
    VideoLossSpec spec;
    // The conditional trains teacher-forced: feeding the known classes back in
    // trains the step-to-step transition on every labelled segment, which a
    // fully self-fed rollout only manages for classes it already predicts.
    std::vector<int> forced;
    if (bm.cfg->conditional) {
      forced.reserve(static_cast<size_t>(n));
      for (int m = 0; m < n; ++m)
        forced.push_back(w.target_segments[static_cast<size_t>(m)].class_id);
    }
    spec.steps = roll_n(t, bm, enc, bm.cfg->conditional ? w.weak_label : -1, n, std::move(forced));
    spec.gt.resize(static_cast<size_t>(n));
    for (int m = 0; m < n; ++m) {
      const ActionSegment& s = w.target_segments[static_cast<size_t>(m)];
      spec.gt[static_cast<size_t>(m)] = SupervisedTarget{s.class_id, s.duration};
    }
    if (br != nullptr || (attn_rows && bm.cfg->attention)) {
      const PseudoEntry& q = cache_at(w.id);
      if (static_cast<int>(q.steps.size()) < n)
        throw InternalError("pseudo-cache entry shorter than teacher rollout");
      if (br != nullptr) {
        spec.refined.reserve(static_cast<size_t>(n));
        for (int m = 0; m < n; ++m) {
          const StepValue& qs = q.steps[static_cast<size_t>(m)];
          spec.refined.push_back(adaptive_refine_graph(t, *br, spec.steps[static_cast<size_t>(m)].class_dist,
                                                       spec.steps[static_cast<size_t>(m)].duration,
                                                       qs.class_dist, qs.duration,
                                                       bm.cfg->prob_floor, bm.cfg->duration_floor));
        }
      }
      if (attn_rows && bm.cfg->attention) {
        for (int m = 0; m < n; ++m) spec.cond_attn.push_back(q.steps[static_cast<size_t>(m)].attn);
      }
    }
    return spec;
  }

  // Alignment-length rollout plus refined pseudo-targets (constants on the
  // tape: the gradient treats them as fixed supervision).  When a live refiner
  // is supplied, the refined steps are additionally rebuilt as graphs over the
  // primary's detached values and trained for consistency with those values,
  // so the refiner keeps seeing the inputs it is actually applied to here —
  // otherwise it only ever trains on the fully-labeled pool, whose sharpened
  // distributions look nothing like the ones it must refine on this pool.
  VideoLossSpec weak_spec(Tape& t, const BoundModel& bm, const BoundRefiner* br,
                          const WeakSample& w) {
    access_.record(w.id, "features");
    access_.record(w.id, "weak_label");
    const PseudoEntry& q = cache_at(w.id);
    VideoEncoding enc = encode(t, bm, w.observed.data(), w.observed_frames);
    VideoLossSpec spec;
    spec.steps = roll_aligned(t, bm, enc, w.horizon_fraction, q.natural_len,
                              bm.cfg->duration_floor, bm.cfg->max_steps);
    size_t L = spec.steps.size();
    if (q.steps.size() < L) throw InternalError("pseudo-cache entry shorter than aligned rollout");
    std::vector<StepValue> p = values_of(t, spec.steps, bm.cfg->duration_floor);
    std::vector<StepValue> qs(q.steps.begin(), q.steps.begin() + static_cast<long>(L));
    switch (refine_) {
      case RefineMode::None:
        spec.pseudo_targets = qs;
        break;
      case RefineMode::Linear:
        spec.pseudo_targets = linear_refine(p, qs, alpha_cur_, bm.cfg->prob_floor,
                                            bm.cfg->duration_floor);
        break;
      case RefineMode::Adaptive:
        spec.pseudo_targets = adaptive_refine_sequence(refiner_, p, qs, bm.cfg->prob_floor,
                                                       bm.cfg->duration_floor);
        break;
    }
    if (refine_ == RefineMode::Adaptive && br != nullptr) {
      spec.refined.reserve(L);
      spec.refined_targets.reserve(L);
      for (size_t m = 0; m < L; ++m) {
        Mat pd = make_leaf_mat(t, p[m].class_dist.data(), 1,
                               static_cast<int>(p[m].class_dist.size()));
        NodeId pdur = t.leaf(p[m].duration);
        spec.refined.push_back(adaptive_refine_graph(t, *br, pd, pdur, qs[m].class_dist,
                                                     qs[m].duration, bm.cfg->prob_floor,
                                                     bm.cfg->duration_floor));
        StepValue tgt;
        tgt.class_dist = p[m].class_dist;
        tgt.duration = p[m].duration;
        spec.refined_targets.push_back(std::move(tgt));
      }
    }
    spec.weak_label = w.weak_label;
    if (bm.cfg->attention) {
      for (size_t m = 0; m < L; ++m) spec.cond_attn.push_back(qs[m].attn);
    }
    return spec;
  }

  // Single-step rollout for the weak-label-only baseline term.
  VideoLossSpec weak_c1_spec(Tape& t, const BoundModel& bm, const WeakSample& w) {
    access_.record(w.id, "features");
    access_.record(w.id, "weak_label");
    VideoEncoding enc = encode(t, bm, w.observed.data(), w.observed_frames);
    VideoLossSpec spec;
    spec.steps = roll_n(t, bm, enc, -1, 1);
    spec.weak_label = w.weak_label;
    return spec;
  }

  static std::vector<std::vector<int>> chunk(const std::vector<int>& v, int bs) {
    std::vector<std::vector<int>> out;
    for (size_t i = 0; i < v.size(); i += static_cast<size_t>(bs)) {
      size_t end = std::min(v.size(), i + static_cast<size_t>(bs));
      out.emplace_back(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(end));
    }
    return out;
  }

  void run_phase(const std::string& name, int epochs, const std::vector<int>& full_pool,
                 const std::vector<int>& weak_pool, const std::vector<ParamStore*>& stores,
                 Model* val_model, bool track_best, const std::function<double(int)>& alpha_of,
                 const BatchFn& batch_fn) {
    PhaseRecord rec;
    rec.name = name;
    rec.epochs = epochs;
    rec.prim_before = has_prim_ ? prim_.param_hash() : 0;
    rec.cond_before = has_cond_ ? cond_.param_hash() : 0;
    rec.refiner_before = has_refiner_ ? refiner_.param_hash() : 0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
      alpha_cur_ = alpha_of(epoch);
      Rng order = Rng::derive(opt_.seed, "order/" + name, static_cast<uint64_t>(global_epoch_));
      std::vector<int> forder = full_pool;
      order.shuffle(forder);
      std::vector<int> worder = weak_pool;
      order.shuffle(worder);
      auto fbatches = chunk(forder, opt_.batch_size);
      auto wbatches = chunk(worder, opt_.batch_size);
      std::vector<int> pattern =
          interleave_pattern(static_cast<int>(fbatches.size()), static_cast<int>(wbatches.size()));
      EpochTerms acc;
      size_t fi = 0, wi = 0;
      for (int pick : pattern) {
        const std::vector<int>& idx = pick == 0 ? fbatches[fi++] : wbatches[wi++];
        Tape t;
        LossBreakdown lb = batch_fn(t, pick == 1, idx);
        sgd_.step(stores);
        acc.accumulate(lb);
      }
      double vm = -1.0;
      if (val_model != nullptr && !val_.empty()) {
        vm = evaluate_model(*val_model, val_).moc;
        if (track_best && vm > best_val_moc_) {
          best_val_moc_ = vm;
          best_epoch_ = global_epoch_;
          best_model_ = prim_;
          have_best_ = true;
        }
      }
      csv_row(name, epoch, acc, vm);
      ++global_epoch_;
    }

    rec.prim_after = has_prim_ ? prim_.param_hash() : 0;
    rec.cond_after = has_cond_ ? cond_.param_hash() : 0;
    rec.refiner_after = has_refiner_ ? refiner_.param_hash() : 0;
    phases_.push_back(std::move(rec));
  }

  void csv_row(const std::string& phase, int epoch, const EpochTerms& a, double val_moc) {
    if (!csv_.is_open()) return;
    double nb = a.batches > 0 ? static_cast<double>(a.batches) : 1.0;
    csv_ << phase << ',' << epoch << ',' << format_double(alpha_cur_) << ','
         << format_double(a.total / nb);
    for (int i = 0; i < 6; ++i) csv_ << ',' << format_double(a.sum[i] / nb);
    csv_ << ',' << format_double(val_moc) << '\n';
  }

  TrainResult finish() {
    result_.mode_name = mode_name_;
    result_.primary_final_hash = prim_.param_hash();
    result_.has_conditional = has_cond_;
    if (has_cond_) result_.conditional = cond_;
    result_.has_refiner = has_refiner_;
    if (has_refiner_) result_.refiner = refiner_;
    result_.phases = phases_;
    result_.best_val_moc = best_val_moc_;
    result_.best_val_epoch = best_epoch_;
    result_.pseudo_cache = cache_;
    for (const auto& id : weak_id_set_) {
      auto it = access_.reads.find(id);
      if (it != access_.reads.end() && it->second.count("full_labels"))
        ++result_.substitution_exceptions;
    }
    result_.access = std::move(access_);
    result_.primary = have_best_ ? std::move(best_model_) : prim_;
    if (!opt_.out_dir.empty()) {
      save_model_checkpoint(prim_, "primary", opt_.out_dir + "/prim_final.json");
      save_model_checkpoint(result_.primary, "primary", opt_.out_dir + "/prim_best.json");
      if (has_refiner_) save_refiner_checkpoint(refiner_, opt_.out_dir + "/refiner_final.json");
      write_access_log(result_, opt_.out_dir + "/access_log.json");
      csv_.close();
    }
    return std::move(result_);
  }

  std::string mode_name_;
  RefineMode refine_;
  TrainOptions opt_;
  SgdMomentum sgd_;

  std::vector<WindowedSample> train_full_;
  std::vector<WindowedSample> val_;
  std::vector<WeakSample> weak_;
  std::set<std::string> weak_id_set_;

  BackboneConfig cond_cfg_;
  Model cond_, prim_;
  Refiner refiner_;
  bool has_cond_ = false, has_prim_ = false, has_refiner_ = false;

  std::vector<PseudoEntry> cache_;
  std::map<std::string, const PseudoEntry*> cache_by_id_;

  TrainResult result_;
  AccessLog access_;
  std::vector<PhaseRecord> phases_;
  std::ofstream csv_;
  double alpha_cur_ = 0.0;
  int global_epoch_ = 0;
  double best_val_moc_ = -1.0;
  int best_epoch_ = -1;
  Model best_model_;
  bool have_best_ = false;
};

}  // namespace

TrainResult train_linear(const std::vector<WindowedSample>& full,
                         const std::vector<WeakSample>& weak, const TrainOptions& opt) {
  Runner r("linear", RefineMode::Linear, full, weak, opt);
  return r.run_main();
}

TrainResult train_adaptive(const std::vector<WindowedSample>& full,
                           const std::vector<WeakSample>& weak, const TrainOptions& opt) {
  Runner r("adaptive", RefineMode::Adaptive, full, weak, opt);
  return r.run_main();
}

TrainResult train_none(const std::vector<WindowedSample>& full, const std::vector<WeakSample>& weak,
                       const TrainOptions& opt) {
  Runner r("none", RefineMode::None, full, weak, opt);
  return r.run_main();
}

TrainResult train_baseline(int kind, const std::vector<WindowedSample>& full,
                           const std::vector<WindowedSample>& weak_pool, const TrainOptions& opt) {
  if (kind < 1 || kind > 3) throw ConfigError("baseline kind must be 1, 2, or 3");
  std::vector<WeakSample> weak;
  if (kind == 3) {
    weak.reserve(weak_pool.size());
    for (const auto& w : weak_pool) weak.push_back(weaken(w));
  }
  Runner r("baseline" + std::to_string(kind), RefineMode::None, full, std::move(weak), opt);
  return r.run_baseline(kind, weak_pool);
}

}  // namespace densea

#include "densea/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <utility>

#include "json.hpp"

namespace densea {

using nlohmann::json;

AnticipatedSequence pseudo_label(const Model& cond, const double* observed, int frames,
                                 double horizon, int weak_label) {
  if (!cond.cfg.conditional)
    throw ConfigError("pseudo_label: needs a conditional model");
  if (weak_label < 0 || weak_label >= cond.cfg.n_classes)
    throw IndexError("pseudo_label: weak label out of range");
  AnticipatedSequence seq = anticipate_full(cond, observed, frames, horizon, weak_label);
  // the weak label is ground truth for the first future action: trust it
  // outright instead of the model's own step-1 distribution
  std::vector<double> one_hot(static_cast<size_t>(cond.cfg.n_classes), 0.0);
  one_hot[static_cast<size_t>(weak_label)] = 1.0;
  seq.steps[0].class_dist = std::move(one_hot);
  return seq;
}

int aligned_steps(const AnticipatedSequence& primary, const AnticipatedSequence& pseudo) {
  if (primary.steps.empty() || pseudo.steps.empty())
    throw DimensionError("aligned_steps: empty rollout");
  return std::max(primary.natural_len, pseudo.natural_len);
}

double alpha_at(int epoch) {
  if (epoch < 0) throw ConfigError("alpha_at: epoch must be >= 0");
  return std::max(0.5, 30.0 * std::pow(0.95, epoch));
}

std::vector<StepValue> linear_refine(const std::vector<StepValue>& p,
                                     const std::vector<StepValue>& q, double alpha,
                                     double prob_floor, double duration_floor) {
  if (!(alpha >= 0.0)) throw ConfigError("linear_refine: alpha must be >= 0");
  if (p.size() != q.size()) throw DimensionError("linear_refine: step counts differ");
  const double wp = 1.0 / (alpha + 1.0);
  const double wq = alpha / (alpha + 1.0);

  std::vector<StepValue> out;
  out.reserve(p.size());
  for (size_t m = 0; m < p.size(); ++m) {
    const size_t K = p[m].class_dist.size();
    if (K == 0 || q[m].class_dist.size() != K)
      throw DimensionError("linear_refine: class distribution widths differ");
    StepValue r;
    r.class_dist.resize(K);
    // log-space weighted mean with a max shift, then renormalize
    double lmax = -1e300;
    for (size_t k = 0; k < K; ++k) {
      double l = wp * std::log(std::max(p[m].class_dist[k], prob_floor)) +
                 wq * std::log(std::max(q[m].class_dist[k], prob_floor));
      r.class_dist[k] = l;
      lmax = std::max(lmax, l);
    }
    double z = 0.0;
    for (size_t k = 0; k < K; ++k) {
      r.class_dist[k] = std::exp(r.class_dist[k] - lmax);
      z += r.class_dist[k];
    }
    for (size_t k = 0; k < K; ++k) r.class_dist[k] /= z;
    r.duration = std::exp(wp * std::log(std::max(p[m].duration, duration_floor)) +
                          wq * std::log(std::max(q[m].duration, duration_floor)));
    out.push_back(std::move(r));
  }
  return out;
}

// ---- adaptive refiner -----------------------------------------------------

Refiner init_refiner(int n_classes, RefinerInit mode) {
  if (n_classes < 2) throw ConfigError("refiner: n_classes must be >= 2");
  Refiner r;
  r.n_classes = n_classes;
  const int K = n_classes;
  Param& W = r.params.add("refiner.W", K + 1, 2 * K + 2);
  r.params.add("refiner.b", 1, K + 1);
  // identity starts: softmax(log q) == q and exp(log d) == d, so copying the
  // matching log-feature column reproduces that side exactly
  auto set = [&](int row, int col) { W.value[static_cast<size_t>(row) * W.cols + col] = 1.0; };
  if (mode == RefinerInit::CopyPseudo) {
    for (int i = 0; i < K; ++i) set(i, K + 1 + i);
    set(K, 2 * K + 1);
  } else {
    for (int i = 0; i < K; ++i) set(i, i);
    set(K, K);
  }
  return r;
}

BoundRefiner bind_refiner(Refiner& r, Binder& binder) {
  BoundRefiner br;
  br.refiner = &r;
  br.W = binder.bind(r.params.at("refiner.W"));
  br.b = binder.bind(r.params.at("refiner.b"));
  return br;
}

RefinedStepGraph adaptive_refine_graph(Tape& t, const BoundRefiner& br, const Mat& p_dist,
                                       NodeId p_duration, const std::vector<double>& q_dist,
                                       double q_duration, double prob_floor,
                                       double duration_floor) {
  const int K = br.refiner->n_classes;
  if (p_dist.rows != 1 || p_dist.cols != K)
    throw DimensionError("adaptive_refine: primary distribution width mismatch");
  if (static_cast<int>(q_dist.size()) != K)
    throw DimensionError("adaptive_refine: pseudo distribution width mismatch");

  // feature row [log p | log d_p | log q | log d_q]; consecutive pushes keep
  // it contiguous without an extra copy pass
  NodeId f0 = kNoNode;
  for (int k = 0; k < K; ++k) {
    NodeId v = t.log_clamp(p_dist.id(k), prob_floor);
    if (f0 == kNoNode) f0 = v;
  }
  t.log_clamp(p_duration, duration_floor);
  for (int k = 0; k < K; ++k) t.leaf(std::log(std::max(q_dist[static_cast<size_t>(k)], prob_floor)));
  t.leaf(std::log(std::max(q_duration, duration_floor)));
  Mat feat{f0, 1, 2 * K + 2};

  std::vector<NodeId> dots(static_cast<size_t>(K + 1));
  for (int r = 0; r <= K; ++r)
    dots[static_cast<size_t>(r)] = t.dot(br.W.id(r, 0), 1, feat.base, 1, feat.cols);
  NodeId o0 = kNoNode;
  for (int r = 0; r <= K; ++r) {
    NodeId v = t.add(dots[static_cast<size_t>(r)], br.b.id(r));
    if (o0 == kNoNode) o0 = v;
  }

  RefinedStepGraph out;
  out.dist = softmax_row(t, Mat{o0, 1, K});
  out.duration = t.exp(o0 + K);
  return out;
}

StepValue adaptive_refine_value(const Refiner& r, const StepValue& p, const StepValue& q,
                                double prob_floor, double duration_floor) {
  Refiner scratch = r;  // values only; gradients never harvested
  Tape t;
  Binder binder(t);
  BoundRefiner br = bind_refiner(scratch, binder);
  Mat pd = make_leaf_mat(t, p.class_dist.data(), 1, static_cast<int>(p.class_dist.size()));
  NodeId pdur = t.leaf(p.duration);
  RefinedStepGraph g =
      adaptive_refine_graph(t, br, pd, pdur, q.class_dist, q.duration, prob_floor, duration_floor);
  StepValue out;
  out.class_dist = read_mat(t, g.dist);
  out.duration = t.val(g.duration);
  return out;
}

std::vector<StepValue> adaptive_refine_sequence(const Refiner& r, const std::vector<StepValue>& p,
                                                const std::vector<StepValue>& q, double prob_floor,
                                                double duration_floor) {
  if (p.size() != q.size()) throw DimensionError("adaptive_refine: step counts differ");
  std::vector<StepValue> out;
  out.reserve(p.size());
  for (size_t m = 0; m < p.size(); ++m)
    out.push_back(adaptive_refine_value(r, p[m], q[m], prob_floor, duration_floor));
  return out;
}

// ---- refiner checkpoints ----------------------------------------------------

void save_refiner_checkpoint(const Refiner& r, const std::string& path) {
  json j;
  j["version"] = 1;
  j["kind"] = "refiner";
  j["config"] = json{{"n_classes", r.n_classes}};
  json params = json::array();
  for (const Param* p : r.params.all())
    params.push_back(
        json{{"name", p->name}, {"rows", p->rows}, {"cols", p->cols}, {"data", p->value}});
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open refiner checkpoint for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing refiner checkpoint: " + path);
}

Refiner load_refiner_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open refiner checkpoint: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object() || j.value("version", -1) != 1)
    throw ParseError(path + ": unsupported refiner checkpoint version");
  if (j.value("kind", std::string()) != "refiner")
    throw ParseError(path + ": not a refiner checkpoint");
  int K = 0;
  try {
    K = j.at("config").at("n_classes").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad refiner config: " + e.what());
  }
  Refiner r = init_refiner(K);
  const json& params = j.at("params");
  if (!params.is_array() || params.size() != r.params.all().size())
    throw ParseError(path + ": parameter list does not match the refiner skeleton");
  for (const json& pj : params) {
    try {
      std::string name = pj.at("name").get<std::string>();
      int rows = pj.at("rows").get<int>();
      int cols = pj.at("cols").get<int>();
      std::vector<double> data = pj.at("data").get<std::vector<double>>();
      if (!r.params.has(name)) throw ParseError(path + ": unexpected parameter '" + name + "'");
      Param& p = r.params.at(name);
      if (p.rows != rows || p.cols != cols || p.size() != data.size())
        throw ParseError(path + ": shape mismatch for parameter '" + name + "'");
      p.value = std::move(data);
    } catch (const json::exception& e) {
      throw ParseError(path + ": bad parameter entry: " + e.what());
    }
  }
  return r;
}

// ---- pseudo-label cache -------------------------------------------------------

void write_pseudo_cache(const std::vector<PseudoEntry>& cache, const std::string& path) {
  json entries = json::array();
  for (const PseudoEntry& e : cache) {
    json steps = json::array();
    for (const StepValue& sv : e.steps)
      steps.push_back(
          json{{"dist", sv.class_dist}, {"duration", sv.duration}, {"attn", sv.attn}});
    entries.push_back(
        json{{"id", e.id}, {"natural_len", e.natural_len}, {"steps", std::move(steps)}});
  }
  json j;
  j["version"] = 1;
  j["kind"] = "pseudo_cache";
  j["entries"] = std::move(entries);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open pseudo cache for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing pseudo cache: " + path);
}

std::vector<PseudoEntry> read_pseudo_cache(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pseudo cache: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object() || j.value("version", -1) != 1 ||
      j.value("kind", std::string()) != "pseudo_cache")
    throw ParseError(path + ": not a pseudo cache file");
  std::vector<PseudoEntry> out;
  try {
    for (const json& ej : j.at("entries")) {
      PseudoEntry e;
      e.id = ej.at("id").get<std::string>();
      e.natural_len = ej.at("natural_len").get<int>();
      for (const json& sj : ej.at("steps")) {
        StepValue sv;
        sv.class_dist = sj.at("dist").get<std::vector<double>>();
        sv.duration = sj.at("duration").get<double>();
        if (sj.contains("attn")) sv.attn = sj.at("attn").get<std::vector<double>>();
        e.steps.push_back(std::move(sv));
      }
      if (e.natural_len < 1 || e.natural_len > static_cast<int>(e.steps.size()))
        throw ParseError(path + ": natural_len out of range for entry '" + e.id + "'");
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad pseudo cache entry: " + e.what());
  }
  return out;
}

}  // namespace densea

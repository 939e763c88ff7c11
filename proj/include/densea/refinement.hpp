#pragma once

#include <string>
#include <vector>

#include "densea/backbone.hpp"

namespace densea {

// ---- pseudo-labeling -----------------------------------------------------

// Full-length rollout of the conditional model with the first step's class
// distribution replaced by the weak label's one-hot (the label is trusted,
// not re-predicted); the first duration stays the model's own estimate.
AnticipatedSequence pseudo_label(const Model& cond, const double* observed, int frames,
                                 double horizon, int weak_label);

// Number of steps two full rollouts are refined over: whichever of the two
// needs more steps to cover the horizon, using the continued decoding past
// the natural stop.
int aligned_steps(const AnticipatedSequence& primary, const AnticipatedSequence& pseudo);

// ---- fixed (linear) refinement ---------------------------------------------

// Schedule for the pseudo-label trust weight: starts high and decays toward
// a floor as the primary model matures.
double alpha_at(int epoch);

// Step-wise refinement of a primary rollout p against a pseudo rollout q:
// class distributions are the renormalized weighted geometric mean
//   r_k  proportional to  p_k^{1/(a+1)} * q_k^{a/(a+1)}
// (the minimizer of the same-weighted KL objective), durations the matching
// geometric mean.  Inputs are floored before the logs.
std::vector<StepValue> linear_refine(const std::vector<StepValue>& p,
                                     const std::vector<StepValue>& q, double alpha,
                                     double prob_floor = 1e-12, double duration_floor = 1e-6);

// ---- learned (adaptive) refinement -----------------------------------------

enum class RefinerInit { CopyPseudo, CopyPrimary };

// One shared linear layer over [log p, log d_p, log q, log d_q] with a
// softmax head for the refined distribution and an exp head for the refined
// duration.  Both init modes are exact identities: CopyPseudo starts the
// refiner as "emit the pseudo sequence", CopyPrimary as "emit the primary".
struct Refiner {
  int n_classes = 0;
  ParamStore params;
  uint64_t param_hash() const { return params.value_hash(); }
};

Refiner init_refiner(int n_classes, RefinerInit mode = RefinerInit::CopyPseudo);

struct BoundRefiner {
  const Refiner* refiner = nullptr;
  Mat W;  // (K+1) x (2K+2)
  Mat b;  // 1 x (K+1)
};

BoundRefiner bind_refiner(Refiner& r, Binder& binder);

struct RefinedStepGraph {
  Mat dist;                 // 1 x K
  NodeId duration = kNoNode;
};

// Differentiable refinement of one step.  The primary side enters as tape
// nodes (gradient reaches the primary model and the refiner); the pseudo side
// enters as constants (it comes from the frozen conditional model's cache).
RefinedStepGraph adaptive_refine_graph(Tape& t, const BoundRefiner& br, const Mat& p_dist,
                                       NodeId p_duration, const std::vector<double>& q_dist,
                                       double q_duration, double prob_floor = 1e-12,
                                       double duration_floor = 1e-6);

// Value-level twin of adaptive_refine_graph (same math, throwaway tape).
StepValue adaptive_refine_value(const Refiner& r, const StepValue& p, const StepValue& q,
                                double prob_floor = 1e-12, double duration_floor = 1e-6);

std::vector<StepValue> adaptive_refine_sequence(const Refiner& r, const std::vector<StepValue>& p,
                                                const std::vector<StepValue>& q,
                                                double prob_floor = 1e-12,
                                                double duration_floor = 1e-6);

// ---- refiner checkpoints ----------------------------------------------------

void save_refiner_checkpoint(const Refiner& r, const std::string& path);
Refiner load_refiner_checkpoint(const std::string& path);

// ---- pseudo-label cache -------------------------------------------------------

// One cached full rollout per training video, written once when the
// conditional model is frozen.  Attention rows ride along (when the model has
// attention) for the alignment regularizer.
struct PseudoEntry {
  std::string id;
  std::vector<StepValue> steps;  // max_steps entries
  int natural_len = 0;
};

void write_pseudo_cache(const std::vector<PseudoEntry>& cache, const std::string& path);
std::vector<PseudoEntry> read_pseudo_cache(const std::string& path);

}  // namespace densea

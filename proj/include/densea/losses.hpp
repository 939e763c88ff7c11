#pragma once

#include <string>
#include <vector>

#include "densea/refinement.hpp"

namespace densea {

struct SupervisedTarget {
  int class_id = -1;
  double duration = 0.0;
};

// Everything the composite loss can see about one video on the current tape.
// Pieces a given training phase does not use are simply left empty.
struct VideoLossSpec {
  std::vector<StepOutput> steps;            // rollout of the model being trained
  std::vector<SupervisedTarget> gt;         // full future labels (empty for weak videos)
  int weak_label = -1;                      // first future action (weak videos)
  std::vector<StepValue> pseudo_targets;    // refined targets, constants (weak videos)
  std::vector<RefinedStepGraph> refined;    // refiner outputs on this tape
  std::vector<StepValue> refined_targets;   // constants the refined steps train against
                                            // when no full labels exist (weak videos:
                                            // the primary's own detached predictions)
  std::vector<std::vector<double>> cond_attn;  // frozen conditional attention rows
};

struct LossOptions {
  bool label_full = false;          // CE + duration MSE against gt, all steps
  bool weak_c1 = false;             // CE of step 1 against the weak label
  bool pseudo = false;              // CE (steps >= 2) + duration MSE (all steps) vs targets
  bool refined_supervised = false;  // CE + duration MSE of refined steps against gt,
                                    // or against refined_targets when gt is absent
  bool attn_reg = false;            // squared attention gap against the conditional rows
  double prob_floor = 1e-12;
};

struct TermValue {
  std::string name;
  double value = 0.0;  // per-video mean; 0 when no video contributed
  int videos = 0;      // contributing videos
};

struct LossBreakdown {
  NodeId total = kNoNode;
  double total_value = 0.0;
  std::vector<TermValue> terms;  // always all six names, fixed order
};

// Fixed term order: label_full, label_weak_c1, pseudo_class, pseudo_duration,
// refined_supervised, attn_reg.
const std::vector<std::string>& loss_term_names();

// Builds the composite batch loss on the tape.  Each enabled term is summed
// over the videos that carry the data for it and divided by that count; the
// total is the sum of the enabled, contributing terms.
LossBreakdown batch_loss_graph(Tape& t, const std::vector<VideoLossSpec>& batch,
                               const LossOptions& opt);

// The three composites the training phases use.
LossBreakdown loss_cond_graph(Tape& t, const std::vector<VideoLossSpec>& batch);  // label_full
LossBreakdown loss_prim_graph(Tape& t, const std::vector<VideoLossSpec>& batch);
LossBreakdown loss_adap_graph(Tape& t, const std::vector<VideoLossSpec>& batch);

}  // namespace densea

#pragma once

#include <string>
#include <vector>

#include "densea/lstm.hpp"
#include "densea/matrix.hpp"

namespace densea {

struct BackboneConfig {
  int feature_dim = 64;
  int n_classes = 10;
  int hidden_dim = 512;    // d_h, shared by encoder and decoder
  int encoding_dim = 512;  // d_I
  int embed_dim = 16;      // soft class-embedding fed back into the decoder
  int max_steps = 12;
  bool attention = true;
  bool raw_linear_duration = false;  // fidelity mode: no rectifier on the duration head
  bool conditional = false;          // weak-label input concatenated at the first decoder step
  int cond_embed_dim = 8;
  double prob_floor = 1e-12;
  double duration_floor = 1e-6;
};

void validate_backbone(const BackboneConfig& cfg);

// A model is its config plus a named parameter store.  The attention-path and
// plain-path duration parameters both always exist (checkpoints stay shape-
// stable across the ablation flag); the unused path gets zero gradient.
struct Model {
  BackboneConfig cfg;
  ParamStore params;
  uint64_t param_hash() const { return params.value_hash(); }
};

Model init_model(const BackboneConfig& cfg, uint64_t seed);
size_t count_parameters(const ParamStore& ps);
size_t count_parameters(const Model& m);

// ---- graph-side -------------------------------------------------------------

// All parameters bound onto one tape generation.
struct BoundModel {
  const BackboneConfig* cfg = nullptr;
  LstmRefs enc, dec;
  Mat proj_W, proj_b;       // encoder hidden -> encoding row
  Mat embed;                // embed_dim x K
  Mat sos;                  // 1 x embed_dim
  Mat cond_embed;           // K x cond_embed_dim (conditional models only)
  Mat attn_W, attn_b;       // d_I x d_h, 1 x d_I
  Mat dur_attn_beta;        // 1 x (d_I + d_h)
  Mat dur_attn_eps;         // 1 x 1
  Mat dur_plain_beta;       // 1 x d_h
  Mat dur_plain_eps;        // 1 x 1
  Mat cls_W, cls_b;         // K x d_h, 1 x K
};

BoundModel bind_model(Model& m, Binder& binder);

struct VideoEncoding {
  Mat I;  // T x d_I, contiguous
  LstmState final_state;
  int frames = 0;
};

VideoEncoding encode(Tape& t, const BoundModel& bm, const double* features, int frames);

struct AttentionOut {
  Mat weights;  // 1 x T
  Mat context;  // 1 x d_I
};

// Eq.-style attention: weights = softmax((W h + b) . I_t / sqrt(d_I)),
// context = weights . I.
AttentionOut attention_score(Tape& t, const Mat& h, const VideoEncoding& enc, const Mat& attn_W,
                             const Mat& attn_b);

struct StepOutput {
  Mat class_dist;     // 1 x K
  NodeId duration = kNoNode;
  Mat attn;           // 1 x T; empty when attention is off
  Mat hidden;         // 1 x d_h (current step)
};

// Differentiable step-by-step decoding on the caller's tape.  The conditional
// variant requires the weak label for its first-step input; non-conditional
// models must be given weak_label = -1.
class RolloutSession {
 public:
  RolloutSession(Tape& t, const BoundModel& bm, const VideoEncoding& enc, int weak_label);
  StepOutput step();
  int steps_taken() const { return steps_; }

  // Teacher forcing for training graphs: step m+1's class feedback uses the
  // given class's embedding instead of the model's step-m distribution, for as
  // many steps as classes are supplied.  Classes must be in vocabulary.
  void force_feedback(std::vector<int> classes);

 private:
  Tape* t_;
  const BoundModel* bm_;
  const VideoEncoding* enc_;
  LstmState state_;
  Mat prev_dist_;
  int weak_label_;
  int steps_ = 0;
  std::vector<int> forced_;
};

// ---- value-level inference ---------------------------------------------------

enum class StopReason { HorizonCovered, MaxSteps };

struct StepValue {
  std::vector<double> class_dist;
  double duration = 0.0;
  std::vector<double> attn;  // empty when attention is off
};

struct AnticipatedSequence {
  std::vector<StepValue> steps;
  StopReason stop_reason = StopReason::MaxSteps;
  int natural_len = 0;  // steps needed to cover the horizon (== size after truncation)
};

// Rolls the decoder for exactly max_steps and records where the horizon was
// first covered; durations are left untruncated.  Pseudo-label caching and
// sequence alignment both need steps beyond the natural stop.
AnticipatedSequence anticipate_full(const Model& m, const double* observed, int frames,
                                    double horizon, int weak_label = -1);

// The inference entry point: decode until cumulative duration covers the
// horizon (or max_steps), truncating the last duration to exactly fill it.
AnticipatedSequence anticipate(const Model& m, const double* observed, int frames, double horizon,
                               int weak_label = -1);

// Cuts a full rollout down to its natural length and truncates the final
// duration at the horizon.
AnticipatedSequence truncate_to_horizon(const AnticipatedSequence& full, double horizon);

// ---- checkpoints --------------------------------------------------------------

void save_model_checkpoint(const Model& m, const std::string& kind, const std::string& path);
struct LoadedModel {
  Model model;
  std::string kind;
};
LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace densea

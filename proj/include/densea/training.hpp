#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "densea/dataset.hpp"
#include "densea/evaluation.hpp"
#include "densea/losses.hpp"

namespace densea {

// Refinement flavor of the main two-module training runs.
enum class RefineMode { None, Linear, Adaptive };

struct TrainOptions {
  BackboneConfig backbone;  // primary architecture; the conditional twin is derived
  uint64_t seed = 0;
  int n1 = 20;  // conditional pretraining epochs
  int n2 = 25;  // primary epochs over the fully-labelled set (and weak set, linear/none)
  int n3 = 20;  // weak-integration epochs (adaptive only)
  int batch_size = 8;
  double lr = 1e-3;
  double momentum = 0.9;
  double clip_norm = 5.0;
  double val_fraction = 0.1;          // of the fully-labelled set, for best-checkpoint picking
  double cond_subset_fraction = 1.0;  // adaptive pretraining uses ceil(0.5 * |full|)
  RefinerInit refiner_init = RefinerInit::CopyPseudo;
  std::string out_dir;  // artifacts land here when non-empty
};

// Epoch budgets the two algorithms were tuned with.
TrainOptions linear_defaults();    // n1=20, n2=25
TrainOptions adaptive_defaults();  // n1=15, n2=20, n3=20, half-set conditional pretraining

// Every sample id the run touched, with the label fields it read.
struct AccessLog {
  std::map<std::string, std::set<std::string>> reads;  // id -> {"features", "full_labels", "weak_label"}
  void record(const std::string& id, const std::string& field) { reads[id].insert(field); }
};

struct PhaseRecord {
  std::string name;
  int epochs = 0;
  uint64_t prim_before = 0, prim_after = 0;
  uint64_t cond_before = 0, cond_after = 0;
  uint64_t refiner_before = 0, refiner_after = 0;
};

struct TrainResult {
  std::string mode_name;
  Model primary;  // best validation weights when a validation split exists, else final
  uint64_t primary_final_hash = 0;
  bool has_conditional = false;
  Model conditional;
  uint64_t cond_hash_at_freeze = 0;
  bool has_refiner = false;
  Refiner refiner;
  std::vector<PhaseRecord> phases;
  // weak-label substitutions performed while pseudo-labeling, and the number
  // of weak ids whose full labels were ever read (must stay zero)
  int substituted = 0;
  int substitution_exceptions = 0;
  AccessLog access;
  double best_val_moc = -1.0;
  int best_val_epoch = -1;
  std::vector<PseudoEntry> pseudo_cache;
};

// ---- the two main algorithms and their no-refinement ablation ---------------

// Stage one trains the label-conditioned module on the fully-labelled set and
// freezes it; stage two trains the primary module on full labels plus
// pseudo-labels refined against the primary's own predictions with the
// decaying trust schedule.
TrainResult train_linear(const std::vector<WindowedSample>& full,
                         const std::vector<WeakSample>& weak, const TrainOptions& opt);

// Same two-module setup but the pseudo-labels pass through a learned refiner:
// stage two trains primary + refiner on the fully-labelled set (the refined
// output is supervised directly), stage three folds the weak set in.
TrainResult train_adaptive(const std::vector<WindowedSample>& full,
                           const std::vector<WeakSample>& weak, const TrainOptions& opt);

// Pseudo-labels used as-is (no refinement): the ablation floor.
TrainResult train_none(const std::vector<WindowedSample>& full,
                       const std::vector<WeakSample>& weak, const TrainOptions& opt);

// ---- reference baselines -----------------------------------------------------

// kind 1: fully supervised on everything (upper bound; reads the weak pool's
//         full labels, which the main algorithms never see)
// kind 2: fully supervised on the small full set only (lower bound)
// kind 3: full set plus the weak labels' first-step cross-entropy
TrainResult train_baseline(int kind, const std::vector<WindowedSample>& full,
                           const std::vector<WindowedSample>& weak_pool, const TrainOptions& opt);

// ---- shared plumbing ----------------------------------------------------------

// Even interleaving of two homogeneous batch streams (full-set batches and
// weak-set batches) by fractional position; 0 picks from the first stream.
std::vector<int> interleave_pattern(int n_first, int n_second);

void write_access_log(const TrainResult& r, const std::string& path);

}  // namespace densea

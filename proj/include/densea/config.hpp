#pragma once

#include <string>

#include "densea/training.hpp"

namespace densea {

// One experiment = synthetic data recipe + model shape + training schedule.
// Loaded from JSON with strict unknown-key rejection; every field has a
// default, so "{}" is a valid config.
struct ExperimentConfig {
  int schema_version = 1;

  // data
  int n_videos = 200;
  int n_classes = 10;
  int feature_dim = 16;
  double fps = 2.0;
  double noise_sigma = 0.5;
  bool oracle_features = false;
  bool duration_dependence = false;
  uint64_t data_seed = 1;
  double observed_fraction = 0.3;
  double predicted_fraction = 0.2;
  double train_fraction = 0.8;  // of the corpus; the rest is the test partition
  double full_fraction = 0.15;  // of the train partition

  // model
  int hidden_dim = 32;
  int encoding_dim = 32;
  int embed_dim = 16;
  int cond_embed_dim = 8;
  int max_steps = 12;
  bool attention = true;
  bool raw_linear_duration = false;

  // training ("adaptive", "linear", "none", "baseline1", "baseline2", "baseline3");
  // epoch counts of -1 resolve to the algorithm's tuned defaults
  std::string mode = "adaptive";
  uint64_t seed = 0;
  int n1 = -1;
  int n2 = -1;
  int n3 = -1;
  int batch_size = 8;
  double lr = 1e-3;
  double momentum = 0.9;
  double clip_norm = 5.0;
  double val_fraction = 0.1;
  double cond_subset_fraction = -1.0;
};

void validate_config(const ExperimentConfig& c);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& c, const std::string& path);

GrammarConfig grammar_of(const ExperimentConfig& c);
BackboneConfig backbone_of(const ExperimentConfig& c);

// Resolves mode defaults (epoch budgets, conditional subset) into concrete
// options; out_dir is left empty for the caller.
TrainOptions train_options_of(const ExperimentConfig& c);

}  // namespace densea

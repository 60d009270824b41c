#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "swintr/data_io.hpp"
#include "swintr/label_map.hpp"
#include "swintr/metrics.hpp"
#include "swintr/model.hpp"

namespace swintr {

struct FocalLossConfig {
  double gamma = 2.0;
  std::vector<double> alpha;  // per class; empty means 1.0 for every class
  std::uint8_t ignore_label = kIgnoreLabel;
};

// Mean over non-ignored pixels of -alpha_t (1-p_t)^gamma log p_t, p_t the
// softmax probability of the true class. scores [B,n,H,W]; target [B,H,W].
// Zero when every pixel is ignored.
Tensor focal_loss(const Tensor& scores, const LabelMap& target, const FocalLossConfig& cfg = {});

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<std::string> names;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const std::vector<NamedTensor>& params, const AdamConfig& cfg = {});
// One bias-corrected update of every parameter that requires grad and has one.
// Throws NumericError naming the first parameter with a non-finite gradient,
// before touching any parameter.
void adam_step(const std::vector<NamedTensor>& params, AdamState& state, double lr);

struct LRSchedule {
  double max_lr = 1e-4;
  double min_lr = 1e-6;
  int total_epochs = 50;
};

// Cosine annealing from max_lr at epoch 0 to min_lr at epoch total-1.
double lr_at_epoch(const LRSchedule& sched, int epoch);

struct AugmentationConfig {
  bool enabled = true;
  double flip_probability = 0.5;
  double max_rotation_deg = 10.0;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
};

// Geometric transforms act on image and mask alike (mask by nearest neighbor,
// uncovered border pixels become the ignore label); photometric jitter acts on
// the image only.
Sample augment_sample(const Sample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng);

struct Checkpoint {
  std::vector<NamedTensor> model;
  std::vector<NamedTensor> optim_m;
  std::vector<NamedTensor> optim_v;
  std::int64_t optim_step = 0;
  std::int64_t epoch = -1;
  double val_iou = 0.0;
  std::string config;  // effective run configuration text
};

// Deep copy of the model state (and optimizer state when given).
Checkpoint capture_checkpoint(const Module& model, const AdamState* adam, std::int64_t epoch, double val_iou,
                              const std::string& config);
void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);
// Copies every tensor into the model. Throws FormatError listing absent or
// unexpected names and shape mismatches.
void load_model_state(Module& model, const Checkpoint& ckpt);
void load_adam_state(AdamState& state, const Checkpoint& ckpt);

struct TrainConfig {
  LRSchedule schedule;  // total_epochs is the epoch count
  int batch_size = 8;
  int eval_batch_size = 8;
  FocalLossConfig focal;
  AdamConfig adam;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;
  bool freeze_resizers = false;
  // Leading epochs that train only the internal model on inputs resized to
  // its resolution; the remaining epochs train everything jointly.
  int pretrain_epochs = 0;
  std::string config_text;  // stored in checkpoints
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_iou = 0;
};
// epoch, lr, train_loss, val_iou, tab-separated, newline-terminated.
std::string format_log_line(const EpochRecord& r);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  bool halted = false;
  std::string halt_reason;
};

// Samples must already be at the model's external resolution. Log lines are
// written to log_sink (if given) as each epoch completes.
TrainResult train_loop(SwinTRModel& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                       const TrainConfig& cfg, std::ostream* log_sink = nullptr);

// Eval-mode, no-grad confusion over the samples at the model's resolution.
ConfusionMatrix evaluate_samples(SwinTRModel& model, const std::vector<Sample>& samples, int batch_size = 8);
// Loads the records at the model's external resolution (fail fast on any
// unreadable sample) and scores them.
MetricsReport evaluate_dataset(SwinTRModel& model, const std::vector<Record>& records,
                               const std::vector<std::string>& class_names, int batch_size = 8);

}  // namespace swintr

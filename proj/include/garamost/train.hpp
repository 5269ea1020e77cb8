#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "garamost/metrics.hpp"
#include "garamost/model.hpp"
#include "garamost/phantom.hpp"

namespace garamost {

struct TrainConfig {
  int n_interp = 1;
  int batch_size = 0;  // 0: 10 / 6 / 4 for n_interp 1 / 2 / 3
  int warmup_steps = 1000;
  double lr_peak = 6e-5;
  double lr_final = 6e-6;
  int epochs = 100;
  int total_steps = 0;  // overrides epochs when positive
  double weight_decay = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::int64_t image_size = 128;
  int train_sequences = 329;
  int eval_sequences = 16;
  int sequence_length = 12;
  int eval_every = 250;
  int log_every = 10;
  std::filesystem::path out_dir = "run";
  ModelConfig model;
  bool granularity_set = false;  // false: 7,7 for one frame, 7,29 otherwise

  int effective_batch() const;
  ModelConfig effective_model() const;
  // Training samples per epoch over the synthetic training set.
  std::int64_t samples_per_epoch() const;
  int effective_total_steps() const;
  void validate() const;

  // Flat `key = value` file; unknown keys are errors.
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  static TrainConfig load(const std::filesystem::path& path);
};

// Linear warmup to lr_peak, then cosine decay to lr_final at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One decoupled-weight-decay Adam update of a flat parameter block; `t` is
// the 1-based step count used for bias correction.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t t,
                  double lr, const AdamWHyper& h);

template <typename T>
class AdamW {
 public:
  AdamW(const ParamStore<T>& params, const AdamWHyper& hyper);

  // Applies one update from the accumulated gradients. A parameter without a
  // gradient is treated as having a zero gradient. Throws NumericError naming
  // the first parameter with a non-finite gradient.
  void step(double lr);
  std::int64_t steps() const { return t_; }

 private:
  const ParamStore<T>& params_;
  AdamWHyper hyper_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm);

// Mean absolute error over every pixel of every frame.
template <typename T>
Tensor<T> l1_loss(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& targets);

// Synthetic training/evaluation data generated from seeds. Sequence j of a
// split is a phantom with seed derive_seed(split seed, j).
class PhantomDataset {
 public:
  PhantomDataset(std::uint64_t seed, int sequences, int sequence_length, std::int64_t size, int n_interp);

  std::int64_t size() const { return static_cast<std::int64_t>(sequences_) * windows_; }
  InterpSample sample(std::int64_t index) const;
  std::vector<InterpSample> all() const;

 private:
  std::uint64_t seed_;
  int sequences_;
  int windows_;
  std::int64_t size_;
  int n_interp_;
};

struct EvalRow {
  std::int64_t sample = 0;
  double t = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  Aggregate ssim, psnr;
  double time_s = 0.0;  // median per n-frame inference call, 0 when not timed
};

enum class Baseline { none, mid };

struct EvalOptions {
  Baseline baseline = Baseline::none;
  int timing_repeats = 0;  // 0 disables timing
  int timing_warmups = 3;
  int batch = 8;
};

EvalResult evaluate(const Model<float>* model, const std::vector<InterpSample>& samples, const EvalOptions& options);
void write_eval_csv(const EvalResult& result, const std::filesystem::path& path);

struct RunRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double eval_ssim_mean = 0.0, eval_ssim_std = 0.0;
  double eval_psnr_mean = 0.0, eval_psnr_std = 0.0;
  bool has_eval = false;
  double step_seconds = 0.0;
};

struct TrainResult {
  std::vector<RunRecord> log;
  double best_eval_ssim = 0.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
};

using TrainObserver = std::function<void(const RunRecord&)>;

// Full training run. Writes best.gmst / final.gmst (with .cfg sidecars) and
// train_log.csv into cfg.out_dir. On a non-finite loss the run stops with a
// NumericError and the checkpoints already on disk are left untouched.
TrainResult train(const TrainConfig& cfg, const TrainObserver& observer = {});

struct BenchReport {
  int n_frames = 1;
  double one_frame_s = 0.0;
  double n_frame_s = 0.0;
  double ratio = 1.0;
  StageTimes stages;  // from the median n-frame call
  bool shared_saving_ok = true;
};

BenchReport bench(const Model<float>& model, int n_frames, std::int64_t size = 128, int repeats = 20,
                  int warmups = 3);

// Evenly spaced interior times k / (n + 1).
std::vector<double> interior_times(int n);

}  // namespace garamost

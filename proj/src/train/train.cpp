#include "garamost/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "garamost/config.hpp"

namespace garamost {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename V>
V parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  V out{};
  in >> out;
  if (!in || !in.eof()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{"base_channels", "model_dim",      "key_dim",   "value_dim",
                                             "granularity",   "share_directions", "deep_structs", "fme_width",
                                             "fme_blocks",    "refiner_widths"};
  return keys;
}

}  // namespace

std::vector<double> interior_times(int n) {
  if (n < 1) throw std::invalid_argument("interior_times: n must be positive");
  std::vector<double> t;
  for (int k = 1; k <= n; ++k) t.push_back(static_cast<double>(k) / static_cast<double>(n + 1));
  return t;
}

// ---- configuration ---------------------------------------------------------

int TrainConfig::effective_batch() const {
  if (batch_size > 0) return batch_size;
  return n_interp == 1 ? 10 : n_interp == 2 ? 6 : 4;
}

ModelConfig TrainConfig::effective_model() const {
  ModelConfig m = model;
  if (!granularity_set) {
    m.r_path_a = 7;
    m.r_path_b = n_interp == 1 ? 7 : 29;
  }
  return m;
}

std::int64_t TrainConfig::samples_per_epoch() const {
  return static_cast<std::int64_t>(train_sequences) * std::max(0, sequence_length - n_interp - 1);
}

int TrainConfig::effective_total_steps() const {
  if (total_steps > 0) return total_steps;
  const std::int64_t b = effective_batch();
  return static_cast<int>(epochs * ((samples_per_epoch() + b - 1) / b));
}

void TrainConfig::validate() const {
  if (n_interp < 1 || n_interp > 3) throw ConfigError("n_interp must be 1, 2 or 3");
  if (batch_size < 0) throw ConfigError("batch_size must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (!(lr_final < lr_peak) || lr_final < 0) throw ConfigError("need 0 <= lr_final < lr_peak");
  if (epochs < 1 && total_steps < 1) throw ConfigError("need epochs >= 1 or total_steps >= 1");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (train_sequences < 1 || eval_sequences < 1) throw ConfigError("need at least one train and one eval sequence");
  if (sequence_length < n_interp + 2) {
    throw ConfigError("sequence_length " + std::to_string(sequence_length) + " is too short for n_interp " +
                      std::to_string(n_interp));
  }
  if (eval_every < 1 || log_every < 1) throw ConfigError("eval_every and log_every must be positive");
  const auto m = effective_model();
  m.validate();
  if (image_size % 16 != 0 || image_size < m.min_input_size()) {
    throw ConfigError("image_size " + std::to_string(image_size) + " must be a multiple of 16 and at least " +
                      std::to_string(m.min_input_size()) + " for granularity " + std::to_string(m.r_path_a) + "," +
                      std::to_string(m.r_path_b));
  }
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  std::map<std::string, std::string> model_kv;
  for (const auto& [k, v] : kv) {
    if (std::find(model_keys().begin(), model_keys().end(), k) != model_keys().end()) {
      model_kv[k] = v;
      if (k == "granularity") c.granularity_set = true;
    } else if (k == "n_interp") {
      c.n_interp = parse_number<int>(k, v);
    } else if (k == "batch_size") {
      c.batch_size = parse_number<int>(k, v);
    } else if (k == "warmup_steps") {
      c.warmup_steps = parse_number<int>(k, v);
    } else if (k == "lr_peak") {
      c.lr_peak = parse_number<double>(k, v);
    } else if (k == "lr_final") {
      c.lr_final = parse_number<double>(k, v);
    } else if (k == "epochs") {
      c.epochs = parse_number<int>(k, v);
    } else if (k == "total_steps") {
      c.total_steps = parse_number<int>(k, v);
    } else if (k == "weight_decay") {
      c.weight_decay = parse_number<double>(k, v);
    } else if (k == "beta1") {
      c.beta1 = parse_number<double>(k, v);
    } else if (k == "beta2") {
      c.beta2 = parse_number<double>(k, v);
    } else if (k == "adam_eps") {
      c.adam_eps = parse_number<double>(k, v);
    } else if (k == "clip_norm") {
      c.clip_norm = parse_number<double>(k, v);
    } else if (k == "seed") {
      c.seed = parse_number<std::uint64_t>(k, v);
    } else if (k == "image_size") {
      c.image_size = parse_number<std::int64_t>(k, v);
    } else if (k == "train_sequences") {
      c.train_sequences = parse_number<int>(k, v);
    } else if (k == "eval_sequences") {
      c.eval_sequences = parse_number<int>(k, v);
    } else if (k == "sequence_length") {
      c.sequence_length = parse_number<int>(k, v);
    } else if (k == "eval_every") {
      c.eval_every = parse_number<int>(k, v);
    } else if (k == "log_every") {
      c.log_every = parse_number<int>(k, v);
    } else if (k == "out_dir") {
      c.out_dir = v;
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  c.model = ModelConfig::from_map(model_kv);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return from_map(read_key_values(path)); }

// ---- schedule and optimizer ------------------------------------------------

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  const std::int64_t warm = cfg.warmup_steps;
  if (step < warm) return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warm);
  if (total_steps <= warm) return cfg.lr_peak;
  const double progress =
      std::clamp(static_cast<double>(step - warm) / static_cast<double>(total_steps - warm), 0.0, 1.0);
  return cfg.lr_final + (cfg.lr_peak - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t t,
                  double lr, const AdamWHyper& h) {
  const double decay = 1.0 - lr * h.weight_decay;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
    double p = static_cast<double>(param[i]) * decay;
    const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * g;
    const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    p -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps);
    param[i] = static_cast<T>(p);
  }
}

template <typename T>
AdamW<T>::AdamW(const ParamStore<T>& params, const AdamWHyper& hyper) : params_(params), hyper_(hyper) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  const auto& tensors = params_.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].has_grad()) continue;
    for (T g : tensors[i].grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + params_.names()[i] + "'");
    }
  }
  ++t_;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor<T> p = tensors[i];
    const std::span<const T> g = p.has_grad() ? p.grad() : std::span<const T>{};
    adamw_update<T>(p.mutable_data(), g, m_[i], v_[i], t_, lr, hyper_);
  }
}

template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& t : params.tensors()) {
    if (!t.has_grad()) continue;
    for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto t : params.tensors()) {
      if (!t.has_grad()) continue;
      for (auto& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

template <typename T>
Tensor<T> l1_loss(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& targets) {
  if (preds.empty() || preds.size() != targets.size()) {
    throw ShapeError("l1_loss: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(targets.size()) + " targets");
  }
  std::vector<Tensor<T>> per_frame;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].shape() != targets[i].shape()) {
      throw ShapeError("l1_loss: prediction " + shape_str(preds[i].shape()) + " vs target " +
                       shape_str(targets[i].shape()));
    }
    if (i > 0 && preds[i].shape() != preds[0].shape()) throw ShapeError("l1_loss: frames differ in shape");
    per_frame.push_back(mean(abs(preds[i] - targets[i])));
  }
  // adding per-frame terms in value order makes the loss independent of frame order
  std::stable_sort(per_frame.begin(), per_frame.end(),
                   [](const Tensor<T>& a, const Tensor<T>& b) { return a.item() < b.item(); });
  Tensor<T> total = per_frame[0];
  for (std::size_t i = 1; i < per_frame.size(); ++i) total = total + per_frame[i];
  return scale(total, static_cast<T>(1.0 / static_cast<double>(per_frame.size())));
}

// ---- data ------------------------------------------------------------------

PhantomDataset::PhantomDataset(std::uint64_t seed, int sequences, int sequence_length, std::int64_t size,
                               int n_interp)
    : seed_(seed), sequences_(sequences), windows_(sequence_length - n_interp - 1), size_(size), n_interp_(n_interp) {
  if (sequences < 1 || windows_ < 1) throw std::invalid_argument("PhantomDataset: no samples for this configuration");
}

InterpSample PhantomDataset::sample(std::int64_t index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("PhantomDataset: sample index out of range");
  const auto seq = static_cast<std::uint64_t>(index / windows_);
  const double start = static_cast<double>(index % windows_);
  const std::uint64_t seq_seed = derive_seed(seed_, seq);
  std::mt19937_64 rng(derive_seed(seq_seed, 1));
  const Phantom ph(seq_seed, size_, random_phantom_params(rng));
  InterpSample s;
  const int span = n_interp_ + 1;
  s.i0 = ph.render(start);
  s.i1 = ph.render(start + span);
  for (int k = 1; k < span; ++k) {
    s.targets.emplace_back(static_cast<double>(k) / span, ph.render(start + k));
  }
  return s;
}

std::vector<InterpSample> PhantomDataset::all() const {
  std::vector<InterpSample> out;
  for (std::int64_t i = 0; i < size(); ++i) out.push_back(sample(i));
  return out;
}

// ---- evaluation ------------------------------------------------------------

EvalResult evaluate(const Model<float>* model, const std::vector<InterpSample>& samples, const EvalOptions& options) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  if (!model && options.baseline == Baseline::none) throw std::invalid_argument("evaluate: no model and no baseline");
  std::vector<double> times;
  for (const auto& [t, img] : samples.front().targets) times.push_back(t);
  for (const auto& s : samples) {
    if (s.targets.size() != times.size()) throw std::invalid_argument("evaluate: samples differ in frame count");
  }

  auto predict = [&](const std::vector<const InterpSample*>& batch) {
    std::vector<const Image*> a, b;
    for (const auto* s : batch) {
      a.push_back(&s->i0);
      b.push_back(&s->i1);
    }
    const auto i0 = images_to_tensor(a), i1 = images_to_tensor(b);
    if (options.baseline == Baseline::mid) {
      NoGradGuard no_grad;
      return std::vector<TensorF>(times.size(), scale(i0 + i1, 0.5f));
    }
    return model->interpolate(i0, i1, times);
  };

  EvalResult r;
  std::vector<double> ssims, psnrs;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, options.batch));
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    std::vector<const InterpSample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + bs); ++i) batch.push_back(&samples[i]);
    const auto preds = predict(batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t k = 0; k < times.size(); ++k) {
        const Image pred = tensor_to_image(preds[k], static_cast<std::int64_t>(b));
        const Image& target = batch[b]->targets[k].second;
        EvalRow row{static_cast<std::int64_t>(start + b), times[k], ssim(pred, target), psnr(pred, target)};
        ssims.push_back(row.ssim);
        psnrs.push_back(row.psnr);
        r.rows.push_back(row);
      }
    }
  }
  r.ssim = aggregate(ssims);
  r.psnr = aggregate(psnrs);

  if (options.timing_repeats > 0) {
    const std::vector<const InterpSample*> one{&samples.front()};
    for (int i = 0; i < options.timing_warmups; ++i) predict(one);
    std::vector<double> runs;
    for (int i = 0; i < options.timing_repeats; ++i) {
      const auto start = Clock::now();
      predict(one);
      runs.push_back(seconds_since(start));
    }
    r.time_s = median(runs);
  }
  return r;
}

void write_eval_csv(const EvalResult& result, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << "sample,frame_t,ssim,psnr\n" << std::setprecision(10);
  for (const auto& row : result.rows) f << row.sample << ',' << row.t << ',' << row.ssim << ',' << row.psnr << '\n';
  if (!f) throw std::runtime_error("write to " + path.string() + " failed");
}

// ---- training --------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const TrainObserver& observer) {
  cfg.validate();
  const int total = cfg.effective_total_steps();
  const int batch = cfg.effective_batch();
  const auto times = interior_times(cfg.n_interp);
  std::filesystem::create_directories(cfg.out_dir);

  Model<float> model(cfg.effective_model(), derive_seed(cfg.seed, 0));
  AdamW<float> opt(model.params(), AdamWHyper{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  const PhantomDataset train_set(derive_seed(cfg.seed, 1), cfg.train_sequences, cfg.sequence_length, cfg.image_size,
                                 cfg.n_interp);
  const auto eval_samples = PhantomDataset(derive_seed(cfg.seed, 2), cfg.eval_sequences, cfg.sequence_length,
                                           cfg.image_size, cfg.n_interp)
                                .all();
  std::mt19937_64 order_rng(derive_seed(cfg.seed, 3));
  std::vector<std::int64_t> order(static_cast<std::size_t>(train_set.size()));
  std::size_t cursor = order.size();
  std::int64_t epoch = -1;

  TrainResult result;
  result.best_eval_ssim = -1e300;
  result.best_checkpoint = cfg.out_dir / "best.gmst";
  result.final_checkpoint = cfg.out_dir / "final.gmst";
  std::ofstream log(cfg.out_dir / "train_log.csv", std::ios::trunc);
  log << "step,epoch,lr,loss,eval_ssim_mean,eval_ssim_std,eval_psnr_mean,eval_psnr_std,step_seconds\n";

  for (int step = 1; step <= total; ++step) {
    const auto start = Clock::now();
    std::vector<InterpSample> samples;
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::int64_t(0));
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
        ++epoch;
      }
      samples.push_back(train_set.sample(order[cursor++]));
    }
    std::vector<const Image*> a, b1;
    for (const auto& s : samples) {
      a.push_back(&s.i0);
      b1.push_back(&s.i1);
    }
    std::vector<TensorF> targets;
    for (std::size_t k = 0; k < times.size(); ++k) {
      std::vector<const Image*> tk;
      for (const auto& s : samples) tk.push_back(&s.targets[k].second);
      targets.push_back(images_to_tensor(tk));
    }

    RunRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.lr = lr_schedule(step, total, cfg);
    try {
      const auto preds = model.forward(images_to_tensor(a), images_to_tensor(b1), times);
      const auto loss = l1_loss(preds, targets);
      rec.loss = loss.item();
      model.params().zero_grad();
      loss.backward();
      clip_grad_norm(model.params(), cfg.clip_norm);
      opt.step(rec.lr);
    } catch (const NumericError& e) {
      throw NumericError("training stopped at step " + std::to_string(step) + ": " + e.what() +
                         "; checkpoints already written in " + cfg.out_dir.string() + " are unchanged");
    }
    rec.step_seconds = seconds_since(start);

    if (step % cfg.eval_every == 0 || step == total) {
      const auto ev = evaluate(&model, eval_samples, EvalOptions{});
      rec.has_eval = true;
      rec.eval_ssim_mean = ev.ssim.mean;
      rec.eval_ssim_std = ev.ssim.std;
      rec.eval_psnr_mean = ev.psnr.mean;
      rec.eval_psnr_std = ev.psnr.std;
      if (ev.ssim.mean > result.best_eval_ssim) {
        result.best_eval_ssim = ev.ssim.mean;
        model.save(result.best_checkpoint);
      }
    }
    log << rec.step << ',' << rec.epoch << ',' << std::setprecision(10) << rec.lr << ',' << rec.loss << ',';
    if (rec.has_eval) {
      log << rec.eval_ssim_mean << ',' << rec.eval_ssim_std << ',' << rec.eval_psnr_mean << ',' << rec.eval_psnr_std;
    } else {
      log << ",,,";
    }
    log << ',' << rec.step_seconds << '\n' << std::flush;
    result.log.push_back(rec);
    if (observer && (step % cfg.log_every == 0 || rec.has_eval || step == 1)) observer(rec);
  }
  model.save(result.final_checkpoint);
  return result;
}

// ---- benchmarking ----------------------------------------------------------

BenchReport bench(const Model<float>& model, int n_frames, std::int64_t size, int repeats, int warmups) {
  if (n_frames < 1 || n_frames > 3) throw std::invalid_argument("bench: n_frames must be 1, 2 or 3");
  const Phantom ph(12345, size, PhantomParams{});
  const auto i0 = image_to_tensor(ph.render(0.0)), i1 = image_to_tensor(ph.render(n_frames + 1.0));

  auto time_call = [&](const std::vector<double>& ts, StageTimes* stages) {
    for (int i = 0; i < warmups; ++i) model.interpolate(i0, i1, ts);
    std::vector<std::pair<double, StageTimes>> runs;
    for (int i = 0; i < repeats; ++i) {
      StageTimes st;
      const auto start = Clock::now();
      model.interpolate(i0, i1, ts, &st);
      runs.emplace_back(seconds_since(start), std::move(st));
    }
    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto& mid = runs[runs.size() / 2];
    if (stages) *stages = mid.second;
    return mid.first;
  };

  BenchReport r;
  r.n_frames = n_frames;
  r.one_frame_s = time_call({0.5}, n_frames == 1 ? &r.stages : nullptr);
  if (n_frames == 1) {
    r.n_frame_s = r.one_frame_s;
    r.ratio = 1.0;
  } else {
    r.n_frame_s = time_call(interior_times(n_frames), &r.stages);
    r.ratio = r.n_frame_s / r.one_frame_s;
    r.shared_saving_ok = r.ratio < 0.9 * n_frames;
  }
  return r;
}

#define GARAMOST_INSTANTIATE(T)                                                                                   \
  template void adamw_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, std::int64_t,      \
                                double, const AdamWHyper&);                                                       \
  template class AdamW<T>;                                                                                        \
  template double clip_grad_norm(ParamStore<T>&, double);                                                         \
  template Tensor<T> l1_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost

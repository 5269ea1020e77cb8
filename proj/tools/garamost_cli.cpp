#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "garamost/config.hpp"
#include "garamost/errors.hpp"
#include "garamost/parallel.hpp"
#include "garamost/train.hpp"

namespace fs = std::filesystem;
using namespace garamost;

namespace {

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad time value '" + item + "' in --times");
    }
  }
  if (out.empty()) throw ConfigError("--times is empty");
  return out;
}

// A sequence directory, or a directory of sequence directories.
std::vector<std::vector<Image>> load_dataset(const fs::path& root) {
  std::vector<std::vector<Image>> seqs;
  if (fs::exists(frame_path(root, 0))) {
    seqs.push_back(load_sequence(root));
    return seqs;
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(frame_path(e.path(), 0))) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) seqs.push_back(load_sequence(d));
  if (seqs.empty()) throw std::runtime_error("no frame sequences found under " + root.string());
  return seqs;
}

void print_eval(const EvalResult& r, const char* label) {
  std::printf("%-10s SSIM %.2f +- %.2f   PSNR %.2f +- %.2f   time %.4f s   (%zu frames)\n", label, r.ssim.mean,
              r.ssim.std, r.psnr.mean, r.psnr.std, r.time_s, r.rows.size());
}

std::unique_ptr<Model<float>> load_or_fresh(const std::string& ckpt) {
  if (!ckpt.empty()) return Model<float>::load(ckpt);
  std::fprintf(stderr, "no --ckpt given, using an untrained model\n");
  return std::make_unique<Model<float>>(ModelConfig{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"garamost: direct multi-frame interpolation for DSA-like image sequences"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Intra-op thread cap (default: GARAMOST_THREADS or all cores)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model from a key = value config file");
  std::string config_path, out_dir, granularity;
  int steps = 0;
  bool deep_structs = false, dry_run = false;
  train_cmd->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory (overrides out_dir)");
  train_cmd->add_option("--steps", steps, "Total steps (overrides total_steps)");
  train_cmd->add_option("--granularity", granularity, "Position-lambda scopes rA,rB, e.g. 7,29");
  train_cmd->add_flag("--deep-structs", deep_structs, "Feed the motion structures to the deepest refiner stage");
  train_cmd->add_flag("--dry-run", dry_run, "Validate the config and print the plan without training");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Interpolate frames between two PGM images");
  std::string ckpt, i0_path, i1_path, times_text = "0.5", infer_out;
  infer_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--i0", i0_path, "First frame")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--i1", i1_path, "Last frame")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--times", times_text, "Comma-separated times in [0,1]");
  infer_cmd->add_option("--out", infer_out, "Output sequence directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a baseline on frame sequences");
  std::string eval_ckpt, data_dir, csv_path, baseline;
  int eval_n = 1, repeats = 20;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_dir, "Sequence directory or directory of sequences")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--n", eval_n, "Frames to interpolate per window")->check(CLI::Range(1, 3));
  eval_cmd->add_option("--csv", csv_path, "Per-frame CSV output");
  eval_cmd->add_option("--baseline", baseline, "Score a baseline instead of a model")
      ->check(CLI::IsMember({"mid"}));
  eval_cmd->add_option("--repeats", repeats, "Timed repeats (0 disables timing)");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time one n-frame call against one-frame calls");
  std::string bench_ckpt;
  int bench_n = 3, bench_repeats = 20;
  std::int64_t bench_size = 128;
  bench_cmd->add_option("--ckpt", bench_ckpt, "Checkpoint (untrained model when omitted)")
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("--n", bench_n, "Frames per call")->check(CLI::Range(1, 3));
  bench_cmd->add_option("--size", bench_size, "Frame side");
  bench_cmd->add_option("--repeats", bench_repeats, "Timed repeats");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic phantom sequences as PGM files");
  std::uint64_t synth_seed = 0;
  int count = 1, frames = 12;
  std::int64_t size = 128;
  std::string synth_out;
  synth_cmd->add_option("--seed", synth_seed, "Base seed");
  synth_cmd->add_option("--count", count, "Number of sequences")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", size, "Frame side");
  synth_cmd->add_option("--frames", frames, "Frames per sequence");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_thread_count(threads);

  try {
    if (*train_cmd) {
      auto kv = read_key_values(config_path);
      if (!out_dir.empty()) kv["out_dir"] = out_dir;
      if (steps > 0) kv["total_steps"] = std::to_string(steps);
      if (!granularity.empty()) kv["granularity"] = granularity;
      if (deep_structs) kv["deep_structs"] = "true";
      const auto cfg = TrainConfig::from_map(kv);
      const auto m = cfg.effective_model();
      std::printf("training %d steps, batch %d, %d frame(s), granularity %d,%d, %lldpx -> %s\n",
                  cfg.effective_total_steps(), cfg.effective_batch(), cfg.n_interp, m.r_path_a, m.r_path_b,
                  static_cast<long long>(cfg.image_size), cfg.out_dir.string().c_str());
      if (dry_run) return 0;
      const auto result = train(cfg, [](const RunRecord& r) {
        std::printf("step %6lld  epoch %3lld  lr %.3e  loss %.5f  %.2fs", static_cast<long long>(r.step),
                    static_cast<long long>(r.epoch), r.lr, r.loss, r.step_seconds);
        if (r.has_eval) {
          std::printf("  | eval SSIM %.2f +- %.2f  PSNR %.2f +- %.2f", r.eval_ssim_mean, r.eval_ssim_std,
                      r.eval_psnr_mean, r.eval_psnr_std);
        }
        std::printf("\n");
        std::fflush(stdout);
      });
      std::printf("best eval SSIM %.2f -> %s\nfinal -> %s\n", result.best_eval_ssim,
                  result.best_checkpoint.string().c_str(), result.final_checkpoint.string().c_str());
    } else if (*infer_cmd) {
      const auto model = Model<float>::load(ckpt);
      const auto times = parse_times(times_text);
      const Image a = load_pgm(i0_path), b = load_pgm(i1_path);
      const auto preds = model->interpolate(image_to_tensor(a), image_to_tensor(b), times);
      std::vector<Image> seq{a};
      for (const auto& p : preds) seq.push_back(tensor_to_image(p, 0, 65535));
      seq.push_back(b);
      save_sequence(seq, infer_out);
      std::printf("wrote %zu frames to %s\n", seq.size(), infer_out.c_str());
    } else if (*eval_cmd) {
      if (eval_ckpt.empty() && baseline.empty()) throw ConfigError("eval needs --ckpt or --baseline mid");
      std::unique_ptr<Model<float>> model;
      if (!eval_ckpt.empty()) model = Model<float>::load(eval_ckpt);
      std::vector<InterpSample> samples;
      for (const auto& seq : load_dataset(data_dir)) {
        for (auto& s : make_samples(seq, eval_n)) samples.push_back(std::move(s));
      }
      EvalOptions opt;
      opt.baseline = baseline == "mid" ? Baseline::mid : Baseline::none;
      opt.timing_repeats = repeats;
      const auto r = evaluate(opt.baseline == Baseline::mid ? nullptr : model.get(), samples, opt);
      print_eval(r, opt.baseline == Baseline::mid ? "mid" : "model");
      if (!csv_path.empty()) write_eval_csv(r, csv_path);
    } else if (*bench_cmd) {
      const auto model = load_or_fresh(bench_ckpt);
      const auto r = bench(*model, bench_n, bench_size, bench_repeats);
      std::printf("n=%d  one-frame %.4f s  %d-frame %.4f s  ratio %.3f (limit %.2f)  %s\n", r.n_frames, r.one_frame_s,
                  r.n_frames, r.n_frame_s, r.ratio, 0.9 * r.n_frames, r.shared_saving_ok ? "ok" : "NO SAVING");
      std::printf("stages: encoder %.4f s  mg-msfe %.4f s  decode", r.stages.encoder_s, r.stages.mg_msfe_s);
      for (double d : r.stages.decode_s) std::printf(" %.4f", d);
      std::printf(" s\n");
      return r.shared_saving_ok ? 0 : 3;
    } else if (*synth_cmd) {
      for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = derive_seed(synth_seed, static_cast<std::uint64_t>(i));
        std::mt19937_64 rng(derive_seed(seed, 1));
        const auto seq = synth_sequence(seed, frames, size, random_phantom_params(rng));
        char name[32];
        std::snprintf(name, sizeof name, "seq_%04d", i);
        save_sequence(seq.frames, fs::path(synth_out) / name);
      }
      std::printf("wrote %d sequence(s) of %d frames to %s\n", count, frames, synth_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "garamost/config.hpp"
#include "garamost/errors.hpp"
#include "garamost/metrics.hpp"
#include "garamost/model.hpp"
#include "garamost/parallel.hpp"
#include "garamost/phantom.hpp"
#include "garamost/train.hpp"

namespace py = pybind11;
using namespace garamost;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a, int maxval = 255) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D image array");
  Image img(a.shape(1), a.shape(0), maxval);
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::array_t<float> from_image(const Image& img) {
  py::array_t<float> out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

// Accepts H x W or N x 1 x H x W.
TensorF to_frames(const FloatArray& a) {
  if (a.ndim() == 2) return TensorF::from({1, 1, a.shape(0), a.shape(1)}, std::vector<float>(a.data(), a.data() + a.size()));
  if (a.ndim() == 4 && a.shape(1) == 1) {
    return TensorF::from({a.shape(0), 1, a.shape(2), a.shape(3)}, std::vector<float>(a.data(), a.data() + a.size()));
  }
  throw ShapeError("frames must be H x W or N x 1 x H x W arrays");
}

py::array_t<float> from_frames(const TensorF& t, bool squeeze) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  if (squeeze) shape = {t.dim(2), t.dim(3)};
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::map<std::string, std::string> to_kv(const py::dict& d) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : d) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::str>(v)) {
      value = v.cast<std::string>();
    } else if (py::isinstance<py::tuple>(v) || py::isinstance<py::list>(v)) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    kv[k.cast<std::string>()] = value;
  }
  return kv;
}

py::dict record_dict(const RunRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["epoch"] = r.epoch;
  d["lr"] = r.lr;
  d["loss"] = r.loss;
  if (r.has_eval) {
    d["eval_ssim_mean"] = r.eval_ssim_mean;
    d["eval_ssim_std"] = r.eval_ssim_std;
    d["eval_psnr_mean"] = r.eval_psnr_mean;
    d["eval_psnr_std"] = r.eval_psnr_std;
  }
  d["step_seconds"] = r.step_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Direct multi-frame interpolation for DSA-like image sequences";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("set_thread_count", &set_thread_count, py::arg("n"));

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](const py::dict& config, std::uint64_t seed) {
             return std::make_unique<Model<float>>(ModelConfig::from_map(to_kv(config)), seed);
           }),
           py::arg("config") = py::dict(), py::arg("seed") = 0,
           "New model from `key = value` style settings, e.g. {'granularity': (7, 7)}")
      .def_static("load", [](const std::filesystem::path& p) { return Model<float>::load(p); }, py::arg("path"))
      .def("save", &Model<float>::save, py::arg("path"))
      .def(
          "interpolate",
          [](const Model<float>& model, const FloatArray& i0, const FloatArray& i1, const std::vector<double>& times) {
            const auto frames = [&] {
              py::gil_scoped_release release;
              return model.interpolate(to_frames(i0), to_frames(i1), times);
            }();
            py::list out;
            for (const auto& f : frames) out.append(from_frames(f, i0.ndim() == 2));
            return out;
          },
          py::arg("i0"), py::arg("i1"), py::arg("times") = std::vector<double>{0.5},
          "Frames at each t in [0, 1] from one shared feature pass")
      .def_property_readonly("encoder_calls", &Model<float>::encoder_calls)
      .def("reset_counters", &Model<float>::reset_counters)
      .def_property_readonly("config", [](const Model<float>& model) { return model.config().to_map(); })
      .def_property_readonly("num_parameters", [](const Model<float>& model) { return model.params().numel(); });

  m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return ssim(to_image(a), to_image(b)); },
        py::arg("a"), py::arg("b"), "Mean SSIM in percent");
  m.def("psnr", [](const FloatArray& a, const FloatArray& b) { return psnr(to_image(a), to_image(b)); },
        py::arg("a"), py::arg("b"), "PSNR in dB for images in [0, 1]");

  m.def(
      "read_pgm",
      [](const std::filesystem::path& p) {
        const auto img = load_pgm(p);
        return py::make_tuple(from_image(img), img.maxval);
      },
      py::arg("path"), "Returns (pixels in [0, 1], maxval)");
  m.def("write_pgm", [](const std::filesystem::path& p, const FloatArray& a, int maxval) { save_pgm(to_image(a, maxval), p); },
        py::arg("path"), py::arg("image"), py::arg("maxval") = 255);

  m.def(
      "synth_sequence",
      [](std::uint64_t seed, int frames, std::int64_t size) {
        std::mt19937_64 rng(derive_seed(seed, 1));
        const auto seq = synth_sequence(seed, frames, size, random_phantom_params(rng));
        py::array_t<float> out({static_cast<py::ssize_t>(frames), static_cast<py::ssize_t>(size),
                                static_cast<py::ssize_t>(size)});
        float* dst = out.mutable_data();
        for (const auto& f : seq.frames) dst = std::copy(f.pixels.begin(), f.pixels.end(), dst);
        return out;
      },
      py::arg("seed"), py::arg("frames"), py::arg("size") = 128, "Synthetic phantom sequence, frames x size x size");

  m.def(
      "lr_schedule",
      [](std::int64_t step, std::int64_t total, int warmup, double peak, double final_lr) {
        TrainConfig cfg;
        cfg.warmup_steps = warmup;
        cfg.lr_peak = peak;
        cfg.lr_final = final_lr;
        return lr_schedule(step, total, cfg);
      },
      py::arg("step"), py::arg("total_steps"), py::arg("warmup_steps") = 1000, py::arg("peak") = 6e-5,
      py::arg("final") = 6e-6);

  m.def(
      "train",
      [](const py::object& config, const py::dict& overrides, const py::object& callback) {
        auto kv = py::isinstance<py::dict>(config) ? to_kv(config.cast<py::dict>())
                                                   : read_key_values(config.cast<std::filesystem::path>());
        for (const auto& [k, v] : to_kv(overrides)) kv[k] = v;
        const auto cfg = TrainConfig::from_map(kv);
        TrainObserver observer;
        if (!callback.is_none()) {
          observer = [&](const RunRecord& r) {
            py::gil_scoped_acquire acquire;
            callback(record_dict(r));
          };
        }
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(cfg, observer);
        }
        py::list log;
        for (const auto& r : result.log) log.append(record_dict(r));
        py::dict out;
        out["log"] = log;
        out["best_eval_ssim"] = result.best_eval_ssim;
        out["best_checkpoint"] = result.best_checkpoint;
        out["final_checkpoint"] = result.final_checkpoint;
        return out;
      },
      py::arg("config"), py::arg("overrides") = py::dict(), py::arg("callback") = py::none(),
      "Train from a config file path or a dict of settings");

  m.def(
      "bench",
      [](const Model<float>& model, int n, std::int64_t size, int repeats) {
        const auto r = [&] {
          py::gil_scoped_release release;
          return bench(model, n, size, repeats);
        }();
        py::dict d;
        d["one_frame_s"] = r.one_frame_s;
        d["n_frame_s"] = r.n_frame_s;
        d["ratio"] = r.ratio;
        d["encoder_s"] = r.stages.encoder_s;
        d["mg_msfe_s"] = r.stages.mg_msfe_s;
        d["decode_s"] = r.stages.decode_s;
        d["shared_saving_ok"] = r.shared_saving_ok;
        return d;
      },
      py::arg("model"), py::arg("n") = 3, py::arg("size") = 128, py::arg("repeats") = 20);
}

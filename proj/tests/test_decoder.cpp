#include <doctest.h>

#include <algorithm>

#include "garamost/decoder.hpp"
#include "garamost/grad_check.hpp"
#include "garamost/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace garamost;
using namespace garamost::testing;

namespace {

FlowMask<double> random_flowmask(std::int64_t h, std::int64_t w, std::uint64_t seed, double amp = 2.0) {
  return {random_tensor<double>({1, 4, h, w}, seed, -amp, amp), random_tensor<double>({1, 1, h, w}, seed + 1)};
}

PyramidFeatures<double> random_pyramid(std::int64_t c, std::int64_t h, std::uint64_t seed, bool grad = false) {
  PyramidFeatures<double> p;
  for (int l = 0; l < 4; ++l) {
    p.L[l] = random_tensor<double>({1, c << l, h >> l, h >> l}, seed + l, -1, 1, grad);
  }
  return p;
}

double max_diff(const TensorF& a, const TensorF& b) { return max_abs_diff(as_double(a), as_double(b)); }

}  // namespace

TEST_CASE("time mapping endpoints and midpoint") {
  const auto m0 = random_tensor<double>({1, 2, 3, 3}, 1), m1 = random_tensor<double>({1, 2, 3, 3}, 2);
  auto [a0, b0] = time_map(m0, m1, 0.0);
  for (double v : a0.data()) CHECK(v == 0.0);
  CHECK(as_double(b0) == as_double(m1));
  auto [a1, b1] = time_map(m0, m1, 1.0);
  CHECK(as_double(a1) == as_double(m0));
  for (double v : b1.data()) CHECK(v == 0.0);
  auto [ah, bh] = time_map(m0, m1, 0.5);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(ah.data()[i] == m0.data()[i] / 2);
    CHECK(bh.data()[i] == m1.data()[i] / 2);
  }
  CHECK_THROWS_AS(time_map(m0, m1, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(time_map(m0, m1, -0.1), std::invalid_argument);
}

TEST_CASE("flow-mask level scale arithmetic and zero head") {
  ModelConfig cfg;
  ParamStore<float> store(1);
  FlowMaskLevel<float> l0(store, cfg, 0), l1(store, cfg, 1);
  CHECK(l0.upsample() == 4);
  CHECK(l1.upsample() == 8);
  const auto alpha0 = random_tensor<float>({1, 4 * 64, 8, 8}, 1);
  const auto fm0 = l0(alpha0, random_tensor<float>({1, 2, 64, 64}, 2, 0, 1));
  CHECK(fm0.phi.shape() == Shape{1, 4, 64, 64});
  CHECK(fm0.mu_logits.shape() == Shape{1, 1, 64, 64});
  for (float v : fm0.phi.data()) CHECK(v == 0.0f);
  for (float v : fm0.mu_logits.data()) CHECK(v == 0.0f);
  const auto fm1 = l1(random_tensor<float>({1, 4 * 64, 4, 4}, 3), random_tensor<float>({1, 4, 64, 64}, 4, 0, 1));
  CHECK(fm1.phi.shape() == Shape{1, 4, 64, 64});

  CHECK_THROWS_AS(l0(alpha0, random_tensor<float>({1, 4, 64, 64}, 5)), ShapeError);
  CHECK_THROWS_AS(l1(random_tensor<float>({1, 4 * 64, 4, 4}, 3), random_tensor<float>({1, 2, 64, 64}, 5)),
                  ShapeError);
}

TEST_CASE("flow-mask level gradients at 32x32") {
  const auto cfg = tiny_config();
  ParamStore<double> store(4);
  FlowMaskLevel<double> level(store, cfg, 0);
  const auto alpha = random_tensor<double>({1, 16, 4, 4}, 1, -1, 1, true);
  const auto beta = random_tensor<double>({1, 2, 32, 32}, 2, 0, 1, true);
  const auto wp = random_tensor<double>({1, 4, 32, 32}, 3), wm = random_tensor<double>({1, 1, 32, 32}, 4);
  std::vector<TensorD> inputs{alpha, beta};
  for (const auto& t : store.tensors()) inputs.push_back(t);
  const auto r = grad_check(
      [&](const std::vector<TensorD>& in) {
        const auto fm = level(in[0], in[1]);
        return sum(fm.phi * wp) + sum(fm.mu_logits * wm);
      },
      inputs, GradCheckOptions{1e-6, 6, 1});
  INFO("worst input " << r.worst_input << " coord " << r.worst_coord << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("combining levels and blending") {
  const auto a = random_flowmask(8, 8, 1), b = random_flowmask(8, 8, 3);
  const FlowMask<double> zero{Tensor<double>::zeros({1, 4, 8, 8}), Tensor<double>::zeros({1, 1, 8, 8})};
  const auto az = combine_levels(a, zero);
  CHECK(as_double(az.phi) == as_double(a.phi));
  CHECK(as_double(az.mu_logits) == as_double(a.mu_logits));
  CHECK(as_double(combine_levels(a, b).phi) == as_double(combine_levels(b, a).phi));
  CHECK(as_double(combine_levels(a, b).mu_logits) == as_double(combine_levels(b, a).mu_logits));

  const auto x = random_tensor<double>({1, 1, 8, 8}, 5, 0, 1), y = random_tensor<double>({1, 1, 8, 8}, 6, 0, 1);
  CHECK(max_abs_diff(as_double(blend(x, x, zero)), as_double(x)) < 1e-15);
  const auto mid = blend(x, y, zero);
  for (std::size_t i = 0; i < 64; ++i) CHECK(mid.data()[i] == doctest::Approx((x.data()[i] + y.data()[i]) / 2).epsilon(1e-15));

  FlowMask<double> saturated{a.phi, Tensor<double>::full({1, 1, 8, 8}, 50.0)};
  const auto warped0 = bilinear_warp(x, slice(a.phi, 1, 0, 2));
  CHECK(max_abs_diff(as_double(blend(x, y, saturated)), as_double(warped0)) < 1e-6);
}

TEST_CASE("warping the feature set") {
  const std::int64_t H = 32;
  const auto i0 = random_tensor<double>({1, 1, H, H}, 1, 0, 1), i1 = random_tensor<double>({1, 1, H, H}, 2, 0, 1);
  const auto p0 = random_pyramid(2, H, 10), p1 = random_pyramid(2, H, 20);
  const auto s0 = random_tensor<double>({1, 4, 2, 2}, 3), s1 = random_tensor<double>({1, 4, 2, 2}, 4);

  const FlowMask<double> zero{Tensor<double>::zeros({1, 4, H, H}), Tensor<double>::zeros({1, 1, H, H})};
  const auto w0 = warp_all(i0, i1, p0, p1, s0, s1, zero);
  CHECK(as_double(w0.i0) == as_double(i0));
  for (int l = 0; l < 4; ++l) CHECK(max_abs_diff(as_double(w0.pyr1.L[l]), as_double(p1.L[l])) < 1e-15);
  CHECK(max_abs_diff(as_double(w0.s0p), as_double(s0)) < 1e-15);

  // (8, 0) pixels at full resolution is (1, 0) at 1/8
  std::vector<double> flow(4 * H * H, 0.0);
  std::fill_n(flow.begin(), H * H, 8.0);
  const FlowMask<double> shift{Tensor<double>::from({1, 4, H, H}, flow), zero.mu_logits};
  const auto ws = warp_all(i0, i1, p0, p1, s0, s1, shift);
  std::vector<double> unit(2 * 4 * 4, 0.0);
  std::fill_n(unit.begin(), 16, 1.0);
  const auto expected = bilinear_warp(p0.L[3], Tensor<double>::from({1, 2, 4, 4}, unit));
  CHECK(max_abs_diff(as_double(ws.pyr0.L[3]), as_double(expected)) < 1e-12);
  CHECK(max_abs_diff(as_double(ws.pyr1.L[3]), as_double(p1.L[3])) < 1e-15);

  // each warped item on its own carries gradient back to the flow
  auto phi = random_tensor<double>({1, 4, H, H}, 7, 0.1, 0.9, true);
  const FlowMask<double> fm{phi, zero.mu_logits};
  for (int item = 0; item < 10; ++item) {
    phi.zero_grad();
    const auto w = warp_all(i0, i1, p0, p1, s0, s1, fm);
    const std::array<TensorD, 10> parts{w.i0, w.i1, w.pyr0.L[0], w.pyr0.L[1], w.pyr0.L[2],
                                        w.pyr0.L[3], w.pyr1.L[2], w.pyr1.L[3], w.s0p, w.s1p};
    sum(parts[item] * parts[item]).backward();
    double norm = 0.0;
    for (double g : phi.grad()) norm += std::abs(g);
    INFO("item " << item);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("refiner: residual identity, range, gradients") {
  const std::int64_t H = 32;
  auto cfg = tiny_config();
  ParamStore<double> store(7);
  Refiner<double> refiner(store, cfg);
  const auto context = random_tensor<double>({1, 9, H, H}, 1, 0, 1, true);
  WarpedSet<double> w;
  w.i0 = random_tensor<double>({1, 1, H, H}, 2, 0, 1);
  w.i1 = random_tensor<double>({1, 1, H, H}, 3, 0, 1);
  w.pyr0 = random_pyramid(2, H, 10, true);
  w.pyr1 = random_pyramid(2, H, 20, true);
  w.s0p = random_tensor<double>({1, 4, 2, 2}, 4, -1, 1, true);
  w.s1p = random_tensor<double>({1, 4, 2, 2}, 5, -1, 1, true);
  const auto base = random_tensor<double>({1, 1, H, H}, 6, 0.3, 0.7, true);

  const auto out = refiner(context, w, base);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto weights = random_tensor<double>({1, 1, H, H}, 8);
  std::vector<TensorD> inputs{context, base, w.pyr0.L[1], w.pyr1.L[3], w.s0p};
  for (const auto& t : store.tensors()) inputs.push_back(t);
  const auto r = grad_check(
      [&](const std::vector<TensorD>&) { return sum(refiner(context, w, base) * weights); }, inputs,
      GradCheckOptions{1e-6, 4, 2});
  CHECK(r.max_rel_error < 1e-4);

  for (std::size_t i = 0; i < store.names().size(); ++i) {
    if (store.names()[i].rfind("refiner.head.", 0) != 0) continue;
    auto t = store.tensors()[i];
    for (auto& x : t.mutable_data()) x = 0.0;
  }
  const auto over = random_tensor<double>({1, 1, H, H}, 9, -0.5, 1.5);
  const auto identity = refiner(context, w, over);
  for (std::size_t i = 0; i < identity.data().size(); ++i) CHECK(identity.data()[i] == std::clamp(over.data()[i], 0.0, 1.0));
  CHECK_THROWS_AS(refiner(slice(context, 1, 0, 8), w, base), ShapeError);
}

TEST_CASE("zero heads reproduce the frame average exactly") {
  Model<float> model(ModelConfig{}, 3);
  const auto i0 = random_tensor<float>({2, 1, 48, 40}, 1, 0, 1), i1 = random_tensor<float>({2, 1, 48, 40}, 2, 0, 1);
  const auto out = model.interpolate(i0, i1, {0.0, 0.3, 0.5, 1.0});
  REQUIRE(out.size() == 4);
  for (const auto& f : out) {
    REQUIRE(f.shape() == i0.shape());
    for (std::size_t i = 0; i < f.data().size(); ++i) {
      CHECK(f.data()[i] == std::clamp((i0.data()[i] + i1.data()[i]) * 0.5f, 0.0f, 1.0f));
    }
  }
}

TEST_CASE("direct multi-frame contract") {
  auto cfg = tiny_config(7, 7);
  Model<float> model(cfg, 11);
  const auto i0 = random_tensor<float>({1, 1, 64, 64}, 1, 0, 1), i1 = random_tensor<float>({1, 1, 64, 64}, 2, 0, 1);
  const auto single = model.interpolate(i0, i1, {0.5, 0.5, 0.5});
  CHECK(model.encoder_calls() == 1);
  const auto multi = model.interpolate(i0, i1, {0.25, 0.5, 0.75});
  CHECK(model.encoder_calls() == 2);
  CHECK(as_double(multi[1]) == as_double(single[0]));
  CHECK(as_double(single[0]) == as_double(single[2]));
  CHECK(as_double(multi[0]) != as_double(multi[2]));

  Model<float> twin(cfg, 11);
  CHECK(as_double(twin.interpolate(i0, i1, {0.25})[0]) == as_double(multi[0]));

  StageTimes st;
  model.interpolate(i0, i1, {0.2, 0.4}, &st);
  CHECK(st.decode_s.size() == 2);
  CHECK(st.encoder_s > 0.0);
  CHECK_THROWS_AS(model.interpolate(i0, i1, {}), std::invalid_argument);
  CHECK_THROWS_AS(model.interpolate(i0, i1, {1.2}), std::invalid_argument);
}

TEST_CASE("information flows from level 0 to level 1 only") {
  auto cfg = tiny_config(7, 7);
  Model<float> model(cfg, 5);
  const auto i0 = random_tensor<float>({1, 1, 64, 64}, 1, 0, 1), i1 = random_tensor<float>({1, 1, 64, 64}, 2, 0, 1);
  auto decode = [&] {
    const auto enc = model.encoder().encode_pair(i0, i1);
    const auto ms = model.mg_msfe().forward(enc.fused);
    return model.decoder().decode({&i0, &i1, &enc.pyr0, &enc.pyr1, &ms}, 0.5);
  };
  const auto before = decode();
  auto bump = [&](const std::string& prefix) {
    auto& store = model.params();
    for (std::size_t i = 0; i < store.names().size(); ++i) {
      if (store.names()[i].rfind(prefix, 0) != 0) continue;
      auto t = store.tensors()[i];
      for (auto& x : t.mutable_data()) x += 0.05f;
    }
  };
  bump("fme.level1.");
  const auto l1_changed = decode();
  CHECK(max_diff(l1_changed.level0.phi, before.level0.phi) == 0.0);
  CHECK(max_diff(l1_changed.level1.phi, before.level1.phi) > 0.0);
  bump("fme.level0.");
  const auto l0_changed = decode();
  CHECK(max_diff(l0_changed.level1.phi, l1_changed.level1.phi) > 0.0);
}

TEST_CASE("loss reaches every parameter group") {
  auto cfg = tiny_config(7, 7);
  Model<float> model(cfg, 8);
  const auto i0 = random_tensor<float>({1, 1, 64, 64}, 1, 0.2, 0.8), i1 = random_tensor<float>({1, 1, 64, 64}, 2, 0.2, 0.8);
  const auto target = random_tensor<float>({1, 1, 64, 64}, 3, 0, 1);
  const auto out = model.forward(i0, i1, {0.5});
  mean(abs(out[0] - target)).backward();
  for (const char* group : {"msfe.", "csfcf.", "mgmsfe.", "fme.level0.", "fme.level1.", "refiner."}) {
    double total = 0.0;
    auto& store = model.params();
    for (std::size_t i = 0; i < store.names().size(); ++i) {
      if (store.names()[i].rfind(group, 0) != 0 || !store.tensors()[i].has_grad()) continue;
      for (float g : store.tensors()[i].grad()) total += std::abs(g);
    }
    INFO(group);
    CHECK(total > 0.0);
  }
}

TEST_CASE("end-to-end gradients at 16x16") {
  Model<double> model(tiny_config(3, 1), 21);
  const auto i0 = random_tensor<double>({1, 1, 16, 16}, 1, 0.2, 0.8, true);
  const auto i1 = random_tensor<double>({1, 1, 16, 16}, 2, 0.2, 0.8, true);
  const auto weights = random_tensor<double>({1, 1, 16, 16}, 3);
  std::vector<TensorD> inputs{i0, i1};
  for (const auto& t : model.params().tensors()) inputs.push_back(t);
  const auto r = grad_check(
      [&](const std::vector<TensorD>& in) { return sum(model.forward(in[0], in[1], {0.4})[0] * weights); }, inputs,
      GradCheckOptions{1e-6, 2, 5});
  INFO("worst input " << r.worst_input << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("deep structures and granularity change the output") {
  const auto i0 = random_tensor<float>({1, 1, 64, 64}, 1, 0, 1), i1 = random_tensor<float>({1, 1, 64, 64}, 2, 0, 1);
  auto cfg = tiny_config(7, 7);
  Model<float> plain(cfg, 2);
  cfg.deep_structs = true;
  Model<float> deep(cfg, 2);
  CHECK(max_diff(plain.interpolate(i0, i1, {0.5})[0], deep.interpolate(i0, i1, {0.5})[0]) > 0.0);
  CHECK_THROWS_AS(Model<float>(ModelConfig{}).forward(random_tensor<float>({1, 1, 32, 32}, 1),
                                                      random_tensor<float>({1, 1, 32, 32}, 2), {0.5}),
                  std::invalid_argument);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ffd/gradcheck.hpp"
#include "ffd/rng.hpp"
#include "ffd/tensor.hpp"

using namespace ffd;

namespace {

TensorT<double> rand_leaf(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(size_t(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return make_tensor<double>(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("quadratic: analytic gradient is 2x") {
  auto x = make_tensor<double>({2}, {1.0, 2.0});
  auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    return t.sum(t.mul(in[0], in[0]));
  };
  // grad should be (2, 4)
  x->requires_grad = true;
  x->on_tape = true;
  {
    TapeT<double> t;
    auto y = fn(t, {x});
    t.backward(y);
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(4.0));
  }
  auto r = gradient_check<double>(fn, {x});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("sigmoid composite") {
  Rng rng(2);
  auto x = rand_leaf({3, 2, 2}, rng);
  auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    auto s = t.sigmoid(in[0]);
    auto g = t.global_avg_pool(s);
    return t.sum(t.broadcast_mul(s, g));
  };
  auto r = gradient_check<double>(fn, {x});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("relu at an exact kink is excluded") {
  auto x = make_tensor<double>({3}, {0.0, 0.0004, 1.0});
  auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    return t.sum(t.relu(in[0]));
  };
  auto r = gradient_check<double>(fn, {x}, 1e-3);
  CHECK(r.coords_excluded == 2);  // 0 and 0.0004 sit within step of the kink
  CHECK(r.coords_checked == 1);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("a wrong backward is caught (mutation sanity)") {
  // Detaching one operand corrupts the recorded backward: the graph claims
  // d(x*x)/dx = x while the evaluated function differentiates to 2x. The
  // checker must flag the disagreement.
  auto x = make_tensor<double>({3}, {0.7, -0.4, 1.2});
  auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    auto detached = t.leaf({3}, in[0]->values);
    return t.sum(t.mul(in[0], detached));
  };
  auto r = gradient_check<double>(fn, {x});
  CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("non-deterministic builder is rejected") {
  auto x = make_tensor<double>({2}, {1.0, 2.0});
  int calls = 0;
  auto fn = [&calls](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    auto noise = t.leaf({2}, {0.0, double(calls++) * 1e-6});
    return t.sum(t.add(in[0], noise));
  };
  CHECK_THROWS_AS(gradient_check<double>(fn, {x}), NumericalError);
}

TEST_CASE("every differentiable primitive passes on small random shapes") {
  Rng rng(7);
  double worst = 0.0;

  // conv2d, k in {1,3} x stride in {1,2}
  for (int k : {1, 3})
    for (int stride : {1, 2}) {
      auto x = rand_leaf({2, 5, 4}, rng);
      auto w = rand_leaf({3, 2, k, k}, rng);
      auto b = rand_leaf({3}, rng);
      auto fn = [=](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        return t.sum(t.conv2d(in[0], in[1], in[2], stride, (k - 1) / 2));
      };
      auto r = gradient_check<double>(fn, {x, w, b});
      CHECK(r.max_rel_error < 1e-4);
      worst = std::max(worst, r.max_rel_error);
    }

  // batch_norm train and eval
  for (auto mode : {BatchNormMode::Train, BatchNormMode::Eval}) {
    auto x = rand_leaf({2, 3, 3}, rng);
    auto g = rand_leaf({2}, rng, 0.5, 1.5);
    auto b = rand_leaf({2}, rng);
    auto fn = [=](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      BatchNormStateT<double> st{{0.1, -0.2}, {0.9, 1.1}};
      auto y = t.batch_norm(in[0], in[1], in[2], &st, mode);
      return t.sum(t.mul(y, y));
    };
    auto r = gradient_check<double>(fn, {x, g, b});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  // activations (relu inputs kept away from kinks by construction of ranges)
  {
    auto x = rand_leaf({2, 3, 2}, rng, 0.1, 1.0);
    auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      auto y = t.relu(in[0]);
      auto s = t.sigmoid(y);
      auto m = t.softmax_channels(s);
      return t.sum(t.mul(m, m));
    };
    auto r = gradient_check<double>(fn, {x});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  // global_avg_pool + broadcast_mul + add + mul + scale
  {
    auto x = rand_leaf({3, 4, 2}, rng);
    auto y = rand_leaf({3, 4, 2}, rng);
    auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      auto p = t.global_avg_pool(in[0]);
      auto bm = t.broadcast_mul(in[1], p);
      auto s = t.add(bm, t.scale(in[0], 0.7));
      return t.sum(t.mul(s, s));
    };
    auto r = gradient_check<double>(fn, {x, y});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  // linear on vectors and matrices
  {
    auto x = rand_leaf({4, 3}, rng);
    auto w = rand_leaf({2, 4}, rng);
    auto b = rand_leaf({2}, rng);
    auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      auto y = t.linear(in[0], in[1], in[2]);
      return t.sum(t.mul(y, y));
    };
    auto r = gradient_check<double>(fn, {x, w, b});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  // delineate + select_columns
  {
    auto x = rand_leaf({4, 2, 2}, rng);
    auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      auto q = t.delineate(in[0], 2);
      auto sel = t.select_columns(q, {0, 3, 5});
      return t.sum(t.mul(sel, sel));
    };
    auto r = gradient_check<double>(fn, {x});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  // softmax cross entropy
  {
    auto logits = rand_leaf({3, 4}, rng, -2.0, 2.0);
    auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      return t.softmax_cross_entropy_mean(in[0], {0, 2, 1, 0});
    };
    auto r = gradient_check<double>(fn, {logits});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  // smooth L1 (inputs spread across both branches)
  {
    auto pred = rand_leaf({4, 3}, rng, -3.0, 3.0);
    auto tgt = rand_leaf({4, 3}, rng, -0.5, 0.5);
    auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      return t.smooth_l1_mean(in[0], in[1], 1.0);
    };
    auto r = gradient_check<double>(fn, {pred, tgt});
    CHECK(r.max_rel_error < 1e-4);
    worst = std::max(worst, r.max_rel_error);
  }

  MESSAGE("worst primitive relative error: ", worst);
}

TEST_CASE("FP64 check is tighter than FP32") {
  auto fn32 = [](TapeT<float>& t, const std::vector<TensorT<float>>& in) {
    auto s = t.sigmoid(in[0]);
    return t.sum(t.mul(s, s));
  };
  auto fn64 = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    auto s = t.sigmoid(in[0]);
    return t.sum(t.mul(s, s));
  };
  Rng rng(4);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  std::vector<float> vf(v.begin(), v.end());

  auto r64 = gradient_check<double>(fn64, {make_tensor<double>({3, 2, 2}, v)});
  auto r32 = gradient_check<float>(fn32, {make_tensor<float>({3, 2, 2}, std::move(vf))}, 1e-2f);
  CHECK(r64.max_rel_error <= r32.max_rel_error);
  CHECK(r64.max_rel_error < 1e-4);
}

TEST_CASE("coordinate subsampling checks the requested count") {
  Rng rng(5);
  auto x = rand_leaf({10, 10}, rng);
  auto fn = [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    return t.sum(t.mul(in[0], in[0]));
  };
  auto r = gradient_check<double>(fn, {x}, 1e-3, 17, 42);
  CHECK(r.coords_checked == 17);
  CHECK(r.max_rel_error < 1e-6);
}

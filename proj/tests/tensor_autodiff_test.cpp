#include <cmath>
#include <functional>

#include "doctest.h"
#include "qv/conv.hpp"

using namespace qv;
using ad::Tensor;

namespace {

std::vector<double> random_values(std::int64_t count, RandomSource& rng, double scale = 1.0) {
  std::vector<double> out(count);
  for (auto& v : out) v = scale * rng.gaussian();
  return out;
}

Tensor<double> random_param(ad::Shape shape, RandomSource& rng, double scale = 1.0) {
  return Tensor<double>::param(shape, random_values(ad::numel(shape), rng, scale));
}

Tensor<double> random_const(ad::Shape shape, RandomSource& rng, double scale = 1.0) {
  return Tensor<double>(shape, random_values(ad::numel(shape), rng, scale));
}

/// Central-difference check of every parameter coordinate against the tape
/// gradients. Returns the worst relative error, |fd - g| / max(1, |fd|, |g|).
double fd_check(const std::function<Tensor<double>()>& forward,
                const std::vector<Tensor<double>*>& params, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  ad::backward(forward());
  std::vector<std::vector<double>> grads;
  for (auto* p : params) grads.push_back(p->grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi]->mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = forward().item();
      data[i] = orig - h;
      const double down = forward().item();
      data[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double g = grads[pi][i];
      const double rel = std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double inner(const Tensor<double>& x, const Tensor<double>& y) {
  double sum = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) sum += x.data()[i] * y.data()[i];
  return sum;
}

}  // namespace

TEST_CASE("conv2d forward hand cases") {
  auto ones_in = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto ones_k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto out = ad::conv2d(ones_in, ones_k, nullptr, 1, 0);
  CHECK(out.shape() == ad::Shape{1, 1, 1, 1});
  CHECK(out.data()[0] == 9.0);

  RandomSource rng(1);
  auto x = random_const({2, 3, 5, 5}, rng);
  auto identity = Tensor<double>::zeros({3, 3, 1, 1});
  {
    auto v = identity.data();
    v[0 * 3 + 0] = 1.0;
    v[1 * 3 + 1] = 1.0;
    v[2 * 3 + 2] = 1.0;
    identity = Tensor<double>({3, 3, 1, 1}, std::move(v));
  }
  auto same = ad::conv2d(x, identity, nullptr, 1, 0);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

  // (5 + 0 - 2) not divisible by 2
  auto k2 = Tensor<double>::full({1, 3, 2, 2}, 1.0);
  CHECK_THROWS_AS(ad::conv2d(x, k2, nullptr, 2, 0), InvalidGeometry);
  auto bad_channels = Tensor<double>::full({1, 4, 2, 2}, 1.0);
  CHECK_THROWS_AS(ad::conv2d(x, bad_channels, nullptr, 1, 0), ShapeMismatch);
}

TEST_CASE("conv2d gradients match finite differences") {
  RandomSource rng(2);
  auto input = random_param({2, 3, 8, 8}, rng);
  auto kernel = random_param({4, 3, 3, 3}, rng);
  auto bias = random_param({4}, rng);
  auto probe = random_const({2, 4, 6, 6}, rng);  // distinct weights per output element
  auto forward = [&] { return ad::sum_all(ad::mul(ad::conv2d(input, kernel, &bias, 1, 0), probe)); };
  CHECK(fd_check(forward, {&input, &kernel, &bias}) < 1e-4);

  auto kernel4 = random_param({4, 3, 4, 4}, rng);
  auto probe2 = random_const({2, 4, 4, 4}, rng);
  auto strided = [&] {
    return ad::sum_all(ad::mul(ad::conv2d(input, kernel4, &bias, 2, 1), probe2));
  };
  CHECK(fd_check(strided, {&input, &kernel4, &bias}) < 1e-4);
}

TEST_CASE("transposed conv2d hand case and gradients") {
  auto x = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto k = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto out = ad::transposed_conv2d(x, k, nullptr, 2, 0);
  CHECK(out.shape() == ad::Shape{1, 1, 4, 4});
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 1.0);

  RandomSource rng(3);
  auto input = random_param({2, 3, 4, 4}, rng);
  auto kernel = random_param({3, 5, 3, 3}, rng);
  auto bias = random_param({5}, rng);
  auto probe = random_const({2, 5, 9, 9}, rng);
  auto forward = [&] {
    return ad::sum_all(ad::mul(ad::transposed_conv2d(input, kernel, &bias, 2, 0), probe));
  };
  CHECK(fd_check(forward, {&input, &kernel, &bias}) < 1e-4);
}

TEST_CASE("conv2d and transposed_conv2d are adjoint across the geometry grid") {
  RandomSource rng(4);
  int configurations = 0;
  for (std::int64_t k : {1, 2, 3}) {
    for (std::int64_t stride : {1, 2}) {
      for (std::int64_t pad : {0, 1}) {
        const std::int64_t h = 8;
        if (h + 2 * pad < k || (h + 2 * pad - k) % stride != 0) continue;
        const std::int64_t oh = (h + 2 * pad - k) / stride + 1;
        if (oh < 1) continue;
        auto x = random_const({2, 3, h, h}, rng);
        auto kern = random_const({4, 3, k, k}, rng);
        auto y = random_const({2, 4, oh, oh}, rng);
        auto cx = ad::conv2d(x, kern, nullptr, stride, pad);
        auto ty = ad::transposed_conv2d(y, kern, nullptr, stride, pad);
        CHECK(std::abs(inner(cx, y) - inner(x, ty)) < 1e-8 * std::max(1.0, std::abs(inner(cx, y))));
        ++configurations;
      }
    }
  }
  CHECK(configurations >= 8);
}

TEST_CASE("dense forward and gradients") {
  auto w = Tensor<double>({2, 2}, {1, 2, 3, 4});
  auto x = Tensor<double>({1, 2}, {1, 1});
  auto out = ad::dense(x, w, nullptr);
  CHECK(out.data()[0] == 3.0);
  CHECK(out.data()[1] == 7.0);

  RandomSource rng(5);
  auto eye = Tensor<double>::zeros({3, 3});
  {
    auto v = eye.data();
    for (int i = 0; i < 3; ++i) v[i * 3 + i] = 1.0;
    eye = Tensor<double>({3, 3}, std::move(v));
  }
  auto probe_in = random_const({4, 3}, rng);
  auto id_out = ad::dense(probe_in, eye, nullptr);
  for (std::int64_t i = 0; i < probe_in.size(); ++i) CHECK(id_out.data()[i] == probe_in.data()[i]);

  auto input = random_param({4, 6}, rng);
  auto weight = random_param({5, 6}, rng);
  auto bias = random_param({5}, rng);
  auto probe = random_const({4, 5}, rng);
  auto forward = [&] { return ad::sum_all(ad::mul(ad::dense(input, weight, &bias), probe)); };
  CHECK(fd_check(forward, {&input, &weight, &bias}) < 1e-4);
}

TEST_CASE("leaky relu") {
  auto x = Tensor<double>({3}, {2.0, -2.0, 0.5});
  auto y = ad::leaky_relu(x, 0.2);
  CHECK(y.data()[0] == 2.0);
  CHECK(y.data()[1] == -0.4);
  CHECK(y.data()[2] == 0.5);
  CHECK_THROWS_AS(ad::leaky_relu(x, 1.0), Error);
  CHECK_THROWS_AS(ad::leaky_relu(x, -0.1), Error);

  auto input = Tensor<double>::param({2}, {2.0, -2.0});
  auto forward = [&] { return ad::sum_all(ad::leaky_relu(input, 0.2)); };
  CHECK(fd_check(forward, {&input}, 1e-6) < 1e-6);
  input.zero_grad();
  ad::backward(forward());
  CHECK(input.grad()[0] == 1.0);
  CHECK(input.grad()[1] == doctest::Approx(0.2));
}

TEST_CASE("sigmoid") {
  auto x = Tensor<double>({3}, {0.0, 1000.0, -1000.0});
  auto y = ad::sigmoid(x);
  CHECK(y.data()[0] == 0.5);
  CHECK(y.data()[1] <= 1.0);
  CHECK(y.data()[1] > 0.999999);
  CHECK(y.data()[2] >= 0.0);
  CHECK(y.data()[2] < 1e-6);
  CHECK(std::isfinite(y.data()[1]));
  CHECK(std::isfinite(y.data()[2]));

  RandomSource rng(6);
  auto input = random_param({10}, rng);
  auto probe = random_const({10}, rng);
  auto forward = [&] { return ad::sum_all(ad::mul(ad::sigmoid(input), probe)); };
  CHECK(fd_check(forward, {&input}) < 1e-5);
}

TEST_CASE("bce loss") {
  auto target = Tensor<double>({4}, {0.0, 1.0, 1.0, 0.0});
  auto perfect = ad::bce_loss(target, target);  // clamping keeps the logs finite
  CHECK(perfect.item() <= 1e-6);

  auto half = Tensor<double>::full({4}, 0.5);
  CHECK(ad::bce_loss(half, target).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto bad = Tensor<double>::full({3}, 0.5);
  CHECK_THROWS_AS(ad::bce_loss(bad, target), ShapeMismatch);

  RandomSource rng(7);
  std::vector<double> safe(6), targets(6);
  for (auto& v : safe) v = 0.15 + 0.7 * rng.uniform();
  for (auto& v : targets) v = rng.uniform();
  auto pred = Tensor<double>::param({6}, safe);
  auto t = Tensor<double>({6}, targets);
  auto forward = [&] { return ad::bce_loss(pred, t); };
  CHECK(fd_check(forward, {&pred}) < 1e-4);
}

TEST_CASE("backward contract") {
  auto x = Tensor<double>::param({1}, {3.0});
  auto y = Tensor<double>::param({1}, {4.0});
  auto loss = ad::mul(x, y);
  ad::backward(loss);
  CHECK(x.grad()[0] == 4.0);
  CHECK(y.grad()[0] == 3.0);
  ad::backward(loss);  // accumulates
  CHECK(x.grad()[0] == 8.0);
  CHECK(y.grad()[0] == 6.0);

  auto vec = Tensor<double>::param({3}, {1, 2, 3});
  CHECK_THROWS_AS(ad::backward(vec), NotScalar);
}

TEST_CASE("gradients are deterministic and inputs are not mutated") {
  RandomSource rng(8);
  auto input = random_param({2, 4, 6, 6}, rng);
  auto kernel = random_param({4, 4, 3, 3}, rng);
  const std::vector<double> input_before = input.data();

  auto run = [&] {
    input.zero_grad();
    kernel.zero_grad();
    auto out = ad::leaky_relu(ad::conv2d(input, kernel, nullptr, 1, 1), 0.2);
    ad::backward(ad::sum_all(ad::mul(out, out)));
    return std::make_pair(input.grad(), kernel.grad());
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);    // bitwise
  CHECK(first.second == second.second);  // bitwise
  CHECK(input.data() == input_before);
}

TEST_CASE("shape ops compose and differentiate") {
  RandomSource rng(9);
  auto a = random_param({2, 8}, rng);
  auto b = random_param({2, 4}, rng);
  auto bias = random_param({12}, rng);
  auto probe = random_const({2, 24}, rng);

  auto forward = [&] {
    auto widened = ad::tile4(ad::exp(ad::scale(ad::clamp(b, -2.0, 2.0), 0.25)));  // [2,16]
    auto joined = ad::concat_channels<double>({a, widened});                      // [2,24]
    auto sliced = ad::slice_channels(joined, 6, 18);                              // [2,12]
    auto biased = ad::add_channel_bias(sliced, bias);
    auto shaped = ad::reshape(ad::sigmoid(biased), {2, 12, 1, 1});
    auto back = ad::reshape(shaped, {2, 12});
    auto all = ad::concat_channels<double>({back, ad::neg(ad::slice_channels(joined, 0, 12))});
    return ad::sum_all(ad::mul(ad::add_scalar(all, 0.1), probe));
  };
  CHECK(fd_check(forward, {&a, &b, &bias}) < 1e-5);

  // slice/concat round trip is the identity
  auto x = random_const({3, 9, 2}, rng);
  auto parts = std::vector<Tensor<double>>{ad::slice_channels(x, 0, 3), ad::slice_channels(x, 3, 7),
                                           ad::slice_channels(x, 7, 9)};
  auto rebuilt = ad::concat_channels(parts);
  CHECK(rebuilt.data() == x.data());
}

TEST_CASE("add sub mul scale fd") {
  RandomSource rng(10);
  auto x = random_param({5}, rng);
  auto y = random_param({5}, rng);
  auto probe = random_const({5}, rng);
  auto forward = [&] {
    auto mixed = ad::add(ad::mul(x, y), ad::scale(ad::sub(x, y), 0.7));
    return ad::sum_all(ad::mul(mixed, probe));
  };
  CHECK(fd_check(forward, {&x, &y}) < 1e-6);
}

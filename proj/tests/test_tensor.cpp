#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bseg/errors.hpp"
#include "bseg/reference.hpp"
#include "bseg/tensor.hpp"
#include "helpers.hpp"

using namespace bseg;
using testing::max_abs_diff;
using testing::random_map;
using testing::random_tensor;

TEST_SUITE("tensor") {

TEST_CASE("linear on a single scalar is one multiply-add") {
  Tensor2D x(1, 1, std::vector<double>{3.0});
  Tensor2D w(1, 1, std::vector<double>{2.0});
  std::vector<double> b{0.5};
  CHECK(linear(x, w, b)(0, 0) == 6.5);
}

TEST_CASE("linear rejects mismatched inner dims") {
  Tensor2D x(2, 3), w(4, 2);
  std::vector<double> b(2, 0.0);
  CHECK_THROWS_AS(linear(x, w, b), DimensionError);
}

TEST_CASE("linear matches the loop oracle on 100 shapes") {
  Rng rng(11, "linear-shapes");
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(16), in = 1 + rng.below(16), out = 1 + rng.below(16);
    Tensor2D x = random_tensor(n, in, rng), w = random_tensor(in, out, rng);
    std::vector<double> b(out);
    for (double& v : b) v = rng.normal();
    CHECK(max_abs_diff(linear(x, w, b), reference::matmul_bias(x, w, b)) < 1e-12);
  }
}

TEST_CASE("softmax examples") {
  auto p = softmax(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  for (double c : {-700.0, 0.0, 3.5, 900.0}) {
    auto q = softmax(std::vector<double>{c, c, c, c});
    for (double v : q) CHECK(std::fabs(v - 0.25) < 1e-15);
  }

  auto r = softmax(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
  CHECK(std::fabs(r[0] - 1.0 / 6.0) < 1e-15);
  CHECK(std::fabs(r[1] - 2.0 / 6.0) < 1e-15);
  CHECK(std::fabs(r[2] - 3.0 / 6.0) < 1e-15);

  CHECK_THROWS_AS(softmax(std::vector<double>{}), DimensionError);
}

TEST_CASE("softmax sums to one, is shift invariant and permutation equivariant") {
  Rng rng(3, "softmax");
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(1 + rng.below(12));
    for (double& v : x) v = 20.0 * rng.normal();
    auto p = softmax(x);
    CHECK(std::fabs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    for (double v : p) CHECK(v >= 0.0);

    std::vector<double> shifted = x;
    for (double& v : shifted) v += 17.25;
    auto ps = softmax(shifted);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(p[i] - ps[i]) < 1e-12);

    std::vector<double> rev(x.rbegin(), x.rend());
    auto pr = softmax(rev);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(p[i] - pr[x.size() - 1 - i]) < 1e-15);
  }
}

TEST_CASE("group_norm of a constant token is zero") {
  Tensor2D x(1, 8, 4.25);
  auto affine = NormAffine::identity(8);
  Tensor2D y = group_norm(x, 2, 1e-6, affine);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("group_norm leaves a standardized pair alone") {
  Tensor2D x(1, 2, std::vector<double>{-1.0, 1.0});
  Tensor2D y = group_norm(x, 1, 1e-14, NormAffine::identity(2));
  CHECK(std::fabs(y(0, 0) + 1.0) < 1e-12);
  CHECK(std::fabs(y(0, 1) - 1.0) < 1e-12);
}

TEST_CASE("group_norm matches the loop oracle and standardizes each group") {
  Rng rng(5, "gn");
  Tensor2D x = random_tensor(4, 8, rng, 3.0);
  std::vector<double> gain(8), shift(8);
  for (double& v : gain) v = rng.uniform(0.5, 2.0);
  for (double& v : shift) v = rng.normal();
  CHECK(max_abs_diff(group_norm(x, 2, 1e-6, gain, shift),
                     reference::group_norm(x, 2, 1e-6, gain, shift)) < 1e-10);

  Tensor2D y = group_norm(x, 2, 1e-6, NormAffine::identity(8));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t g = 0; g < 2; ++g) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 4 * g; c < 4 * g + 4; ++c) mean += y(r, c) / 4.0;
      for (std::size_t c = 4 * g; c < 4 * g + 4; ++c) var += (y(r, c) - mean) * (y(r, c) - mean) / 4.0;
      CHECK(std::fabs(mean) < 1e-6);
      CHECK(std::fabs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("group_norm ignores a per-group constant shift") {
  Rng rng(6, "gn-shift");
  Tensor2D x = random_tensor(3, 8, rng);
  Tensor2D moved = x;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) moved(r, c) += c < 4 ? 5.0 : -2.5;
  auto id = NormAffine::identity(8);
  CHECK(max_abs_diff(group_norm(x, 2, 1e-6, id), group_norm(moved, 2, 1e-6, id)) < 1e-12);
}

TEST_CASE("group_norm rejects a group count that does not divide the width") {
  Tensor2D x(2, 6, 1.0);
  CHECK_THROWS_AS(group_norm(x, 4, 1e-6, NormAffine::identity(6)), ConfigError);
}

TEST_CASE("default group count") {
  CHECK(default_group_count(256) == 32);
  CHECK(default_group_count(128) == 32);
  CHECK(default_group_count(64) == 16);
  CHECK(default_group_count(8) == 2);
  CHECK(default_group_count(6) == 1);
  CHECK(default_group_count(3) == 1);
  CHECK(default_group_count(20) == 5);
}

TEST_CASE("bilinear sample examples") {
  FeatureMap one(1, 1, 2, 8);
  one.at(0, 0, 0) = 1.5;
  one.at(0, 0, 1) = -4.0;
  auto v = bilinear_sample(one, 0.5, 0.5);
  CHECK(v[0] == 1.5);
  CHECK(v[1] == -4.0);

  FeatureMap quad(2, 2, 1, 8);
  quad.at(0, 0, 0) = 1.0;
  quad.at(0, 1, 0) = 2.0;
  quad.at(1, 0, 0) = 4.0;
  quad.at(1, 1, 0) = 8.0;
  CHECK(bilinear_sample(quad, 0.5, 0.5)[0] == doctest::Approx(15.0 / 4.0));
}

TEST_CASE("bilinear sample matches the loop oracle, including outside the map") {
  Rng rng(8, "bilinear");
  FeatureMap m = random_map(5, 7, 3, rng);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const double x = rng.uniform(-0.3, 1.3), y = rng.uniform(-0.3, 1.3);
    auto a = bilinear_sample(m, x, y);
    auto b = reference::bilinear_sample(m, x, y);
    for (std::size_t c = 0; c < 3; ++c) worst = std::fmax(worst, std::fabs(a[c] - b[c]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("bilinear sample is linear in the map") {
  Rng rng(9, "bilinear-linear");
  FeatureMap a = random_map(4, 6, 2, rng), b = random_map(4, 6, 2, rng);
  FeatureMap mix(4, 6, 2, 8);
  for (std::size_t i = 0; i < mix.data().size(); ++i)
    mix.data()[i] = 2.0 * a.data()[i] - 0.75 * b.data()[i];
  for (int t = 0; t < 20; ++t) {
    const double x = rng.uniform(-0.2, 1.2), y = rng.uniform(-0.2, 1.2);
    auto sa = bilinear_sample(a, x, y), sb = bilinear_sample(b, x, y), sm = bilinear_sample(mix, x, y);
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::fabs(sm[c] - (2.0 * sa[c] - 0.75 * sb[c])) < 1e-12);
  }
}

TEST_CASE("samples far outside the map are zero") {
  FeatureMap m(3, 3, 1, 8, 1.0);
  CHECK(bilinear_sample(m, 5.0, 0.5)[0] == 0.0);
  CHECK(bilinear_sample(m, 0.5, -2.0)[0] == 0.0);
}

TEST_CASE("resize keeps a constant field constant") {
  FeatureMap m(3, 5, 2, 16, 0.0);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      m.at(y, x, 0) = 2.5;
      m.at(y, x, 1) = -1.0;
    }
  FeatureMap r = resize_bilinear(m, 12, 20, 4);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      CHECK(std::fabs(r.at(y, x, 0) - 2.5) < 1e-14);
      CHECK(std::fabs(r.at(y, x, 1) + 1.0) < 1e-14);
    }
}

TEST_CASE("finite differences") {
  auto sq = [](std::span<const double> x) { return x[0] * x[0]; };
  std::vector<double> x{3.0};
  CHECK(std::fabs(finite_diff_grad(sq, x, 1e-5)[0] - 6.0) < 1e-6);

  auto flat = [](std::span<const double>) { return 7.0; };
  std::vector<double> y{1.0, -2.0, 0.5};
  for (double g : finite_diff_grad(flat, y, 1e-4)) CHECK(g == 0.0);

  auto bad = [](std::span<const double> z) { return z[0] > 0.0 ? NAN : 0.0; };
  std::vector<double> z{0.0};
  CHECK_THROWS_AS(finite_diff_grad(bad, z, 1e-3), NumericError);
}

TEST_CASE("sigmoid and its inverse") {
  CHECK(sigmoid(0.0) == 0.5);
  for (double p : {0.01, 0.3, 0.5, 0.9}) CHECK(std::fabs(sigmoid(inverse_sigmoid(p)) - p) < 1e-12);
}

TEST_CASE("feature map token round trip") {
  Rng rng(10, "tokens");
  FeatureMap m = random_map(3, 4, 5, rng, 16);
  Tensor2D t = m.as_tokens();
  CHECK(t.rows() == 12);
  CHECK(t(4 + 2, 3) == m.at(1, 2, 3));
  CHECK(FeatureMap::from_tokens(t, 3, 4, 16) == m);
}

}

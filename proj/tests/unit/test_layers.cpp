#include <doctest.h>

#include "chsnet/layers.hpp"
#include "chsnet/transformer.hpp"
#include "support.hpp"

using namespace chsnet;
using testing::check_layer;
using testing::random_tensor;

namespace {

void require_clean(const testing::GradReport& r) {
  INFO(r.first_failure);
  CHECK(r.checked > 0);
  CHECK(r.failures == 0);
}

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("conv2d gradients") {
    Rng rng(1);
    Conv2d plain("c", 3, 4, 3, 1, 1, rng);
    require_clean(check_layer(plain, random_tensor({2, 3, 6, 5}, 2), Mode::train, 3));
    Conv2d strided("s", 3, 2, 3, 2, 1, rng);
    require_clean(check_layer(strided, random_tensor({2, 3, 8, 8}, 4), Mode::train, 5));
    Conv2d dilated("d", 2, 3, 3, 1, 2, rng);
    require_clean(check_layer(dilated, random_tensor({1, 2, 9, 7}, 6), Mode::train, 7));
    Conv2d pointwise("p", 4, 1, 1, 1, 1, rng);
    require_clean(check_layer(pointwise, random_tensor({2, 4, 3, 3}, 8), Mode::train, 9));
  }

  TEST_CASE("conv2d keeps the spatial size at stride 1") {
    Rng rng(1);
    Conv2d conv("c", 2, 3, 3, 1, 2, rng);
    const Tensor y = conv.forward(Tensor({1, 2, 7, 9}), Mode::eval);
    CHECK(y.shape() == std::vector<int>{1, 3, 7, 9});
  }

  TEST_CASE("batch norm gradients in both modes") {
    BatchNorm2d bn("bn", 3);
    for (double& v : bn.gamma().value.values()) v = 1.5;
    for (double& v : bn.beta().value.values()) v = -0.2;
    require_clean(check_layer(bn, random_tensor({3, 3, 4, 4}, 10), Mode::train, 11));
    bn.running_mean().fill(0.3);
    bn.running_var().fill(2.0);
    require_clean(check_layer(bn, random_tensor({2, 3, 4, 4}, 12), Mode::eval, 13));
  }

  TEST_CASE("batch norm train mode normalizes and updates running statistics") {
    BatchNorm2d bn("bn", 2);
    const Tensor x = random_tensor({4, 2, 3, 3}, 14, 2.0, 6.0);
    const Tensor y = bn.forward(x, Mode::train);
    for (int c = 0; c < 2; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < 4; ++n)
        for (int h = 0; h < 3; ++h)
          for (int w = 0; w < 3; ++w) {
            s += y.at(n, c, h, w);
            s2 += y.at(n, c, h, w) * y.at(n, c, h, w);
          }
      CHECK(s / 36 == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(s2 / 36 == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(bn.running_mean()[static_cast<std::size_t>(c)] > 0.1);
    }
  }

  TEST_CASE("relu, max pool and upsample gradients") {
    Relu relu;
    require_clean(check_layer(relu, random_tensor({2, 3, 4, 4}, 15), Mode::train, 16));
    MaxPool2d pool;
    require_clean(check_layer(pool, random_tensor({2, 2, 6, 4}, 17), Mode::train, 18));
    Upsample up(2);
    require_clean(check_layer(up, random_tensor({1, 2, 3, 3}, 19), Mode::train, 20));
  }

  TEST_CASE("max pool rejects odd sizes") {
    MaxPool2d pool;
    CHECK_THROWS(pool.forward(Tensor({1, 1, 5, 4}), Mode::eval));
  }

  TEST_CASE("upsample repeats each value factor x factor times") {
    Upsample up(3);
    Tensor x({1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)] = i + 1;
    const Tensor y = up.forward(x, Mode::eval);
    REQUIRE(y.shape() == std::vector<int>{1, 1, 6, 6});
    CHECK(y.at(0, 0, 0, 0) == 1.0);
    CHECK(y.at(0, 0, 2, 2) == 1.0);
    CHECK(y.at(0, 0, 0, 3) == 2.0);
    CHECK(y.at(0, 0, 5, 5) == 4.0);
  }

  TEST_CASE("linear, layer norm and attention gradients") {
    Rng rng(21);
    Linear linear("lin", 6, 5, rng);
    require_clean(check_layer(linear, random_tensor({2, 3, 6}, 22), Mode::train, 23));
    LayerNorm norm("ln", 8);
    require_clean(check_layer(norm, random_tensor({2, 5, 8}, 24), Mode::train, 25));
    MultiHeadSelfAttention attn("attn", 8, 2, rng);
    require_clean(check_layer(attn, random_tensor({2, 5, 8}, 26), Mode::train, 27));
    TransformerLayer layer("tl", 8, 4, 2, rng);
    require_clean(check_layer(layer, random_tensor({2, 6, 8}, 28), Mode::train, 29));
  }

  TEST_CASE("attention is equivariant to token order without positions") {
    Rng rng(30);
    MultiHeadSelfAttention attn("attn", 8, 2, rng);
    const Tensor x = random_tensor({1, 4, 8}, 31);
    Tensor swapped = x;
    for (int d = 0; d < 8; ++d) std::swap(swapped[static_cast<std::size_t>(d)], swapped[static_cast<std::size_t>(3 * 8 + d)]);
    const Tensor y = attn.forward(x, Mode::eval);
    const Tensor ys = attn.forward(swapped, Mode::eval);
    for (int d = 0; d < 8; ++d) {
      CHECK(ys[static_cast<std::size_t>(d)] == doctest::Approx(y[static_cast<std::size_t>(3 * 8 + d)]).epsilon(1e-12));
      CHECK(ys[static_cast<std::size_t>(8 + d)] == doctest::Approx(y[static_cast<std::size_t>(8 + d)]).epsilon(1e-12));
    }
  }

  TEST_CASE("token layout round-trips") {
    const Tensor f = random_tensor({2, 4, 3, 5}, 32);
    const Tensor t = to_tokens(f);
    CHECK(t.shape() == std::vector<int>{2, 15, 4});
    CHECK(t[static_cast<std::size_t>((1 * 15 + 2 * 5 + 1) * 4 + 3)] == f.at(1, 3, 2, 1));
    const Tensor back = from_tokens(t, 3, 5);
    CHECK(back.storage() == f.storage());
  }

  TEST_CASE("sinusoidal table encodes row then column") {
    const Tensor table = sinusoidal_position_table(3, 4, 8);
    CHECK(table.shape() == std::vector<int>{12, 8});
    // Token (y=2, x=1): channels 0..3 encode y, 4..7 encode x, frequency
    // 10000^(-2i/4) for pair i.
    const std::size_t row = 2 * 4 + 1;
    CHECK(table[row * 8 + 0] == doctest::Approx(std::sin(2.0)));
    CHECK(table[row * 8 + 1] == doctest::Approx(std::cos(2.0)));
    CHECK(table[row * 8 + 2] == doctest::Approx(std::sin(2.0 / 100.0)));
    CHECK(table[row * 8 + 4] == doctest::Approx(std::sin(1.0)));
    CHECK(table[row * 8 + 7] == doctest::Approx(std::cos(1.0 / 100.0)));
    CHECK_THROWS(sinusoidal_position_table(2, 2, 6));
  }
}

#include <doctest.h>

#include <limits>

#include "sit/tensor.hpp"

using namespace sit;

TEST_CASE("tensor construction and accessors") {
  Tensor t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  for (int64_t i = 0; i < 6; ++i) CHECK(t.data()[i] == 0.0f);

  Tensor u({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(u.at({0, 1}) == 2.0f);
  CHECK(u.at({1, 0}) == 3.0f);

  Tensor s = Tensor::scalar(5.0f);
  CHECK(s.numel() == 1);
  CHECK(s.item() == 5.0f);

  Tensor f = Tensor::full({3}, 2.5f);
  CHECK(f.data()[2] == 2.5f);
}

TEST_CASE("tensor validation errors") {
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({-1}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), std::invalid_argument);
  Tensor t({2, 2});
  CHECK_THROWS_AS(t.item(), std::invalid_argument);
  CHECK_THROWS_AS(t.at({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(t.at({0}), std::invalid_argument);
}

TEST_CASE("tensor shares storage through copies") {
  Tensor a({2});
  Tensor b = a;
  b.data()[0] = 7.0f;
  CHECK(a.data()[0] == 7.0f);
}

TEST_CASE("all_finite flags nan and inf") {
  Tensor t({2}, {1.0f, 2.0f});
  CHECK(t.all_finite());
  t.data()[1] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());
  t.data()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("cast between precisions") {
  Tensor a({2}, {1.5f, -2.25f});
  Tensor64 b = cast<double>(a);
  CHECK(b.data()[0] == 1.5);
  CHECK(b.data()[1] == -2.25);
  Tensor c = cast<float>(b);
  CHECK(c.data()[1] == -2.25f);
}

TEST_CASE("grad buffers") {
  Tensor t({3});
  CHECK_FALSE(t.has_grad());
  t.zero_grad();
  CHECK(t.has_grad());
  CHECK(t.grad().size() == 3);
  t.grad()[0] = 1.0f;
  t.zero_grad();
  CHECK(t.grad()[0] == 0.0f);
  t.clear_grad();
  CHECK_FALSE(t.has_grad());
}

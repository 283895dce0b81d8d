// Per-operation oracles and finite-difference gradient checks for the
// reverse-mode substrate, all in double precision.

#include <gtest/gtest.h>

#include <cmath>

#include "dparse/dparse.hpp"
#include "test_util.hpp"

using namespace dparse;
using nn::NodePtr;
using nn::Tensor;
using testutil::expect_grads_match_fd;
using testutil::random_tensor;

namespace {

NodePtr<double> leaf(const Tensor<double>& t) { return nn::leaf_param(t); }

// scalar probe: sum(w ⊙ f(x)) gives every output element a distinct weight
NodePtr<double> weighted_sum(NodePtr<double> y, std::uint64_t seed = 3) {
  Rng rng(seed);
  auto w = Tensor<double>::zeros(y->value.shape);
  for (double& x : w.data) x = rng.symmetric(1.0);
  return nn::reduce_sum(nn::mul(std::move(y), nn::constant(std::move(w))));
}

}  // namespace

TEST(Autodiff, ElementwiseValues) {
  Rng rng(1);
  auto x = leaf(random_tensor({2, 3}, rng));
  EXPECT_DOUBLE_EQ(nn::sigmoid(leaf(Tensor<double>::zeros({1, 1})))->value.data[0], 0.5);
  EXPECT_DOUBLE_EQ(nn::tanh_op(leaf(Tensor<double>::zeros({1, 1})))->value.data[0], 0.0);
  EXPECT_DOUBLE_EQ(nn::gelu(leaf(Tensor<double>::zeros({1, 1})))->value.data[0], 0.0);
  // tanh-approximation GELU at x=1
  const double ref = 0.5 * (1.0 + std::tanh(0.7978845608028654 * (1.0 + 0.044715)));
  auto one = Tensor<double>::full({1, 1}, 1.0);
  EXPECT_NEAR(nn::gelu(leaf(one))->value.data[0], ref, 1e-12);

  auto y = nn::affine_elem(x, 2.0, -1.0);
  for (std::size_t i = 0; i < y->value.data.size(); ++i)
    EXPECT_DOUBLE_EQ(y->value.data[i], 2.0 * x->value.data[i] - 1.0);
}

TEST(Autodiff, ElementwiseGradients) {
  Rng rng(2);
  auto x = leaf(random_tensor({3, 4}, rng));
  auto b = leaf(random_tensor({3, 4}, rng));
  auto row = leaf(random_tensor({1, 4}, rng));
  expect_grads_match_fd({{"x", x}, {"b", b}}, [&] { return weighted_sum(nn::add(x, b)); });
  expect_grads_match_fd({{"x", x}, {"row", row}}, [&] { return weighted_sum(nn::add_row(x, row)); });
  expect_grads_match_fd({{"x", x}, {"b", b}}, [&] { return weighted_sum(nn::mul(x, b)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::affine_elem(x, -1.7, 0.3)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::sigmoid(x)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::tanh_op(x)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::gelu(x)); });
}

TEST(Autodiff, MatmulAgainstHandOracle) {
  Rng rng(3);
  auto a = leaf(random_tensor({2, 3}, rng));
  auto w = leaf(random_tensor({3, 4}, rng));
  auto c = nn::matmul(a, w);
  ASSERT_EQ(c->value.rows(), 2);
  ASSERT_EQ(c->value.cols(), 4);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) {
      double want = 0;
      for (int k = 0; k < 3; ++k) want += a->value.at(i, k) * w->value.at(k, j);
      EXPECT_NEAR(c->value.at(i, j), want, 1e-6);
    }
  }
  expect_grads_match_fd({{"a", a}, {"w", w}}, [&] { return weighted_sum(nn::matmul(a, w)); });
}

TEST(Autodiff, MatmulNtMatchesExplicitTranspose) {
  Rng rng(4);
  auto a = leaf(random_tensor({3, 5}, rng));
  auto b = leaf(random_tensor({4, 5}, rng));  // matmul_nt: C = A·Bᵀ
  auto direct = nn::matmul_nt(a, b);
  auto via_t = nn::matmul(a, nn::transpose(b));
  ASSERT_EQ(direct->value.shape, via_t->value.shape);
  for (std::size_t i = 0; i < direct->value.data.size(); ++i)
    EXPECT_NEAR(direct->value.data[i], via_t->value.data[i], 1e-12);
  expect_grads_match_fd({{"a", a}, {"b", b}}, [&] { return weighted_sum(nn::matmul_nt(a, b)); });
  expect_grads_match_fd({{"a", a}, {"b", b}},
                        [&] { return weighted_sum(nn::matmul(a, nn::transpose(b))); });
}

TEST(Autodiff, ShapeOpsGradients) {
  Rng rng(5);
  auto x = leaf(random_tensor({4, 6}, rng));
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::transpose(x)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::slice_rows(x, 1, 3)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::slice_row(x, 2)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::slice_cols(x, 2, 5)); });
  auto y = leaf(random_tensor({4, 2}, rng));
  expect_grads_match_fd({{"x", x}, {"y", y}},
                        [&] { return weighted_sum(nn::concat_cols<double>({x, y})); });
  auto z = leaf(random_tensor({3, 6}, rng));
  expect_grads_match_fd({{"x", x}, {"z", z}},
                        [&] { return weighted_sum(nn::concat_rows<double>({x, z})); });
  // reuse of one row in gather accumulates both contributions
  expect_grads_match_fd({{"x", x}},
                        [&] { return weighted_sum(nn::gather_rows(x, {2, 0, 2})); });
}

TEST(Autodiff, SoftmaxRowsSumToOneAndMaskZeroes) {
  Rng rng(6);
  auto x = leaf(random_tensor({3, 5}, rng, 2.0));
  auto p = nn::softmax_rows(x);
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) {
      EXPECT_GT(p->value.at(i, j), 0.0);
      s += p->value.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }

  auto mask = Tensor<double>::full({3, 5}, 1.0);
  mask.at(0, 3) = 0.0;
  mask.at(0, 4) = 0.0;
  mask.at(2, 0) = 0.0;
  auto pm = nn::softmax_rows(x, &mask);
  EXPECT_EQ(pm->value.at(0, 3), 0.0);  // exact zero, not merely small
  EXPECT_EQ(pm->value.at(0, 4), 0.0);
  EXPECT_EQ(pm->value.at(2, 0), 0.0);
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += pm->value.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::softmax_rows(x)); });
  expect_grads_match_fd({{"x", x}}, [&] { return weighted_sum(nn::softmax_rows(x, &mask)); });

  auto dead = Tensor<double>::full({1, 5}, 0.0);
  auto x1 = leaf(random_tensor({1, 5}, rng));
  EXPECT_THROW(nn::softmax_rows(x1, &dead), Error);
}

TEST(Autodiff, SoftmaxStableAtLargeLogits) {
  auto t = Tensor<double>::zeros({1, 2});
  t.data = {1000.0, 0.0};
  auto p = nn::softmax_rows(leaf(t));
  EXPECT_TRUE(p->value.all_finite());
  EXPECT_NEAR(p->value.data[0], 1.0, 1e-12);
  EXPECT_NEAR(p->value.data[1], 0.0, 1e-12);
}

TEST(Autodiff, LayerNormNormalizesAndDifferentiates) {
  Rng rng(7);
  auto x = leaf(random_tensor({3, 8}, rng, 2.0));
  auto gain = leaf(Tensor<double>::full({1, 8}, 1.0));
  auto bias = leaf(Tensor<double>::zeros({1, 8}));
  auto y = nn::layer_norm(x, gain, bias);
  for (int i = 0; i < 3; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 8; ++j) mean += y->value.at(i, j);
    mean /= 8;
    for (int j = 0; j < 8; ++j) var += (y->value.at(i, j) - mean) * (y->value.at(i, j) - mean);
    var /= 8;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-4);  // eps shifts variance slightly below 1
  }
  expect_grads_match_fd({{"x", x}, {"gain", gain}, {"bias", bias}},
                        [&] { return weighted_sum(nn::layer_norm(x, gain, bias)); });
}

TEST(Autodiff, CrossEntropyClosedForms) {
  auto t = Tensor<double>::zeros({1, 3});
  EXPECT_NEAR(nn::cross_entropy(leaf(t), 1)->value.data[0], std::log(3.0), 1e-12);

  auto t2 = Tensor<double>::zeros({1, 2});
  t2.data = {std::log(2.0), 0.0};
  EXPECT_NEAR(nn::cross_entropy(leaf(t2), 0)->value.data[0], std::log(1.5), 1e-12);

  auto t1 = Tensor<double>::zeros({1, 1});
  EXPECT_NEAR(nn::cross_entropy(leaf(t1), 0)->value.data[0], 0.0, 1e-12);

  Rng rng(8);
  auto x = leaf(random_tensor({1, 7}, rng, 2.0));
  expect_grads_match_fd({{"x", x}}, [&] { return nn::cross_entropy(x, 4); });
}

TEST(Autodiff, DropoutInvertedScalingAndGradient) {
  Rng rng(9);
  auto x = leaf(random_tensor({6, 6}, rng));
  Rng mask_rng(42);
  auto y = nn::dropout_mask(x, 0.3, mask_rng);
  int zeros = 0;
  for (std::size_t i = 0; i < y->value.data.size(); ++i) {
    const double r = y->value.data[i] / x->value.data[i];
    if (y->value.data[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(r, 1.0 / 0.7, 1e-9);  // inverted dropout rescales survivors
    }
  }
  EXPECT_GT(zeros, 0);
  EXPECT_LT(zeros, 36);

  expect_grads_match_fd({{"x", x}}, [&] {
    Rng r(42);  // identical mask on every rebuild
    return weighted_sum(nn::dropout_mask(x, 0.3, r));
  });
}

TEST(Autodiff, DiamondGraphAccumulatesBothPaths) {
  Rng rng(10);
  auto x = leaf(random_tensor({2, 2}, rng));
  // f = sum(x ⊙ x + x): df/dx = 2x + 1
  auto loss = nn::reduce_sum(nn::add(nn::mul(x, x), x));
  nn::backward(loss);
  for (std::size_t i = 0; i < x->value.data.size(); ++i)
    EXPECT_NEAR(x->grad.data[i], 2.0 * x->value.data[i] + 1.0, 1e-12);
}

TEST(Autodiff, BackwardGuards) {
  auto x = leaf(Tensor<double>::full({1, 1}, 2.0));
  auto loss = nn::reduce_sum(nn::mul(x, x));
  nn::backward(loss);
  EXPECT_THROW(nn::backward(loss), Error);  // no silent double accumulation

  auto c = nn::constant(Tensor<double>::full({1, 1}, 1.0));
  auto dead = nn::reduce_sum(nn::mul(c, c));
  EXPECT_THROW(nn::backward(dead), Error);  // loss without parameters

  auto matrix = leaf(Tensor<double>::full({2, 2}, 1.0));
  auto wide = nn::add(matrix, matrix);
  EXPECT_THROW(nn::backward(wide), Error);  // non-scalar loss
}

TEST(Autodiff, OffPathParameterKeepsZeroGradient) {
  auto x = leaf(Tensor<double>::full({2, 2}, 1.5));
  auto unused = leaf(Tensor<double>::full({2, 2}, -0.5));
  auto loss = nn::reduce_sum(nn::mul(x, x));
  nn::backward(loss);
  for (double g : unused->grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, SumScalarsAddsTerms) {
  auto a = leaf(Tensor<double>::full({1, 1}, 1.25));
  auto b = leaf(Tensor<double>::full({1, 1}, -0.5));
  auto c = leaf(Tensor<double>::full({1, 1}, 3.0));
  auto s = nn::sum_scalars<double>({a, b, c});
  EXPECT_DOUBLE_EQ(s->value.data[0], 3.75);
  expect_grads_match_fd({{"a", a}, {"b", b}, {"c", c}},
                        [&] { return nn::sum_scalars<double>({a, b, c}); });
}

TEST(Autodiff, FiniteOnLargeInputs) {
  Rng rng(11);
  auto x = leaf(random_tensor({4, 4}, rng, 1000.0));
  EXPECT_TRUE(nn::gelu(x)->value.all_finite());
  EXPECT_TRUE(nn::sigmoid(x)->value.all_finite());
  EXPECT_TRUE(nn::tanh_op(x)->value.all_finite());
  EXPECT_TRUE(nn::softmax_rows(x)->value.all_finite());
}

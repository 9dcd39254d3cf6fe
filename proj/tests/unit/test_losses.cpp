#include <gtest/gtest.h>

#include <cmath>

#include "fctf/error.hpp"
#include "fctf/losses.hpp"
#include "gradcheck.hpp"

using namespace fctf;
using namespace fctf::loss;

namespace {

constexpr double kExact = 1e-9;
const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

/// Codes [1,14,2] with every manipulated layer set to the given channel pair.
torch::Tensor code2(double c0, double c1) {
  auto z = torch::zeros({1, nets::kLayers, 2}, kF64);
  for (auto r : nets::LayerRouting{}.manipulated_rows()) {
    z[0][r][0] = c0;
    z[0][r][1] = c1;
  }
  return z;
}

aux::AuxNets double_aux(int classes = 4) {
  aux::AuxNets a(classes, 3);
  a.sync_trained = a.id_trained = true;
  a.to(torch::kFloat64);
  a.sync->eval();
  a.id->eval();
  return a;
}

}  // namespace

TEST(OrthoLoss, HandExamples) {
  const nets::LayerRouting r;
  EXPECT_NEAR(ortho_hadamard(code2(1, 0), code2(0, 1), r).item<double>(), 0.0, kExact);
  EXPECT_NEAR(ortho_hadamard(code2(1, 1), code2(1, 1), r).item<double>(), 1.0, kExact);
  EXPECT_NEAR(ortho_hadamard(code2(2, -1), code2(3, 4), r).item<double>(), 1.0, kExact);
}

TEST(OrthoLoss, IgnoresNonManipulatedLayers) {
  const nets::LayerRouting r;
  auto a = code2(1, 1), b = code2(1, 1);
  a[0][4][0] = 100.0;  // layer 5
  b[0][4][0] = 100.0;
  EXPECT_NEAR(ortho_hadamard(a, b, r).item<double>(), 1.0, kExact);
}

TEST(OrthoLoss, BilinearAndZero) {
  torch::manual_seed(1);
  const nets::LayerRouting r;
  const auto a = torch::randn({3, nets::kLayers, nets::kChannels}, kF64);
  const auto b = torch::randn({3, nets::kLayers, nets::kChannels}, kF64);
  for (const double alpha : {-2.5, 0.0, 0.3, 7.0}) {
    EXPECT_NEAR(ortho_hadamard(alpha * a, b, r).item<double>(), alpha * ortho_hadamard(a, b, r).item<double>(), 1e-12);
    EXPECT_NEAR(ortho_cosine(alpha * a, b, r).item<double>(),
                (alpha > 0 ? 1 : alpha < 0 ? -1 : 0) * ortho_cosine(a, b, r).item<double>(), 1e-12);
  }
  EXPECT_EQ(ortho_hadamard(a, torch::zeros_like(a), r).item<double>(), 0.0);
  EXPECT_EQ(ortho_hadamard(torch::zeros_like(a), b, r).item<double>(), 0.0);
  // Signed: the loss can go negative.
  EXPECT_LT(ortho_hadamard(code2(1, 1), code2(-1, -1), r).item<double>(), 0.0);
}

TEST(OrthoLoss, ModesAndErrors) {
  const nets::LayerRouting r;
  EXPECT_NEAR(ortho_cosine(code2(1, 1), code2(2, 2), r).item<double>(), 1.0, kExact);
  EXPECT_NEAR(ortho_cosine(code2(1, 0), code2(0, 3), r).item<double>(), 0.0, kExact);
  EXPECT_NEAR(ortho_loss(code2(2, -1), code2(3, 4), r, OrthoMode::Off).item<double>(), 1.0, kExact);
  EXPECT_THROW(ortho_hadamard(code2(1, 1), torch::zeros({1, nets::kLayers, 3}, kF64), r), InvalidArgument);
  EXPECT_THROW(ortho_hadamard(torch::zeros({2, 5}), torch::zeros({2, 5}), r), InvalidArgument);
  for (auto m : {OrthoMode::Off, OrthoMode::Cosine, OrthoMode::Hadamard}) EXPECT_EQ(ortho_mode_from_string(to_string(m)), m);
  EXPECT_THROW(ortho_mode_from_string("l2"), InvalidArgument);
}

TEST(CosineDistance, Stubbed) {
  const auto a = torch::tensor({{1.0, 0.0, 0.0}}, kF64);
  EXPECT_NEAR(cosine_distance(a, a).item<double>(), 0.0, kExact);
  EXPECT_NEAR(cosine_distance(a, -a).item<double>(), 2.0, kExact);
  EXPECT_NEAR(cosine_distance(a, torch::tensor({{0.0, 2.0, 0.0}}, kF64)).item<double>(), 1.0, kExact);
}

TEST(RecLoss, Arithmetic) {
  const auto z = torch::zeros({2, 3, 8, 8}, kF64);
  EXPECT_EQ(rec_loss(z, z).item<double>(), 0.0);
  EXPECT_NEAR(rec_loss(z, torch::ones_like(z)).item<double>(), 1.0, kExact);
  EXPECT_NEAR(rec_loss(z, torch::full_like(z, 0.25)).item<double>(), 0.25, kExact);
  EXPECT_THROW(rec_loss(z, torch::zeros({2, 3, 8, 4}, kF64)), InvalidArgument);
}

TEST(GanLoss, ZeroLogitsAndLimits) {
  const auto zero = torch::zeros({6}, kF64);
  EXPECT_NEAR(gan_d_loss(zero, zero).item<double>(), 2 * std::log(2.0), kExact);
  EXPECT_NEAR(gan_g_loss(zero).item<double>(), std::log(2.0), kExact);
  EXPECT_LT(gan_d_loss(torch::full({4}, 20.0, kF64), torch::full({4}, -20.0, kF64)).item<double>(), 1e-8);
  // Clamping keeps extreme logits finite.
  const auto huge = torch::full({2}, 1e6, kF64);
  EXPECT_TRUE(std::isfinite(gan_d_loss(-huge, huge).item<double>()));
  EXPECT_GE(gan_g_loss(huge).item<double>(), 0.0);
}

TEST(TotalLoss, WeightedSum) {
  LossBreakdown unit{1, 1, 1, 1, 1, 1, 0, 0};
  EXPECT_NEAR(total_loss(unit, LossWeights{}).total, 3.7, kExact);
  EXPECT_EQ(total_loss(LossBreakdown{}, LossWeights{}).total, 0.0);
  LossWeights zero{0, 0, 0, 0, 0, 0};
  EXPECT_EQ(total_loss(LossBreakdown{3, 1, 4, 1, 5, 9, 2, 0}, zero).total, 0.0);
  LossBreakdown bad = unit;
  bad.lpips = std::nan("");
  try {
    total_loss(bad, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("lpips"), std::string::npos);
  }
  EXPECT_THROW((LossWeights{-1, 0, 0, 0, 0, 0}.validate()), InvalidArgument);
}

TEST(AuxLosses, IdentityCasesAndPreconditions) {
  torch::manual_seed(2);
  auto a = double_aux();
  const auto x = torch::rand({3, 3, 64, 64}, kF64);
  EXPECT_NEAR(id_loss(a, x, x).item<double>(), 0.0, 1e-12);
  EXPECT_EQ(lpips_loss(a, x, x).item<double>(), 0.0);
  const auto y = torch::rand({3, 3, 64, 64}, kF64);
  EXPECT_EQ(lpips_loss(a, x, y).item<double>(), lpips_loss(a, y, x).item<double>());
  aux::AuxNets untrained(4, 3);
  EXPECT_THROW(id_loss(untrained, x.to(torch::kFloat32), x.to(torch::kFloat32)), PreconditionError);
  EXPECT_THROW(sync_loss(untrained, torch::rand({1, 5, 3, 64, 64}), torch::randn({1, 80, 16})), PreconditionError);
}

TEST(AuxLosses, LpipsNonnegative) {
  torch::manual_seed(3);
  auto a = double_aux();
  for (int i = 0; i < 100; i += 10) {
    const auto x = torch::rand({10, 3, 64, 64}, kF64), y = torch::rand({10, 3, 64, 64}, kF64);
    const auto fx = aux::perceptual_features(a, x), fy = aux::perceptual_features(a, y);
    for (int k = 0; k < 10; ++k) {
      std::vector<torch::Tensor> px, py;
      for (std::size_t m = 0; m < fx.size(); ++m) {
        px.push_back(fx[m].narrow(0, k, 1));
        py.push_back(fy[m].narrow(0, k, 1));
      }
      EXPECT_GE(lpips_from_features(px, py).item<double>(), 0.0);
    }
  }
}

// --- gradients ------------------------------------------------------------

class LossGradients : public ::testing::Test {
 protected:
  static constexpr int kPoints = 10;
  static constexpr double kTol = 1e-4;
};

TEST_F(LossGradients, Ortho) {
  const nets::LayerRouting r;
  for (int p = 0; p < kPoints; ++p) {
    torch::manual_seed(100 + p);
    const auto a = torch::randn({2, nets::kLayers, nets::kChannels}, kF64);
    const auto b = torch::randn({2, nets::kLayers, nets::kChannels}, kF64);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return ortho_hadamard(x, b, r); }, a, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return ortho_hadamard(a, x, r); }, b, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return ortho_cosine(x, b, r); }, a, p), kTol);
  }
}

TEST_F(LossGradients, Rec) {
  for (int p = 0; p < kPoints; ++p) {
    torch::manual_seed(200 + p);
    const auto b = torch::rand({2, 3, 16, 16}, kF64);
    // Differences of magnitude >= 0.05 keep every element away from the |.| kink.
    const auto sign = torch::randint(0, 2, b.sizes(), kF64) * 2 - 1;
    const auto a = b + sign * (0.05 + 0.2 * torch::rand_like(b));
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return rec_loss(x, b); }, a, p), kTol);
  }
}

TEST_F(LossGradients, Gan) {
  torch::manual_seed(300);
  nets::Discriminator d(nets::DiscriminatorMode::Image, 5);
  d->to(torch::kFloat64);
  for (int p = 0; p < kPoints; ++p) {
    torch::manual_seed(300 + p);
    const auto real = torch::randn({8}, kF64) * 3;
    const auto fake = torch::randn({8}, kF64) * 3;
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return gan_d_loss(x, fake); }, real, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return gan_d_loss(real, x); }, fake, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return gan_g_loss(x); }, fake, p), kTol);
  }
  // Through D, points whose finite-difference segment crosses a LeakyReLU kink are redrawn.
  const auto f = [&](const torch::Tensor& x) { return gan_g_loss(d->score_windows(x)); };
  int checked = 0;
  for (std::uint64_t s = 0; s < 3 * kPoints && checked < kPoints; ++s) {
    torch::manual_seed(350 + s);
    const auto win = torch::rand({1, 5, 3, 64, 64}, kF64);
    if (!test::kink_free(f, win, s)) continue;
    EXPECT_LE(test::directional_gradient_error(f, win, s), kTol) << "point " << s;
    ++checked;
  }
  EXPECT_EQ(checked, kPoints);
}

TEST_F(LossGradients, GanGradientNonzeroForImperfectD) {
  torch::manual_seed(301);
  nets::Discriminator d(nets::DiscriminatorMode::Video, 5);
  d->to(torch::kFloat64);
  auto win = torch::rand({2, 5, 3, 64, 64}, kF64).requires_grad_(true);
  const auto g = torch::autograd::grad({gan_g_loss(d->score_windows(win))}, {win})[0];
  EXPECT_GT(g.abs().max().item<double>(), 0.0);
}

TEST_F(LossGradients, SyncIdLpips) {
  auto a = double_aux();
  for (int p = 0; p < kPoints; ++p) {
    torch::manual_seed(400 + p);
    const auto frames = torch::rand({2, 5, 3, 64, 64}, kF64);
    const auto mel = torch::randn({2, 80, 16}, kF64) * 2 - 4;
    const auto xg = torch::rand({2, 3, 64, 64}, kF64), xd = torch::rand({2, 3, 64, 64}, kF64);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return sync_loss(a, x, mel); }, frames, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return sync_loss(a, frames, x); }, mel, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return id_loss(a, x, xd); }, xg, p), kTol);
    EXPECT_LE(test::directional_gradient_error([&](const torch::Tensor& x) { return lpips_loss(a, x, xd); }, xg, p), kTol);
  }
}

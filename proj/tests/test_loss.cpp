// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <vector>

#include "test_util.hpp"

using dpfn::Rng;
using dpfn::Tensor;

namespace {

Tensor rand_sig(Rng& rng, int64_t n, bool grad = false) {
  return grad ? testutil::rand_tensor(rng, {n})
              : testutil::rand_tensor(rng, {n}, false);
}

}  // namespace

TEST(SiSnr, HandCaseEvaluatesToZeroDb) {
  const Tensor x = Tensor::constant({2}, {1.0, 1.0});
  const Tensor s = Tensor::constant({2}, {1.0, 0.0});
  EXPECT_NEAR(dpfn::si_snr(x, s).item(), 0.0, 1e-6);
  EXPECT_NEAR(dpfn::si_snr_value({1.0, 1.0}, {1.0, 0.0}), 0.0, 1e-6);
}

TEST(SiSnr, InvariantToEstimateScale) {
  Rng rng(300);
  const std::vector<double> x = testutil::rand_vector(rng, 64, 0.5);
  const std::vector<double> s = testutil::rand_vector(rng, 64, 0.5);
  // The algebraic cancellation of the projection scale is exact only with a
  // vanishing stabilizer; default eps perturbs the ratio by ~eps/<x,x>.
  const double base = dpfn::si_snr_value(x, s, 1e-30);
  for (double alpha : {2.0, -3.0, 0.001, 750.0}) {
    std::vector<double> ax(x.size());
    for (size_t i = 0; i < x.size(); ++i) ax[i] = alpha * x[i];
    EXPECT_NEAR(dpfn::si_snr_value(ax, s, 1e-30), base, 1e-9)
        << "alpha " << alpha;
  }
  std::vector<double> x2(x.size());
  for (size_t i = 0; i < x.size(); ++i) x2[i] = 2.0 * x[i];
  EXPECT_NEAR(dpfn::si_snr_value(x2, s), dpfn::si_snr_value(x, s), 1e-6);
}

TEST(SiSnr, PerfectReconstructionExceedsSixtyDb) {
  Rng rng(301);
  const std::vector<double> s = testutil::rand_vector(rng, 128, 0.5);
  EXPECT_GE(dpfn::si_snr_value(s, s), 60.0);
  const Tensor t = Tensor::constant({128}, s);
  EXPECT_GE(dpfn::si_snr(t, t).item(), 60.0);
}

TEST(SiSnr, GraphAndPlainPathsAgree) {
  Rng rng(302);
  const std::vector<double> x = testutil::rand_vector(rng, 50, 0.4);
  const std::vector<double> s = testutil::rand_vector(rng, 50, 0.4);
  const double a = dpfn::si_snr(Tensor::constant({50}, x),
                                Tensor::constant({50}, s)).item();
  EXPECT_NEAR(a, dpfn::si_snr_value(x, s), 1e-12);
}

TEST(SiSnr, LengthMismatchRejected) {
  EXPECT_THROW(dpfn::si_snr(Tensor::zeros({4}), Tensor::zeros({5})),
               dpfn::ShapeError);
  EXPECT_THROW(dpfn::si_snr_value({1.0, 2.0}, {1.0}), dpfn::ShapeError);
}

TEST(SiSnr, ZeroMeanFlagSubtractsMeans) {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> s = {10.5, 11.0, 11.5, 12.0};
  std::vector<double> xc = x, sc = s;
  for (double& v : xc) v -= 2.5;
  for (double& v : sc) v -= 11.25;
  EXPECT_NEAR(dpfn::si_snr_value(x, s, 1e-8, true),
              dpfn::si_snr_value(xc, sc, 1e-8, false), 1e-12);
}

TEST(Reconstruction, SelfPairFallsBelowMinusSixty) {
  Rng rng(303);
  const Tensor s = rand_sig(rng, 100);
  EXPECT_LE(dpfn::reconstruction_loss({s}, {s}).item(), -60.0);
}

TEST(Reconstruction, IsArithmeticMeanOverPairs) {
  Rng rng(304);
  const Tensor e1 = rand_sig(rng, 40), r1 = rand_sig(rng, 40);
  const Tensor e2 = rand_sig(rng, 40), r2 = rand_sig(rng, 40);
  const double a = -dpfn::si_snr(e1, r1).item();
  const double b = -dpfn::si_snr(e2, r2).item();
  EXPECT_NEAR(dpfn::reconstruction_loss({e1, e2}, {r1, r2}).item(),
              0.5 * (a + b), 1e-12);
}

TEST(Reconstruction, EmptyListRejected) {
  EXPECT_THROW(dpfn::reconstruction_loss({}, {}), dpfn::ValueError);
  EXPECT_THROW(
      dpfn::reconstruction_loss({Tensor::zeros({3})}, {}),
      dpfn::ValueError);
}

TEST(Pit, RecoversSwappedOrder) {
  Rng rng(305);
  const Tensor a = rand_sig(rng, 60), b = rand_sig(rng, 60);
  const dpfn::PitResult res = dpfn::pit_loss({b, a}, {a, b});
  EXPECT_EQ(res.perm, (std::vector<int>{1, 0}));
  EXPECT_LE(res.loss.item(), -60.0);
}

TEST(Pit, SingleSourceEqualsReconstructionLoss) {
  Rng rng(306);
  const Tensor e = rand_sig(rng, 30), r = rand_sig(rng, 30);
  EXPECT_NEAR(dpfn::pit_loss({e}, {r}).loss.item(),
              dpfn::reconstruction_loss({e}, {r}).item(), 1e-12);
}

TEST(Pit, MatchesBruteForceOverTwoOrderings) {
  Rng rng(307);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor e1 = rand_sig(rng, 24), e2 = rand_sig(rng, 24);
    const Tensor r1 = rand_sig(rng, 24), r2 = rand_sig(rng, 24);
    const double keep = dpfn::reconstruction_loss({e1, e2}, {r1, r2}).item();
    const double swap = dpfn::reconstruction_loss({e1, e2}, {r2, r1}).item();
    const dpfn::PitResult res = dpfn::pit_loss({e1, e2}, {r1, r2});
    EXPECT_NEAR(res.loss.item(), std::min(keep, swap), 1e-12);
    EXPECT_EQ(res.perm, keep <= swap ? (std::vector<int>{0, 1})
                                     : (std::vector<int>{1, 0}));
  }
}

TEST(Pit, NeverAboveFixedOrderLoss) {
  Rng rng(308);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> est, ref;
    const int n = static_cast<int>(rng.integer(1, 4));
    for (int i = 0; i < n; ++i) {
      est.push_back(rand_sig(rng, 16));
      ref.push_back(rand_sig(rng, 16));
    }
    EXPECT_LE(dpfn::pit_loss(est, ref).loss.item(),
              dpfn::reconstruction_loss(est, ref).item() + 1e-12);
  }
}

TEST(Pit, MoreThanFourSourcesRejected) {
  std::vector<Tensor> xs(5, Tensor::zeros({4}));
  EXPECT_THROW(dpfn::pit_loss(xs, xs), dpfn::ValueError);
  EXPECT_THROW(dpfn::pit_loss({}, {}), dpfn::ValueError);
}

TEST(Align, RecoversSwappedReferences) {
  Rng rng(309);
  const std::vector<double> a = testutil::rand_vector(rng, 48, 0.4);
  const std::vector<double> b = testutil::rand_vector(rng, 48, 0.4);
  EXPECT_EQ(dpfn::align_perm({a, b}, {b, a}), (std::vector<int>{1, 0}));
  const auto pairs = dpfn::align_outputs({a, b}, {b, a});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].estimate, a);
  EXPECT_EQ(pairs[0].reference, a);
  EXPECT_EQ(pairs[0].estimate_index, 0);
  EXPECT_EQ(pairs[0].reference_index, 1);
  EXPECT_EQ(pairs[1].estimate, b);
  EXPECT_EQ(pairs[1].reference, b);
}

TEST(Align, AlignedTotalNeverBelowIdentityOrder) {
  Rng rng(310);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> est, ref;
    for (int i = 0; i < 3; ++i) {
      est.push_back(testutil::rand_vector(rng, 20, 0.4));
      ref.push_back(testutil::rand_vector(rng, 20, 0.4));
    }
    const auto perm = dpfn::align_perm(est, ref);
    double aligned = 0.0, identity = 0.0;
    for (int i = 0; i < 3; ++i) {
      aligned += dpfn::si_snr_value(est[i], ref[perm[i]]);
      identity += dpfn::si_snr_value(est[i], ref[i]);
    }
    EXPECT_GE(aligned, identity - 1e-12);
  }
}

TEST(Align, AgreesWithPitArgminOnManyRandomInstances) {
  Rng rng(311);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + static_cast<int>(trial % 3);  // cycles 2,3,4
    std::vector<Tensor> est_t, ref_t;
    std::vector<std::vector<double>> est, ref;
    for (int i = 0; i < n; ++i) {
      est.push_back(testutil::rand_vector(rng, 18, 0.4));
      ref.push_back(testutil::rand_vector(rng, 18, 0.4));
      est_t.push_back(Tensor::constant({18}, est.back()));
      ref_t.push_back(Tensor::constant({18}, ref.back()));
    }
    EXPECT_EQ(dpfn::align_perm(est, ref),
              dpfn::pit_loss(est_t, ref_t).perm)
        << "trial " << trial;
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

TEST(Identity, UniformLogitsGiveLogK) {
  for (int64_t k : {2, 5, 11}) {
    dpfn::Linear head;
    head.w = Tensor::zeros({6, k});
    head.b = Tensor::zeros({k});
    const Tensor v = Tensor::constant({6}, std::vector<double>(6, 0.7));
    EXPECT_NEAR(dpfn::identity_loss(v, 0, head).item(),
                std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(Identity, ConfidentCorrectLogitDrivesLossToZero) {
  dpfn::Linear head;
  head.w = Tensor::zeros({4, 3});
  head.b = Tensor::leaf({3}, {0.0, 50.0, 0.0});
  const Tensor v = Tensor::constant({4}, {1.0, 2.0, 3.0, 4.0});
  EXPECT_LE(dpfn::identity_loss(v, 1, head).item(), 1e-9);
}

TEST(Identity, SpeakerIndexOutOfRangeRejected) {
  Rng rng(312);
  dpfn::Linear head(rng, 4, 3);
  const Tensor v = rand_sig(rng, 4);
  EXPECT_THROW(dpfn::identity_loss(v, 3, head), dpfn::ValueError);
  EXPECT_THROW(dpfn::identity_loss(v, -1, head), dpfn::ValueError);
}

TEST(Identity, GradientThroughHeadMatchesFiniteDifferences) {
  Rng rng(313);
  auto fn = [](const std::vector<Tensor>& in) {
    dpfn::Linear head;
    head.w = in[1];
    head.b = in[2];
    return dpfn::identity_loss(in[0], 2, head);
  };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> inputs = {testutil::rand_tensor(rng, {4}),
                                  testutil::rand_tensor(rng, {4, 5}),
                                  testutil::rand_tensor(rng, {5})};
    testutil::expect_gradients_match(fn, inputs, 1e-5);
  }
}

TEST(Identity, ZeroWeightContributionLeavesGradientsUntouched) {
  Rng rng(314);
  dpfn::Linear head(rng, 4, 3);
  const std::vector<double> ev = testutil::rand_vector(rng, 20, 0.4);
  const Tensor r = Tensor::constant({20}, testutil::rand_vector(rng, 20, 0.4));
  const Tensor v = testutil::rand_tensor(rng, {4}, false);

  Tensor e1 = Tensor::leaf({20}, ev);
  dpfn::backward(dpfn::reconstruction_loss({e1}, {r}));
  const std::vector<double> plain = e1.grad();

  Tensor e2 = Tensor::leaf({20}, ev);
  Tensor total = dpfn::add(dpfn::reconstruction_loss({e2}, {r}),
                           dpfn::affine(dpfn::identity_loss(v, 0, head),
                                        0.0, 0.0));
  dpfn::backward(total);
  EXPECT_EQ(e2.grad(), plain);
}

// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Central finite-difference verification of every differentiable
// operation: 20 random trials per op at float64, relative error below
// 1e-5 (1e-6 for linear ops).

#include <cmath>
#include <vector>

#include "test_util.hpp"

using dpfn::Rng;
using dpfn::Tensor;
using testutil::expect_gradients_match;
using testutil::nudge_from_kink;
using testutil::rand_tensor;

namespace {

constexpr int kTrials = 20;
constexpr double kLinearTol = 1e-6;
constexpr double kNonlinearTol = 1e-5;

using Inputs = const std::vector<Tensor>&;

}  // namespace

TEST(GradCheck, Add) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(100 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::add(in[0], in[1]); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3, 4})}, kLinearTol);
  }
}

TEST(GradCheck, AddScalarBroadcast) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(200 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::add(in[0], in[1]); },
        {rand_tensor(rng, {2, 3}), rand_tensor(rng, {1})}, kLinearTol);
  }
}

TEST(GradCheck, MulPerArgument) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(300 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::mul(in[0], in[1]); },
        {rand_tensor(rng, {5}), rand_tensor(rng, {5})}, kLinearTol);
  }
}

TEST(GradCheck, Div) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(400 + t);
    Tensor b = rand_tensor(rng, {4});
    for (int64_t i = 0; i < b.size(); ++i) {
      b.data()[i] = 1.0 + std::fabs(b.data()[i]);
    }
    expect_gradients_match(
        [](Inputs in) { return dpfn::div(in[0], in[1]); },
        {rand_tensor(rng, {4}), b}, kNonlinearTol);
  }
}

TEST(GradCheck, Affine) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(500 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::affine(in[0], -1.7, 0.3); },
        {rand_tensor(rng, {2, 3})}, kLinearTol);
  }
}

TEST(GradCheck, ReluAwayFromKink) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(600 + t);
    Tensor x = rand_tensor(rng, {8});
    nudge_from_kink(x);
    expect_gradients_match([](Inputs in) { return dpfn::relu(in[0]); }, {x},
                           kNonlinearTol);
  }
}

TEST(GradCheck, LeakyRelu) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(700 + t);
    Tensor x = rand_tensor(rng, {8});
    nudge_from_kink(x);
    expect_gradients_match(
        [](Inputs in) { return dpfn::leaky_relu(in[0], 0.01); }, {x},
        kNonlinearTol);
  }
}

TEST(GradCheck, PreluInputAndPerChannelSlope) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(800 + t);
    Tensor x = rand_tensor(rng, {3, 4});
    nudge_from_kink(x);
    Tensor slope = rand_tensor(rng, {3}, true, 0.3);
    expect_gradients_match(
        [](Inputs in) { return dpfn::prelu(in[0], in[1]); }, {x, slope},
        kNonlinearTol);
  }
}

TEST(GradCheck, Sigmoid) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(900 + t);
    expect_gradients_match([](Inputs in) { return dpfn::sigmoid(in[0]); },
                           {rand_tensor(rng, {6})}, kNonlinearTol);
  }
}

TEST(GradCheck, Tanh) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1000 + t);
    expect_gradients_match([](Inputs in) { return dpfn::tanh(in[0]); },
                           {rand_tensor(rng, {6})}, kNonlinearTol);
  }
}

TEST(GradCheck, LogOnPositiveInputs) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1100 + t);
    Tensor x = rand_tensor(rng, {5});
    for (int64_t i = 0; i < x.size(); ++i) {
      x.data()[i] = 0.5 + std::fabs(x.data()[i]);
    }
    expect_gradients_match([](Inputs in) { return dpfn::log(in[0]); }, {x},
                           kNonlinearTol);
  }
}

TEST(GradCheck, SumMeanAndMeanAxis) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1200 + t);
    expect_gradients_match([](Inputs in) { return dpfn::sum(in[0]); },
                           {rand_tensor(rng, {3, 4})}, kLinearTol);
    expect_gradients_match([](Inputs in) { return dpfn::mean(in[0]); },
                           {rand_tensor(rng, {7})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::mean_axis(in[0], 1); },
        {rand_tensor(rng, {3, 5})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::mean_axis(in[0], 0); },
        {rand_tensor(rng, {3, 5})}, kLinearTol);
  }
}

TEST(GradCheck, DotAndMatmul) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1300 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::dot(in[0], in[1]); },
        {rand_tensor(rng, {6}), rand_tensor(rng, {6})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::matmul(in[0], in[1]); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {4, 2})}, kLinearTol);
  }
}

TEST(GradCheck, BiasAddOverEitherAxis) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1400 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::bias_add(in[0], in[1], 0); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::bias_add(in[0], in[1], 1); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {4})}, kLinearTol);
  }
}

TEST(GradCheck, ChannelAffine) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1500 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::channel_affine(in[0], in[1], in[2]); },
        {rand_tensor(rng, {3, 2, 4}), rand_tensor(rng, {3}),
         rand_tensor(rng, {3})},
        kLinearTol);
  }
}

TEST(GradCheck, ReshapePermuteNarrow) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1600 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::reshape(in[0], {6, 2}); },
        {rand_tensor(rng, {3, 4})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::permute(in[0], {2, 0, 1}); },
        {rand_tensor(rng, {2, 3, 2})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::narrow(in[0], 1, 1, 2); },
        {rand_tensor(rng, {3, 4})}, kLinearTol);
  }
}

TEST(GradCheck, SplitConcatPad) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1700 + t);
    expect_gradients_match(
        [](Inputs in) {
          auto parts = dpfn::split(in[0], 1, {2, 3});
          return dpfn::concat({parts[1], parts[0]}, 1);
        },
        {rand_tensor(rng, {2, 5})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::concat({in[0], in[1]}, 0); },
        {rand_tensor(rng, {2, 3}), rand_tensor(rng, {1, 3})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::pad(in[0], 1, 2, 1); },
        {rand_tensor(rng, {2, 3})}, kLinearTol);
  }
}

TEST(GradCheck, Conv1d) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1800 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::conv1d(in[0], in[1], 1, 0, 0); },
        {rand_tensor(rng, {2, 10}), rand_tensor(rng, {3, 2, 3})},
        kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::conv1d(in[0], in[1], 2, 1, 1); },
        {rand_tensor(rng, {2, 8}), rand_tensor(rng, {2, 2, 3})},
        kLinearTol);
  }
}

TEST(GradCheck, TransposeConv1d) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(1900 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::transpose_conv1d(in[0], in[1], 2); },
        {rand_tensor(rng, {2, 5}), rand_tensor(rng, {2, 1, 4})},
        kLinearTol);
  }
}

TEST(GradCheck, LayerNorm) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2000 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::layer_norm(in[0], 0, in[1], in[2]); },
        {rand_tensor(rng, {4, 3}), rand_tensor(rng, {4}),
         rand_tensor(rng, {4})},
        kNonlinearTol);
  }
}

TEST(GradCheck, CrossEntropyLogits) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2100 + t);
    expect_gradients_match(
        [t](Inputs in) {
          return dpfn::cross_entropy_logits(in[0], t % 5);
        },
        {rand_tensor(rng, {5})}, kNonlinearTol);
  }
}

TEST(GradCheck, SegmentAndOverlapAdd) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2200 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::segment(in[0], 4).data; },
        {rand_tensor(rng, {2, 7})}, kLinearTol);
    expect_gradients_match(
        [](Inputs in) { return dpfn::overlap_add(in[0], 7); },
        {rand_tensor(rng, {2, 4, 3})}, kLinearTol);
  }
}

TEST(GradCheck, SiSnr) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2300 + t);
    expect_gradients_match(
        [](Inputs in) { return dpfn::si_snr(in[0], in[1]); },
        {rand_tensor(rng, {12}), rand_tensor(rng, {12})}, kNonlinearTol);
  }
}

TEST(GradCheck, ReconstructionLoss) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2400 + t);
    expect_gradients_match(
        [](Inputs in) {
          return dpfn::reconstruction_loss({in[0], in[1]}, {in[2], in[3]});
        },
        {rand_tensor(rng, {10}), rand_tensor(rng, {10}),
         rand_tensor(rng, {10}), rand_tensor(rng, {10})},
        kNonlinearTol);
  }
}

TEST(GradCheck, LstmCellOverFourSteps) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2500 + t);
    dpfn::LstmCell cell(rng, 3, 2);
    std::vector<Tensor> inputs = {rand_tensor(rng, {4, 1, 3})};
    for (const auto& p : cell.params()) inputs.push_back(p.tensor);
    expect_gradients_match(
        [&cell](Inputs in) {
          return dpfn::sum(cell.run(in[0], false));
        },
        inputs, kNonlinearTol);
  }
}

TEST(GradCheck, BiLstm) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2600 + t);
    dpfn::BiLstm rnn(rng, 2, 2);
    std::vector<Tensor> inputs = {rand_tensor(rng, {3, 1, 2})};
    for (const auto& p : rnn.params()) inputs.push_back(p.tensor);
    expect_gradients_match(
        [&rnn](Inputs in) { return dpfn::sum(rnn.forward(in[0])); },
        inputs, kNonlinearTol);
  }
}

TEST(GradCheck, LinearLayer) {
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(2700 + t);
    dpfn::Linear lin(rng, 4, 3);
    expect_gradients_match(
        [&lin](Inputs in) { return lin.forward(in[0]); },
        {rand_tensor(rng, {4}), lin.w, lin.b}, kNonlinearTol);
  }
}

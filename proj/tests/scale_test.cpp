#include "twoscale/scale.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "twoscale/dataset.hpp"
#include "twoscale/network.hpp"
#include "twoscale/rng.hpp"

using namespace twoscale;

TEST(ParamScale, HandValues) {
  Network net({{2}, {FullyConnected{2}}});
  net.set_params({{3.0, 4.0, 0.0, 0.0}});
  const ScaleReading reading = param_scale(net);
  EXPECT_DOUBLE_EQ(reading.r, 5.0);
  ASSERT_EQ(reading.per_layer_norms.size(), 1u);
  EXPECT_DOUBLE_EQ(reading.per_layer_norms[0], 5.0);

  Network two({{2}, {FullyConnected{2}, FullyConnected{2}}});
  two.set_params({{2.0, 0.0, 0.0, 0.0}, {0.0, 3.0, 0.0, 0.0}});
  EXPECT_DOUBLE_EQ(param_scale(two).r, 6.0);
}

TEST(ParamScale, ProductOfLayerNorms) {
  Network net({{5}, {FullyConnected{7}, Activate{Activation::ReLU}, FullyConnected{3}}});
  net.init_gaussian(11);
  const ScaleReading reading = param_scale(net);
  double product = 1.0;
  for (double n : reading.per_layer_norms) product *= n;
  EXPECT_NEAR(reading.r, product, 1e-12 * product);
}

TEST(ParamScale, ScalesWithParameterPower) {
  Network net({{4}, {FullyConnected{5}, Activate{Activation::Abs}, FullyConnected{3}}});
  net.init_gaussian(2);
  const double base = param_scale(net).r;
  for (double c : {0.5, 2.0, 10.0}) {
    Network scaled = net;
    scaled.scale_params(c);
    EXPECT_NEAR(param_scale(scaled).r, c * c * base, 1e-9 * c * c * base);
  }
}

TEST(ParamScale, AllZeroLayerIsDegenerate) {
  Network net({{2}, {FullyConnected{2}, FullyConnected{2}}});
  net.set_params({{0.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}});
  EXPECT_THROW(param_scale(net), DegenerateScale);
}

TEST(NormalizedLogits, DualPathOracle) {
  // Division by R must agree with a forward pass at parameters alpha/R^(1/D).
  Network net({{6}, {FullyConnected{8}, Activate{Activation::ReLU}, FullyConnected{4}}});
  net.init_gaussian(33);
  Tensor input({6}, {0.1, -0.2, 0.3, 0.7, -0.5, 0.05});

  const std::vector<double> divided = normalized_logits(net, input);

  const double r = param_scale(net).r;
  Network renorm = net;
  renorm.scale_params(std::pow(r, -1.0 / static_cast<double>(net.degree())));
  const auto direct = renorm.forward(input).logits;

  ASSERT_EQ(divided.size(), direct.size());
  for (std::size_t j = 0; j < divided.size(); ++j) {
    EXPECT_NEAR(divided[j], direct[j], 1e-6 * std::max(1.0, std::abs(direct[j])));
  }
  // The renormalized network has unit parameter scale.
  EXPECT_NEAR(param_scale(renorm).r, 1.0, 1e-9);
}

TEST(NormalizedLogits, InvariantUnderRescaling) {
  Network net({{3}, {FullyConnected{5}, Activate{Activation::ReLU}, FullyConnected{3}}});
  net.init_gaussian(4);
  const Tensor input({3}, {0.4, -0.8, 1.2});
  const auto base = normalized_logits(net, input);
  Network scaled = net;
  scaled.scale_params(7.0);
  const auto rescaled = normalized_logits(scaled, input);
  for (std::size_t j = 0; j < base.size(); ++j) {
    EXPECT_NEAR(rescaled[j], base[j], 1e-6 * std::max(1.0, std::abs(base[j])));
  }
}

TEST(NormalizedLogits, RequiresBiasFreeNetwork) {
  Network net({{3}, {FullyConnected{3, true}}});
  net.init_gaussian(1);
  EXPECT_THROW(normalized_logits(net, Tensor({3}, {1, 2, 3})), ContractViolation);
}

TEST(Confidence, HandValues) {
  const std::vector<double> logits{2.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(logit_gap(logits, 0), 1.0);
  EXPECT_DOUBLE_EQ(logit_gap(logits, 2), -2.0);
  const std::vector<double> uniform{0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(logit_gap(uniform, 1), 0.0);
  EXPECT_THROW(logit_gap(logits, 3), InvalidInput);
  EXPECT_THROW(logit_gap(logits, -1), InvalidInput);
}

TEST(Confidence, RecordTiesNormalizedToR) {
  Network net({{4}, {FullyConnected{6}, Activate{Activation::ReLU}, FullyConnected{3}}});
  net.init_gaussian(9);
  const Tensor input({4}, {1.0, -0.5, 0.25, 2.0});
  const ConfidenceRecord rec = confidence(net, input, 1);
  const double r = param_scale(net).r;
  EXPECT_NEAR(rec.delta_x_hat, rec.delta_x / r, 1e-12 * std::abs(rec.delta_x / r));
  EXPECT_EQ(rec.correct_class, 1);
  EXPECT_EQ(rec.delta_x > 0, rec.delta_x_hat > 0);
}

TEST(Confidence, DeltaXHatInvariantAndDeltaXHomogeneous) {
  Network net({{3}, {FullyConnected{4}, Activate{Activation::Abs}, FullyConnected{2}}});
  net.init_gaussian(14);
  const Tensor input({3}, {0.3, 0.9, -1.1});
  const ConfidenceRecord base = confidence(net, input, 0);
  for (double c : {0.5, 2.0, 10.0}) {
    Network scaled = net;
    scaled.scale_params(c);
    const ConfidenceRecord rec = confidence(scaled, input, 0);
    const double power = c * c;
    EXPECT_NEAR(rec.delta_x, power * base.delta_x,
                1e-6 * std::abs(power * base.delta_x) + 1e-15);
    EXPECT_NEAR(rec.delta_x_hat, base.delta_x_hat, 1e-6 * std::abs(base.delta_x_hat));
  }
}

TEST(Confidence, PredictedClassInvariantUnderRescaling) {
  Network net({{5}, {FullyConnected{6}, Activate{Activation::ReLU}, FullyConnected{4}}});
  net.init_gaussian(6);
  Rng rng(41);
  for (int i = 0; i < 20; ++i) {
    Tensor input({5});
    for (auto& v : input.values) v = rng.gaussian();
    const auto base = net.forward(input).logits;
    std::size_t base_arg = 0;
    for (std::size_t j = 1; j < base.size(); ++j) {
      if (base[j] > base[base_arg]) base_arg = j;
    }
    for (double c : {0.5, 2.0, 10.0}) {
      Network scaled = net;
      scaled.scale_params(c);
      const auto logits = scaled.forward(input).logits;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < logits.size(); ++j) {
        if (logits[j] > logits[arg]) arg = j;
      }
      ASSERT_EQ(arg, base_arg);
    }
  }
}

TEST(WellClassified, CountsStrictGapAboveEta) {
  // One-layer identity-ish net over 3 classes: logits = inputs.
  Network net({{3}, {FullyConnected{3}}});
  net.set_params({{1, 0, 0, 0, 1, 0, 0, 0, 1}});
  Dataset data;
  data.class_count = 3;
  data.objects = {Tensor({3}, {2.0, 1.0, 0.0}),    // gap 1, label 0
                  Tensor({3}, {0.0, 0.5, 0.45}),   // gap 0.05, label 1
                  Tensor({3}, {1.0, 1.0, 0.0}),    // gap 0, label 0 (tie)
                  Tensor({3}, {0.0, 1.0, 0.0})};   // gap -1, label 2
  data.fine_labels = {0, 1, 0, 2};

  EXPECT_EQ(well_classified_count(net, data, 0.0), 2u);
  EXPECT_EQ(well_classified_count(net, data, 0.1), 1u);
  EXPECT_EQ(well_classified_count(net, data, 1e18), 0u);
  EXPECT_THROW(well_classified_count(net, Dataset{}, 0.0), InvalidInput);
  EXPECT_THROW(well_classified_count(net, data, -1.0), InvalidInput);
}

#include <gtest/gtest.h>

#include "dense_ddu/rng.hpp"
#include "dense_ddu/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddu;

TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterRng, StreamsDependOnlyOnTheirAddress) {
  CounterRng a(42, 3, 17, RngPurpose::features);
  CounterRng noise(42, 3, 16, RngPurpose::features);
  for (int i = 0; i < 5; ++i) noise.next_u32();
  CounterRng b(42, 3, 17, RngPurpose::features);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.next_u32(), b.next_u32());
  CounterRng other(42, 3, 17, RngPurpose::logits);
  CounterRng same(42, 3, 17, RngPurpose::features);
  EXPECT_NE(other.next_u32(), same.next_u32());
}

TEST(CounterRng, UniformStaysInOpenIntervalWithRightMoments) {
  CounterRng r(7, 0, 0, RngPurpose::evaluation);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum2 += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sum2 / n - 0.25, 1.0 / 12.0, 0.003);
}

TEST(CounterRng, NormalMoments) {
  CounterRng r(8, 1, 2, RngPurpose::evaluation);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum2 / n, 1.0, 0.015);
  EXPECT_NEAR(sum4 / n, 3.0, 0.08);
}

TEST(CounterRng, BelowCoversRange) {
  CounterRng r(9, 0, 0, RngPurpose::layout);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 50000; ++i) ++hist[r.below(5)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
}

TEST(Synth, BlocksLayoutProportionsAreExact) {
  SynthSpec s;
  s.num_classes = 3;
  s.width = 32;
  EXPECT_EQ(layout_proportions(s), (std::vector<double>{11.0 / 32, 11.0 / 32, 10.0 / 32}));
  const auto img = generate_image(resolve(s), 0);
  std::vector<std::size_t> count(3, 0);
  for (auto l : img.labels.labels) ++count[static_cast<std::size_t>(l)];
  EXPECT_EQ(count, (std::vector<std::size_t>{11 * 32, 11 * 32, 10 * 32}));
}

TEST(Synth, DefaultCovariancesFactorizeBack) {
  SynthSpec s;
  s.feature_dim = 5;
  const auto r = resolve(s);
  for (std::size_t c = 0; c < s.num_classes; ++c) {
    const auto g = linalg::gram_from_lower(r.chol[c], 5);
    for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(g[i], r.spec.covariances[c][i], 1e-12);
  }
}

TEST(Synth, SampleMomentsMatchParameters) {
  SynthSpec s;
  s.num_classes = 2;
  s.feature_dim = 3;
  s.num_images = 1;
  s.height = 200;
  s.width = 200;
  s.seed = 5;
  const auto r = resolve(s);
  const auto img = generate_image(r, 0);
  oracle::OuterProductFit fit(2, 3);
  fit.add(img.features, img.labels);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(fit.mean(c)(static_cast<Eigen::Index>(i)), r.spec.means[c][i], 0.05);
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(fit.covariance(c)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                    r.spec.covariances[c][i * 3 + j], 0.08);
      }
    }
  }
}

TEST(Synth, AnalyticDensityMatchesDenseOracle) {
  SynthSpec s;
  s.num_classes = 3;
  s.feature_dim = 4;
  const auto r = resolve(s);
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<double> prior;
  for (std::size_t c = 0; c < 3; ++c) {
    mu.emplace_back(Eigen::Map<const Eigen::VectorXd>(r.spec.means[c].data(), 4));
    sigma.emplace_back(Eigen::Map<const Eigen::MatrixXd>(r.spec.covariances[c].data(), 4, 4));
    prior.push_back(std::exp(r.log_priors[c]));
  }
  CounterRng rng(1, 0, 0, RngPurpose::evaluation);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> z(4);
    for (auto& v : z) v = 6.0 * rng.normal();
    EXPECT_NEAR(analytic_log_density(r, z),
                oracle::dense_mixture_log_density(Eigen::Map<const Eigen::VectorXd>(z.data(), 4), mu, sigma, prior),
                1e-9);
  }
}

TEST(Synth, OodSquareIsFarAndIgnored) {
  SynthSpec s;
  s.ood_fraction = 0.1;
  s.seed = 3;
  const auto r = resolve(s);
  const auto img = generate_image(r, 2);
  std::size_t ood = 0;
  for (std::size_t p = 0; p < img.ood_mask.pixels(); ++p) {
    if (!img.ood_mask[p]) continue;
    ++ood;
    EXPECT_EQ(img.labels[p], s.ignore_id);
  }
  EXPECT_EQ(ood, 10u * 10u);  // round(sqrt(0.1·1024)) = 10
  for (const auto& m : r.spec.means) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) d2 += (m[i] - r.ood_mean[i]) * (m[i] - r.ood_mean[i]);
    EXPECT_GE(std::sqrt(d2), s.ood_offset * r.ood_sigma);
  }
}

TEST(Synth, LogitsHitTheRequestedAccuracy) {
  SynthSpec s;
  s.logit_accuracy = 0.8;
  s.height = 64;
  s.width = 64;
  const auto img = generate_image(resolve(s), 0);
  std::size_t right = 0;
  for (std::size_t p = 0; p < img.labels.pixels(); ++p) {
    const double* lg = img.logits.data() + p * 3;
    const auto arg = std::max_element(lg, lg + 3) - lg;
    right += arg == img.labels[p] ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(right) / 4096.0, 0.8, 0.04);
}

TEST(Synth, ImagesAreIndependentOfGenerationOrder) {
  SynthSpec s;
  s.layout = LayoutMode::voronoi;
  s.ood_fraction = 0.05;
  const auto r = resolve(s);
  const auto late = generate_image(r, 4);
  generate_image(r, 1);
  const auto again = generate_image(r, 4);
  EXPECT_EQ(late.features.data, again.features.data);
  EXPECT_EQ(late.logits, again.logits);
  EXPECT_NE(generate_image(r, 3).features.data, late.features.data);
}

TEST(Synth, DatasetBytesIdenticalAcrossRunsAndWorkers) {
  SynthSpec s;
  s.num_images = 9;
  s.height = 12;
  s.width = 10;
  s.ood_fraction = 0.1;
  s.layout = LayoutMode::random;
  testutil::TempDir a("syn_a"), b("syn_b");
  generate(s, a.path(), 1);
  generate(s, b.path(), 4);
  const auto names = testutil::files_in(a.path());
  ASSERT_EQ(names, testutil::files_in(b.path()));
  EXPECT_EQ(names.size(), 9u * 4u + 2u);
  for (const auto& n : names) EXPECT_EQ(read_file(a / n), read_file(b / n)) << n;
}

TEST(Synth, WrittenDatasetLoadsThroughManifest) {
  SynthSpec s;
  s.num_images = 2;
  s.height = 6;
  s.width = 6;
  testutil::TempDir dir("syn_load");
  generate(s, dir.path());
  const auto m = load_manifest(dir / "manifest.json");
  EXPECT_NO_THROW(validate_entries(m, {true, true, true}));
  const auto f = load_features(m, m.entries[1]);
  const auto img = generate_image(resolve(s), 1);
  EXPECT_EQ(f.data, img.features.data);
  EXPECT_EQ(read_tensor(dir / "img_00000_labels.npy").dtype(), DType::u8);
}

TEST(Synth, SpecJsonRoundTrip) {
  SynthSpec s;
  s.num_classes = 2;
  s.feature_dim = 2;
  s.means = {{1, 2}, {3, 4}};
  s.covariances = {{1, 0.5, 0.5, 2}, {1, 0, 0, 1}};
  s.seed = 99;
  s.layout = LayoutMode::voronoi;
  const auto back = synth_spec_from_json(synth_spec_to_json(s));
  EXPECT_EQ(synth_spec_to_json(back), synth_spec_to_json(s));

  nlohmann::json nested = synth_spec_to_json(s);
  nested["covariances"] = {{{1, 0.5}, {0.5, 2}}, {{1, 0}, {0, 1}}};
  EXPECT_EQ(synth_spec_from_json(nested).covariances, s.covariances);
}

TEST(Synth, InvalidSpecsAreConfigErrors) {
  SynthSpec s;
  s.ignore_id = 1;
  EXPECT_THROW(resolve(s), ConfigError);
  s = {};
  s.ood_fraction = 1.0;
  EXPECT_THROW(resolve(s), ConfigError);
  s = {};
  s.num_classes = 2;
  s.feature_dim = 2;
  s.covariances = {{1, 2, 2, 1}, {1, 0, 0, 1}};
  EXPECT_THROW(resolve(s), ConfigError);
  s.covariances = {{1, 0.5, 0.4, 1}, {1, 0, 0, 1}};
  EXPECT_THROW(resolve(s), ConfigError);
  EXPECT_THROW(synth_spec_from_json({{"layout", "spiral"}}), ConfigError);
  EXPECT_THROW(synth_spec_from_json({{"num_images", "many"}}), ConfigError);
}

#include <gtest/gtest.h>

#include "ecnn/ensemble.hpp"
#include "ecnn/errors.hpp"
#include "support/oracles.hpp"

using namespace ecnn;

namespace {

std::vector<double> values(const FusedScores& s) { return {s.values().begin(), s.values().end()}; }

}  // namespace

TEST(ProbVector, Validation) {
  EXPECT_NO_THROW(ProbVector({0.2, 0.5, 0.3}));
  EXPECT_THROW(ProbVector({0.2, 0.5}), InvalidArgument);
  EXPECT_THROW(ProbVector({1.5, -0.5}), InvalidArgument);
  EXPECT_THROW(ProbVector({}), InvalidArgument);
}

TEST(FuseSum, ScalarMultipleOfIdenticalVectors) {
  const std::vector<ProbVector> p(3, ProbVector({0.2, 0.5, 0.3}));
  const FusedScores s = fuse_sum(p);
  EXPECT_EQ(s.model_count(), 3u);
  EXPECT_NEAR(s[0], 0.6, 1e-15);
  EXPECT_NEAR(s[1], 1.5, 1e-15);
  EXPECT_NEAR(s[2], 0.9, 1e-15);
}

TEST(FuseSum, SumDiffersFromMajorityVote) {
  const std::vector<ProbVector> p{ProbVector({0.4, 0.6, 0}), ProbVector({0.45, 0.55, 0}), ProbVector({0.9, 0.1, 0})};
  const FusedScores s = fuse_sum(p);
  EXPECT_NEAR(s[0], 1.75, 1e-15);
  EXPECT_NEAR(s[1], 1.25, 1e-15);
  EXPECT_EQ(s[2], 0.0);
  EXPECT_EQ(argmax_class(s), 0u);
  EXPECT_EQ(argmax_class(p[0]), 1u);
  EXPECT_EQ(argmax_class(p[1]), 1u);
}

TEST(FuseSum, SingleVectorAndErrors) {
  const std::vector<ProbVector> one{ProbVector({0.1, 0.7, 0.2})};
  EXPECT_EQ(values(fuse_sum(one)), (std::vector<double>{0.1, 0.7, 0.2}));
  EXPECT_THROW(fuse_sum(std::vector<ProbVector>{}), InvalidArgument);
  const std::vector<ProbVector> mixed{ProbVector({0.5, 0.5}), ProbVector({0.2, 0.5, 0.3})};
  EXPECT_THROW(fuse_sum(mixed), InvalidShape);
}

TEST(FuseSum, PermutationInvariantBitForBit) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ProbVector> p;
    for (int m = 0; m < 3; ++m) {
      std::vector<double> v{rng.uniform(), rng.uniform(), rng.uniform()};
      const double t = v[0] + v[1] + v[2];
      for (auto& x : v) x /= t;
      p.emplace_back(v);
    }
    const auto ref = values(fuse_sum(p));
    const std::vector<ProbVector> q{p[2], p[0], p[1]}, r{p[1], p[2], p[0]};
    EXPECT_EQ(values(fuse_sum(q)), ref);
    EXPECT_EQ(values(fuse_sum(r)), ref);
  }
}

TEST(Argmax, TiesAndDegenerateCases) {
  EXPECT_EQ(argmax_class(std::vector<double>{0.5, 0.5, 0.5}), 0u);
  EXPECT_EQ(argmax_class(std::vector<double>{0.1, 0.45, 0.45}), 1u);
  EXPECT_EQ(argmax_class(std::vector<double>{1.0}), 0u);
  EXPECT_THROW(argmax_class(std::vector<double>{}), InvalidArgument);
}

TEST(PredictEnsemble, ReducesToSingleModelAndIdenticalCopies) {
  const Model a = build_model(XceptionSpec::toy(), 1), b = build_model(XceptionSpec::toy(), 1);
  const Model c = build_model(XceptionSpec::toy(), 1);
  SplitMix64 rng(4);
  const Tensor x = oracle::random_tensor({6, 1, 16, 16}, rng, 0, 1);
  std::vector<std::size_t> single;
  for (const auto& p : predict_probabilities(a, x)) single.push_back(argmax_class(p));
  const std::vector<const Model*> one{&a}, three{&a, &b, &c};
  EXPECT_EQ(predict_ensemble(one, x), single);
  EXPECT_EQ(predict_ensemble(three, x), single);
}

TEST(PredictEnsemble, MatchesManualFusionAcrossFamilies) {
  const Model a = build_model(XceptionSpec::toy(), 1), b = build_model(DenseSpec::toy(), 2),
              c = build_model(EffSpec::toy(), 3);
  SplitMix64 rng(5);
  const Tensor x = oracle::random_tensor({5, 1, 16, 16}, rng, 0, 1);
  const auto pa = predict_probabilities(a, x), pb = predict_probabilities(b, x), pc = predict_probabilities(c, x);
  std::vector<std::size_t> manual;
  for (std::size_t i = 0; i < 5; ++i) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double s = pa[i][k] + pb[i][k] + pc[i][k];
      if (s > best + 1e-12) best = s, arg = k;
    }
    manual.push_back(arg);
  }
  const std::vector<const Model*> members{&a, &b, &c};
  EXPECT_EQ(predict_ensemble(members, x), manual);
}

TEST(PredictEnsemble, RejectsIncompatibleMembers) {
  const Model a = build_model(XceptionSpec::toy(), 1);
  EffSpec bigger;
  bigger.phi = 1.0;
  const Model b = build_model(bigger, 1);
  DenseSpec four = DenseSpec::toy();
  four.num_classes = 4;
  const Model c = build_model(four, 1);
  const Tensor x = Tensor::zeros({1, 1, 16, 16});
  const std::vector<const Model*> res{&a, &b}, classes{&a, &c};
  EXPECT_THROW(predict_ensemble(res, x), IncompatibleEnsemble);
  EXPECT_THROW(predict_ensemble(classes, x), IncompatibleEnsemble);
  EXPECT_THROW(predict_ensemble(std::vector<const Model*>{}, x), InvalidArgument);
}

TEST(ProbCsv, RoundTripAndFusion) {
  ProbTable t;
  t.sample_ids = {"a", "b"};
  t.rows = {ProbVector({0.4, 0.6, 0}), ProbVector({0.25, 0.25, 0.5})};
  const std::string csv = format_prob_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sample_id,p0,p1,p2");
  const ProbTable back = parse_prob_csv(csv);
  EXPECT_EQ(back.sample_ids, t.sample_ids);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_TRUE(std::equal(back.rows[i].values().begin(), back.rows[i].values().end(), t.rows[i].values().begin()));

  const std::vector<ProbTable> three{t, t, t};
  const FusedTable fused = fuse_tables(three);
  EXPECT_EQ(fused.predictions, (std::vector<std::size_t>{1, 2}));
  const std::string out = format_fused_csv(fused);
  EXPECT_EQ(out.substr(0, out.find('\n')), "sample_id,prediction,s0,s1,s2");
}

TEST(ProbCsv, MismatchNamesFirstOffendingId) {
  ProbTable a, b;
  a.sample_ids = {"x", "y", "z"};
  b.sample_ids = {"x", "q", "z"};
  a.rows = b.rows = std::vector<ProbVector>(3, ProbVector({0.5, 0.5}));
  const std::vector<ProbTable> tables{a, b};
  try {
    fuse_tables(tables);
    FAIL();
  } catch (const DataMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_prob_csv("id,p0\nx,1\n"), DataMismatch);
  EXPECT_THROW(parse_prob_csv("sample_id,p0,p1\nx,0.5\n"), DataMismatch);
  EXPECT_THROW(parse_prob_csv("sample_id,p0,p1\nx,0.5,abc\n"), DataMismatch);
}

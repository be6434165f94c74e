#include "mfgl/bench.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace mfgl;

namespace {

RunConfig config_for(const SyntheticProblem& p, Index m, SolverKind solver = SolverKind::Dense) {
  RunConfig c;
  c.m = m;
  c.solver = solver;
  c.sigma = normalized_sigma(p, c.normalization);
  return c;
}

GeneratorSpec small_spec(Index n, Index clusters, std::uint64_t seed = 3) {
  GeneratorSpec s;
  s.n = n;
  s.clusters = clusters;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(ErrorComponent, Examples) {
  const Matrix ref = oracle::random_points(5, 3, 1);
  EXPECT_TRUE(error_component(ref, ref).isZero(0.0));
  const Matrix ones = Matrix::Ones(4, 1);
  EXPECT_EQ(error_component(Matrix::Constant(4, 1, 2.0), ones), Matrix::Constant(4, 1, 100.0));

  const Matrix est = oracle::random_points(5, 3, 2);
  const Matrix e = error_component(est, ref);
  for (Index k = 0; k < 3; ++k) {
    double denom = 0.0;
    for (Index j = 0; j < 5; ++j) denom += std::abs(ref(j, k));
    denom /= 5.0;
    for (Index i = 0; i < 5; ++i)
      EXPECT_NEAR(e(i, k), 100.0 * std::abs(est(i, k) - ref(i, k)) / denom, 1e-12);
  }
}

TEST(ErrorComponent, ZeroColumnIsReported) {
  Matrix ref = oracle::random_points(4, 3, 3);
  ref.col(1).setZero();
  try {
    error_component(ref, ref);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroReferenceColumn);
    EXPECT_EQ(e.index(), 1);
  }
}

TEST(ErrorField, Examples) {
  const Matrix ref = oracle::random_points(6, 4, 4);
  EXPECT_TRUE(error_field(ref, ref).isZero(0.0));

  Matrix one_ref(1, 2), one_est(1, 2);
  one_ref << 0.0, 5.0;
  one_est << 3.0, 9.0;
  EXPECT_NEAR(error_field(one_est, one_ref)(0), 100.0, 1e-12);

  const Matrix est = oracle::random_points(6, 4, 5);
  const Vector e = error_field(est, ref);
  double denom = 0.0;
  for (Index j = 0; j < 6; ++j) denom += std::sqrt(ref.row(j).squaredNorm());
  denom /= 6.0;
  for (Index i = 0; i < 6; ++i) {
    double diff = 0.0;
    for (Index k = 0; k < 4; ++k) diff += (est(i, k) - ref(i, k)) * (est(i, k) - ref(i, k));
    EXPECT_NEAR(e(i), 100.0 * std::sqrt(diff) / denom, 1e-12);
  }
  try {
    error_field(ref, Matrix::Zero(6, 4));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::ZeroReferenceSet);
  }
}

TEST(ErrorReport, ReductionMatchesMeans) {
  const Matrix ref = oracle::random_points(10, 3, 6);
  const Matrix lf = ref + 0.5 * oracle::random_points(10, 3, 7);
  const Matrix mf = ref + 0.1 * oracle::random_points(10, 3, 8);
  for (ErrorMetric metric : {ErrorMetric::ComponentRelAbs, ErrorMetric::FieldRelL2}) {
    const ErrorReport r = error_report(lf, mf, ref, metric);
    EXPECT_NEAR(r.reduction, 100.0 * (1.0 - r.mean_mf / r.mean_lf), 1e-10);
    EXPECT_NEAR(r.mean_mf, r.per_point.mean(), 1e-12);
    EXPECT_GT(r.reduction, 0.0);
    const nlohmann::json j = to_json(r);
    EXPECT_EQ(j["metric"], std::string(to_string(metric)));
    EXPECT_EQ(j["reduction"].get<double>(), r.reduction);
  }
}

TEST(Generate, Deterministic) {
  for (GeneratorId id : {GeneratorId::ClusteredShift, GeneratorId::SmoothManifold, GeneratorId::BeamLike1D}) {
    GeneratorSpec s = small_spec(200, 4, 9);
    s.id = id;
    const SyntheticProblem a = generate(s);
    const SyntheticProblem b = generate(s);
    EXPECT_EQ(a.lf_data, b.lf_data);
    EXPECT_EQ(a.true_data, b.true_data);
    EXPECT_EQ(a.hf_noise, b.hf_noise);
    EXPECT_EQ(a.lf_data.rows(), 200);
    EXPECT_EQ(a.generator_id, id);
    s.seed = 10;
    EXPECT_NE(generate(s).lf_data, a.lf_data);
  }
}

TEST(Generate, LabelsPartitionPoints) {
  const SyntheticProblem p = generate(small_spec(103, 7));
  ASSERT_TRUE(p.cluster_labels.has_value());
  ASSERT_EQ(p.cluster_labels->size(), 103u);
  std::vector<int> counts(7, 0);
  for (Index l : *p.cluster_labels) {
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 7);
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int c : counts) EXPECT_GE(c, 14);
}

TEST(Generate, ShiftIsConstantPerCluster) {
  const SyntheticProblem p = generate(small_spec(300, 5));
  const Matrix shift = p.true_data - p.lf_data;
  for (Index i = 0; i < 300; ++i) {
    const Index g = (*p.cluster_labels)[static_cast<std::size_t>(i)];
    for (Index j = 0; j < i; ++j)
      if ((*p.cluster_labels)[static_cast<std::size_t>(j)] == g) {
        EXPECT_LE((shift.row(i) - shift.row(j)).norm(), 1e-12);
        break;
      }
  }
}

TEST(Generate, ZeroDisplacementLeavesLfEqualTruth) {
  GeneratorSpec s = small_spec(100, 4);
  s.displacement_fraction = 0.0;
  const SyntheticProblem p = generate(s);
  EXPECT_EQ(p.lf_data, p.true_data);
  EXPECT_EQ(p.hf_noise_sigma, 0.0);
}

TEST(Generate, HighFidelityRowsAreTruthPlusNoise) {
  const SyntheticProblem p = generate(small_spec(2000, 4));
  const Matrix hf = p.hf_rows({5, 0, 1999});
  EXPECT_EQ(hf.row(0), p.true_data.row(5) + p.hf_noise.row(5));
  EXPECT_EQ(hf.row(2), p.true_data.row(1999) + p.hf_noise.row(1999));
  const double empirical = std::sqrt(p.hf_noise.squaredNorm() / static_cast<double>(p.hf_noise.size()));
  EXPECT_NEAR(empirical / p.hf_noise_sigma, 1.0, 0.05);
  EXPECT_THROW(p.hf_rows({2000}), Error);
}

TEST(Generate, InvalidSpecs) {
  GeneratorSpec s = small_spec(10, 11);
  EXPECT_THROW(generate(s), Error);
  s = small_spec(10, 2);
  s.id = GeneratorId::BeamLike1D;
  s.d = 2;
  EXPECT_THROW(generate(s), Error);
  s = small_spec(10, 2);
  s.noise_fraction = -1.0;
  EXPECT_THROW(generate(s), Error);
}

TEST(Generate, BeamLowFidelityUnderpredicts) {
  GeneratorSpec s = small_spec(50, 1);
  s.id = GeneratorId::BeamLike1D;
  s.d = 12;
  const SyntheticProblem p = generate(s);
  EXPECT_LT(p.lf_data.rowwise().norm().mean(), p.true_data.rowwise().norm().mean());
  EXPECT_FALSE(p.cluster_labels.has_value());
}

TEST(Pipeline, ClusteredShiftHeadline) {
  GeneratorSpec s;
  s.seed = 1;
  const SyntheticProblem p = generate(s);
  const PipelineRun run = run_pipeline(p, config_for(p, 10));
  EXPECT_GE(run.report.reduction, 75.0);
  EXPECT_EQ(run.plan.m(), 10);
  ASSERT_TRUE(run.estimate.calibration.has_value());
  EXPECT_NEAR(run.estimate.calibration->achieved / run.estimate.calibration->target, 1.0, 1e-3);
}

TEST(Pipeline, NoHighFidelityDataLeavesLf) {
  const SyntheticProblem p = generate(small_spec(120, 3));
  const PipelineRun run = run_pipeline(p, config_for(p, 0));
  EXPECT_EQ(run.estimate.posterior.mf_estimates, p.lf_data);
  EXPECT_EQ(run.report.reduction, 0.0);
  EXPECT_EQ(run.report.mean_mf, run.report.mean_lf);
}

TEST(Pipeline, SolversAgreeWithFullRank) {
  const SyntheticProblem p = generate(small_spec(300, 5));
  RunConfig c = config_for(p, 5);
  c.k = 300;
  const PipelineRun dense = run_pipeline(p, c);
  c.solver = SolverKind::Truncated;
  const PipelineRun truncated = run_pipeline(p, c);
  c.solver = SolverKind::Nystrom;
  const PipelineRun nystrom = run_pipeline(p, c);
  EXPECT_NEAR(truncated.report.mean_mf, dense.report.mean_mf, 1e-6);
  EXPECT_NEAR(nystrom.report.mean_mf, dense.report.mean_mf, 1e-6);
  EXPECT_EQ(dense.plan.permutation, nystrom.plan.permutation);
  EXPECT_EQ(nystrom.estimate.posterior.solver_tag, SolverTag::Nystrom);
}

TEST(Pipeline, Deterministic) {
  const SyntheticProblem p = generate(small_spec(200, 4));
  RunConfig c = config_for(p, 4, SolverKind::Truncated);
  const PipelineRun a = run_pipeline(p, c);
  const PipelineRun b = run_pipeline(p, c);
  EXPECT_EQ(a.estimate.posterior.mf_estimates, b.estimate.posterior.mf_estimates);
  EXPECT_EQ(a.estimate.posterior.stddevs, b.estimate.posterior.stddevs);
}

TEST(Pipeline, MetricsUseOriginalCoordinates) {
  const SyntheticProblem p = generate(small_spec(150, 3));
  const Matrix mf = p.true_data + 0.05 * oracle::random_points(150, 5, 2);
  const NormalizedDataset nd = normalize(Dataset(p.lf_data), NormalizationMode::PerInstanceUnitNorm);
  const Matrix lf_back = nd.spec.invert(nd.data.lf());
  const Matrix mf_back = nd.spec.invert(nd.spec.apply(mf));
  const ErrorReport a = error_report(p.lf_data, mf, p.true_data, ErrorMetric::ComponentRelAbs);
  const ErrorReport b = error_report(lf_back, mf_back, p.true_data, ErrorMetric::ComponentRelAbs);
  EXPECT_NEAR(a.reduction, b.reduction, 1e-10);

  RunConfig c = config_for(p, 3);
  c.normalization = NormalizationMode::PerInstanceUnitNorm;
  c.sigma = normalized_sigma(p, c.normalization);
  const PipelineRun run = run_pipeline(p, c);
  EXPECT_GT(run.report.reduction, 50.0);
}

TEST(Pipeline, MoreObservationsDoNotHurt) {
  GeneratorSpec s;
  s.clusters = 20;
  s.seed = 4;
  const SyntheticProblem p = generate(s);
  double previous = std::numeric_limits<double>::infinity();
  for (Index m : {5, 10, 20}) {
    const double mean_mf = run_pipeline(p, config_for(p, m)).report.mean_mf;
    EXPECT_LE(mean_mf, previous + 1e-6) << "M = " << m;
    previous = mean_mf;
  }
}

TEST(Pipeline, NormalizedSigma) {
  const SyntheticProblem p = generate(small_spec(100, 3));
  EXPECT_EQ(normalized_sigma(p, NormalizationMode::None), p.hf_noise_sigma);
  const NormalizedDataset nd = normalize(Dataset(p.lf_data), NormalizationMode::PerComponentStandardize);
  EXPECT_NEAR(normalized_sigma(p, NormalizationMode::PerComponentStandardize),
              p.hf_noise_sigma / nd.spec.stddev.mean(), 1e-15);
}

#include "mfgl/core_types.hpp"
#include "mfgl/matrix_io.hpp"
#include "mfgl/parallel.hpp"
#include "mfgl/random.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

using namespace mfgl;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mfgl::Error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Dataset, RejectsInvalidShapesAndValues) {
  EXPECT_EQ(code_of([] { Dataset(Matrix::Zero(1, 2)); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { Dataset(Matrix::Zero(3, 0)); }), ErrorCode::InvalidArgument);
  Matrix bad = Matrix::Zero(3, 2);
  bad(1, 1) = std::nan("");
  EXPECT_EQ(code_of([&] { Dataset{bad}; }), ErrorCode::NonFiniteInput);
  EXPECT_EQ(code_of([] { Dataset(Matrix::Zero(3, 2), Matrix::Zero(1, 3)); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { Dataset(Matrix::Zero(3, 2), Matrix::Zero(4, 2)); }),
            ErrorCode::RowCountMismatch);
  EXPECT_EQ(code_of([] { Dataset(Matrix::Zero(3, 2), std::nullopt, std::vector<std::string>{"a"}); }),
            ErrorCode::RowCountMismatch);
  const Dataset ok(Matrix::Zero(3, 2), Matrix::Zero(2, 2));
  EXPECT_EQ(ok.n(), 3);
  EXPECT_EQ(ok.m(), 2);
  EXPECT_EQ(ok.dim(), 2);
}

TEST(Normalize, StandardizeTwoPoints) {
  Matrix lf(2, 1);
  lf << 1, 3;
  const NormalizedDataset nd = normalize(Dataset(lf), NormalizationMode::PerComponentStandardize);
  EXPECT_DOUBLE_EQ(nd.data.lf()(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(nd.data.lf()(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(nd.spec.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(nd.spec.stddev(0), 1.0);
}

TEST(Normalize, UnitNormThreeFourFive) {
  Matrix lf(2, 2);
  lf << 3, 4, 1, 0;
  const NormalizedDataset nd = normalize(Dataset(lf), NormalizationMode::PerInstanceUnitNorm);
  EXPECT_NEAR(nd.data.lf()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(nd.data.lf()(0, 1), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(nd.spec.scales(0), 5.0);
}

TEST(Normalize, HighFidelityUsesLowFidelityStatistics) {
  Matrix lf(3, 1), hf(1, 1);
  lf << 1, 3, 5;
  hf << 7;
  const NormalizedDataset s =
      normalize(Dataset(lf, hf), NormalizationMode::PerComponentStandardize);
  const double mean = 3.0, sd = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR((*s.data.hf())(0, 0), (7.0 - mean) / sd, 1e-14);

  Matrix lf2(2, 2), hf2(1, 2);
  lf2 << 3, 4, 1, 1;
  hf2 << 6, 8;
  const NormalizedDataset u = normalize(Dataset(lf2, hf2), NormalizationMode::PerInstanceUnitNorm);
  EXPECT_NEAR((*u.data.hf())(0, 0), 1.2, 1e-15);
  EXPECT_NEAR((*u.data.hf())(0, 1), 1.6, 1e-15);
}

TEST(Normalize, RoundTripIsIdentity) {
  const Matrix lf = oracle::random_points(4, 3, 11) + Matrix::Constant(4, 3, 2.0);
  const Matrix hf = oracle::random_points(2, 3, 12);
  for (auto mode : {NormalizationMode::PerComponentStandardize, NormalizationMode::PerInstanceUnitNorm,
                    NormalizationMode::None}) {
    const NormalizedDataset nd = normalize(Dataset(lf, hf), mode);
    const Dataset back = denormalize(nd.data, nd.spec);
    EXPECT_LE(oracle::rel(back.lf(), lf), 1e-12);
    EXPECT_LE(oracle::rel(*back.hf(), hf), 1e-12);
  }
}

TEST(Normalize, StandardizingTwiceIsStable) {
  const Matrix lf = 5.0 * oracle::random_points(30, 4, 3) + Matrix::Constant(30, 4, -7.0);
  const NormalizedDataset once = normalize(Dataset(lf), NormalizationMode::PerComponentStandardize);
  const NormalizedDataset twice =
      normalize(once.data, NormalizationMode::PerComponentStandardize);
  EXPECT_LT(twice.spec.mean.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((twice.spec.stddev.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Normalize, FlagsDegenerateInputs) {
  Matrix flat(3, 2);
  flat << 1, 2, 1, 3, 1, 4;
  try {
    normalize(Dataset(flat), NormalizationMode::PerComponentStandardize);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
    EXPECT_EQ(e.index(), 0);
  }
  Matrix zero_row(2, 2);
  zero_row << 1, 1, 0, 0;
  try {
    normalize(Dataset(zero_row), NormalizationMode::PerInstanceUnitNorm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroNorm);
    EXPECT_EQ(e.index(), 1);
  }
}

TEST(HyperParameters, KappaAndValidation) {
  const HyperParameters hp(0.1, 3.0, 0.5, 2.0);
  EXPECT_DOUBLE_EQ(hp.kappa(), 3.0 * 0.25);
  EXPECT_DOUBLE_EQ(hp.r(), 3.0);
  EXPECT_EQ(code_of([] { HyperParameters(0.0, 1, 1); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { HyperParameters(1, -1, 1); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { HyperParameters(1, 1, 0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { HyperParameters(1, 1, 1, 0.5); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { HyperParameters(1, 1, 1, 2, 1.0); }), ErrorCode::InvalidArgument);
  EXPECT_DOUBLE_EQ(hp.with_omega(7.0).omega(), 7.0);
}

TEST(Displacements, SubtractsAlignedRows) {
  Matrix lf(2, 2), hf(1, 2);
  lf << 1, 1, 5, 5;
  hf << 2, 0;
  const Matrix phi = displacements(Dataset(lf, hf)).phi_hat;
  EXPECT_EQ(phi.rows(), 1);
  EXPECT_DOUBLE_EQ(phi(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(phi(0, 1), -1.0);
  EXPECT_EQ(code_of([&] { displacements(Dataset(lf)); }), ErrorCode::MissingHighFidelity);
  EXPECT_TRUE(displacements(Dataset(lf, lf.topRows(1))).phi_hat.isZero(0.0));
}

TEST(Displacements, MatchesElementwiseSubtraction) {
  const Matrix lf = oracle::random_points(5, 2, 8);
  const Matrix hf = oracle::random_points(3, 2, 9);
  const Matrix phi = displacements(Dataset(lf, hf)).phi_hat;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j) EXPECT_EQ(phi(i, j), hf(i, j) - lf(i, j));
}

TEST(LiftObserved, ScattersIntoLeadingRows) {
  Matrix obs(2, 1);
  obs << 4, 5;
  const Matrix lifted = lift_observed(obs, 4);
  EXPECT_EQ(lifted.rows(), 4);
  EXPECT_EQ(lifted(1, 0), 5.0);
  EXPECT_EQ(lifted(3, 0), 0.0);
}

TEST(MatrixIo, CsvRoundTripIsExact) {
  Matrix m = oracle::random_points(6, 3, 21);
  m(0, 0) = 1e-300;
  m(1, 1) = -123456789.123456789;
  m(2, 2) = 0.1;
  const Matrix back = io::parse_csv(io::format_csv(m));
  EXPECT_EQ(back, m);
  const Matrix with_header = io::parse_csv(io::format_csv(m, {"a", "b", "c"}), true);
  EXPECT_EQ(with_header, m);
}

TEST(MatrixIo, BinaryLayoutAndRoundTrip) {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  std::stringstream ss;
  io::write_binary(ss, m);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 1u + 8u + 8u + 6u * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "MFGL");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 2);  // rows, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 3);
  double second;
  std::memcpy(&second, bytes.data() + 21 + 8, 8);
  EXPECT_EQ(second, 2.0);  // row-major
  std::stringstream in(bytes);
  EXPECT_EQ(io::read_binary(in), m);
}

TEST(MatrixIo, RejectsMalformedInput) {
  EXPECT_EQ(code_of([] { io::parse_csv("1,2\n3\n"); }), ErrorCode::FileFormat);
  EXPECT_EQ(code_of([] { io::parse_csv("1,x\n"); }), ErrorCode::FileFormat);
  std::stringstream bad("MFGX");
  EXPECT_EQ(code_of([&] { io::read_binary(bad); }), ErrorCode::FileFormat);
  EXPECT_EQ(code_of([] { io::read_matrix("/nonexistent/file.csv"); }), ErrorCode::FileOpen);
}

TEST(MatrixIo, FilesRoundTripThroughBothFormats) {
  const auto dir = std::filesystem::temp_directory_path() / "mfgl_io_test";
  std::filesystem::create_directories(dir);
  const Matrix m = oracle::random_points(7, 4, 5);
  io::write_matrix(dir / "m.bin", m);
  io::write_matrix(dir / "m.csv", io::read_matrix(dir / "m.bin"));
  io::write_matrix(dir / "m2.bin", io::read_matrix(dir / "m.csv"));
  EXPECT_EQ(io::read_matrix(dir / "m2.bin"), m);
  io::write_text(dir / "ids.txt", "a\nb\n\nc\n");
  EXPECT_EQ(io::read_ids(dir / "ids.txt"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
  std::vector<double> one(1000), four(1000);
  auto body = [](std::vector<double>& out) {
    return [&out](std::ptrdiff_t i) { out[static_cast<std::size_t>(i)] = std::sin(0.1 * i); };
  };
  set_thread_count(1);
  parallel_for(0, 1000, body(one), 8);
  set_thread_count(4);
  parallel_for(0, 1000, body(four), 8);
  set_thread_count(0);
  EXPECT_EQ(one, four);
}

TEST(Parallel, PropagatesExceptions) {
  set_thread_count(3);
  EXPECT_THROW(parallel_for(0, 100,
                            [](std::ptrdiff_t i) {
                              if (i == 57) throw Error(ErrorCode::ZeroDegree, "boom");
                            },
                            1),
               Error);
  set_thread_count(0);
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(42), b(42);
  EXPECT_EQ(a.normal_matrix(3, 3), b.normal_matrix(3, 3));
  for (int i = 0; i < 100; ++i) {
    const auto x = a.below(7);
    EXPECT_LT(x, 7u);
    EXPECT_EQ(x, b.below(7));
  }
}

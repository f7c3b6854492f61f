#include <gtest/gtest.h>

#include <random>

#include "cvep/covariance.hpp"
#include "cvep/umm.hpp"

using namespace cvep;

namespace {

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

// Epochs of a channel-mixed AR(1) process, time-major features.
Matrix colored_epochs(Index k, Index c, Index n, std::mt19937_64& rng) {
  const Matrix mix = random_matrix(c, c, rng) + 2.0 * Matrix::Identity(c, c);
  Matrix out(k, c * n);
  for (Index e = 0; e < k; ++e) {
    Matrix x = random_matrix(c, n, rng);
    for (Index t = 1; t < n; ++t) x.col(t) += 0.7 * x.col(t - 1);
    x = mix * x;
    out.row(e) = Eigen::Map<const Vector>(x.data(), c * n).transpose();
  }
  return out;
}

// Tapered block-Toeplitz matrix assembled entry by entry from the epochs.
Matrix dense_structured(const Matrix& epochs, Index c, Index n, Index taper_len) {
  const Index d = c * n;
  std::vector<Matrix> b(static_cast<std::size_t>(n), Matrix::Zero(c, c));
  for (Index k = 0; k < epochs.rows(); ++k) {
    for (Index l = 0; l < n; ++l) {
      for (Index t = 0; t + l < n; ++t) {
        b[static_cast<std::size_t>(l)] +=
            epochs.row(k).segment((t + l) * c, c).transpose() * epochs.row(k).segment(t * c, c);
      }
    }
  }
  Matrix s(d, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const Index l = std::abs(i - j);
      const double w = std::max(0.0, 1.0 - static_cast<double>(l) / static_cast<double>(taper_len)) /
                       (static_cast<double>(epochs.rows()) * static_cast<double>(n - l));
      const Matrix& blk = b[static_cast<std::size_t>(l)];
      s.block(i * c, j * c, c, c) = w * (i >= j ? blk : Matrix(blk.transpose()));
    }
  }
  return s;
}

}  // namespace

TEST(LagStatistics, SlicedTrialMatchesEpochMatrix) {
  std::mt19937_64 rng(1);
  Trial t;
  t.samples = random_matrix(3, 400, rng);
  const auto ep = slice_epochs(t, 30);
  const auto fast = ep.lag_statistics();
  const auto slow = lag_statistics(ep.epochs(), 3, 30);
  EXPECT_EQ(fast.n_epochs, slow.n_epochs);
  EXPECT_NEAR(fast.sum_norm4, slow.sum_norm4, 1e-9 * slow.sum_norm4);
  for (std::size_t l = 0; l < slow.lag_sums.size(); ++l) {
    EXPECT_LT((fast.lag_sums[l] - slow.lag_sums[l]).norm(), 1e-10 * slow.lag_sums[0].norm()) << "lag " << l;
  }
}

TEST(LagStatistics, MergeAddsMoments) {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(5, 12, rng), b = random_matrix(7, 12, rng);
  Matrix ab(12, 12);
  ab << a, b;
  auto s = lag_statistics(a, 2, 6);
  s.merge(lag_statistics(b, 2, 6));
  const auto all = lag_statistics(ab, 2, 6);
  EXPECT_EQ(s.n_epochs, 12.0);
  for (std::size_t l = 0; l < 6; ++l) EXPECT_LT((s.lag_sums[l] - all.lag_sums[l]).norm(), 1e-12);
  EXPECT_THROW(s.merge(lag_statistics(random_matrix(3, 12, rng), 3, 4)), Error);
}

TEST(Covariance, MatchesEntrywiseOracleAndLedoitWolf) {
  std::mt19937_64 rng(3);
  const Index c = 3, n = 10;
  const Matrix ep = colored_epochs(40, c, n, rng);
  const Matrix s_t = dense_structured(ep, c, n, n);
  const auto cov = covariance_from_statistics(lag_statistics(ep, c, n), std::nullopt, n);

  // Shrinkage intensity from its dense definition.
  const double d = static_cast<double>(c * n), k = static_cast<double>(ep.rows());
  const double nu = s_t.trace() / d;
  double beta2 = 0.0;
  for (Index i = 0; i < ep.rows(); ++i) {
    const Vector x = ep.row(i).transpose();
    beta2 += (x * x.transpose() - s_t).squaredNorm();
  }
  beta2 /= k * k;
  const double delta2 = (s_t - nu * Matrix::Identity(c * n, c * n)).squaredNorm();
  const double gamma = std::clamp(beta2 / delta2, 0.0, 1.0);
  EXPECT_NEAR(cov.shrinkage_gamma(), gamma, 1e-10);
  EXPECT_GT(gamma, 0.0);
  EXPECT_LT(gamma, 1.0);

  Matrix expected = (1.0 - gamma) * s_t;
  expected.diagonal().array() += gamma * nu;
  EXPECT_LT((cov.dense() - expected).norm(), 1e-10 * expected.norm());
}

TEST(Covariance, WhiteEpochsGiveScaledIdentity) {
  std::mt19937_64 rng(4);
  const double sigma = 1.7;
  const Index c = 4, n = 54;
  const Matrix ep = sigma * random_matrix(10000, c * n, rng);
  const auto cov = covariance_from_statistics(lag_statistics(ep, c, n), 0.0);
  const auto& b = cov.blocks();
  EXPECT_LT((b[0] - sigma * sigma * Matrix::Identity(c, c)).norm() / (sigma * sigma * std::sqrt(c)), 0.05);
  double off = 0.0;
  for (std::size_t l = 1; l < b.size(); ++l) off += b[l].squaredNorm();
  EXPECT_LT(std::sqrt(off) / (sigma * sigma * std::sqrt(c)), 0.05);
}

TEST(Covariance, LevinsonMatchesDenseFactorization) {
  std::mt19937_64 rng(5);
  const Index c = 8, n = 54;
  const Matrix ep = colored_epochs(300, c, n, rng);
  const auto cov = covariance_from_statistics(lag_statistics(ep, c, n));
  const Matrix rhs = random_matrix(c * n, 3, rng);
  const Matrix dense = cov.dense();
  ASSERT_EQ(dense.rows(), 432);
  EXPECT_LT((dense - dense.transpose()).norm(), 1e-14 * dense.norm());
  const Matrix ref = dense.llt().solve(rhs);
  EXPECT_LT((cov.solve(rhs) - ref).norm() / ref.norm(), 1e-8);
  // Dense models solve through their Cholesky factor.
  EXPECT_LT((CovModel::from_dense(dense).solve(rhs) - ref).norm() / ref.norm(), 1e-12);
}

TEST(Covariance, FullShrinkageIsScaledIdentity) {
  std::mt19937_64 rng(6);
  const Matrix ep = colored_epochs(20, 2, 8, rng);
  const auto st = lag_statistics(ep, 2, 8);
  const auto cov = covariance_from_statistics(st, 1.0);
  const double nu = st.lag_sums[0].trace() / (2.0 * st.n_epochs * 8.0);
  EXPECT_LT((cov.dense() - nu * Matrix::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-15 * nu);
  const Vector v = random_matrix(16, 1, rng);
  EXPECT_LT((cov.solve(v) - v / nu).norm(), 1e-12 * v.norm() / nu);
}

TEST(Covariance, TaperScalesBlocks) {
  std::mt19937_64 rng(7);
  const Matrix ep = colored_epochs(30, 2, 12, rng);
  const auto st = lag_statistics(ep, 2, 12);
  const auto cov = covariance_from_statistics(st, 0.0, 6);
  EXPECT_EQ(cov.taper(), linear_taper(12, 6));
  for (std::size_t l = 6; l < 12; ++l) EXPECT_TRUE(cov.blocks()[l].isZero(0.0));
  const Matrix raw3 = st.lag_sums[3] / (30.0 * 9.0);
  EXPECT_LT((cov.blocks()[3] - 0.5 * raw3).norm(), 1e-12 * raw3.norm());
}

TEST(Covariance, Errors) {
  std::mt19937_64 rng(8);
  const Matrix one = random_matrix(1, 6, rng);
  try {
    covariance_from_statistics(lag_statistics(one, 2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientEpochs);
  }
  const auto st = lag_statistics(random_matrix(4, 6, rng), 2, 3);
  EXPECT_THROW(covariance_from_statistics(st, 1.5), Error);
  EXPECT_THROW(covariance_from_statistics(lag_statistics(Matrix::Zero(4, 6), 2, 3)), Error);
  EXPECT_THROW(lag_statistics(one, 4, 3), Error);
  EXPECT_THROW(CovModel::from_dense(-Matrix::Identity(3, 3)), Error);
}

#include "damc/kernels.hpp"

#include <algorithm>
#include <limits>

namespace damc::kernels {

namespace {

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

double ordered_sum(const std::vector<double>& partial) {
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace

double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta) {
  const std::size_t n = data.n();
  const std::size_t chunks = chunk_count(n);
  std::vector<double> partial(chunks, 0.0);
  const Matrix& x = data.covariates();
  const Vector& y = data.responses();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const auto begin = static_cast<Eigen::Index>(c) * static_cast<Eigen::Index>(kChunk);
    const auto len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kChunk), x.rows() - begin);
    const Vector t = x.middleRows(begin, len) * theta;
    partial[static_cast<std::size_t>(c)] = model.log_density_sum(
        std::span<const double>(t.data(), static_cast<std::size_t>(len)),
        std::span<const double>(y.data() + begin, static_cast<std::size_t>(len)));
  }
  return ordered_sum(partial);
}

double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta,
                       std::span<const std::size_t> rows) {
  const std::size_t chunks = chunk_count(rows.size());
  std::vector<double> partial(chunks, 0.0);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = std::min(rows.size(), begin + kChunk);
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t k = rows[i];
      sum += model.log_density(data.row(k).dot(theta), data.response(k));
    }
    partial[static_cast<std::size_t>(c)] = sum;
  }
  return ordered_sum(partial);
}

void log_density_gradient_hessian(const PredictorModel& model, const Dataset& data,
                                  const Theta& theta, Vector& gradient, Matrix& hessian) {
  const Matrix& x = data.covariates();
  const Vector& y = data.responses();
  const auto p = x.cols();
  const std::size_t chunks = chunk_count(data.n());
  std::vector<Vector> grads(chunks, Vector::Zero(p));
  std::vector<Matrix> hess(chunks, Matrix::Zero(p, p));

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const auto begin = static_cast<Eigen::Index>(c) * static_cast<Eigen::Index>(kChunk);
    const auto len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kChunk), x.rows() - begin);
    const auto block = x.middleRows(begin, len);
    const Vector t = block * theta;
    Vector w1(len);
    Vector w2(len);
    for (Eigen::Index i = 0; i < len; ++i) {
      const Derivatives d = model.derivatives(t[i], y[begin + i]);
      w1[i] = d.first;
      w2[i] = d.second;
    }
    grads[static_cast<std::size_t>(c)] = block.transpose() * w1;
    hess[static_cast<std::size_t>(c)] = block.transpose() * w2.asDiagonal() * block;
  }
  gradient = Vector::Zero(p);
  hessian = Matrix::Zero(p, p);
  for (std::size_t c = 0; c < chunks; ++c) {
    gradient += grads[c];
    hessian += hess[c];
  }
}

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2) {
  constexpr Eigen::Index kRows = 1024;
  const Eigen::Index n = points.rows();
  const Vector centroid_norms = centroids.rowwise().squaredNorm();
  const auto chunks = (n + kRows - 1) / kRows;

#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kRows;
    const Eigen::Index len = std::min(kRows, n - begin);
    const auto block = points.middleRows(begin, len);
    // |x - c|^2 = |x|^2 - 2 x.c + |c|^2; |x|^2 is constant per row.
    Matrix scores = -2.0 * (block * centroids.transpose());
    scores.rowwise() += centroid_norms.transpose();
    for (Eigen::Index i = 0; i < len; ++i) {
      Eigen::Index best = 0;
      scores.row(i).minCoeff(&best);
      const auto k = static_cast<std::size_t>(begin + i);
      assignment[k] = static_cast<int>(best);
      distance2[k] = (block.row(i) - centroids.row(best)).squaredNorm();
    }
  }
}

void cluster_moments(const Matrix& covariates, const std::vector<std::vector<std::size_t>>& members,
                     const Matrix& centroids, Matrix& dev_sums, std::vector<Matrix>& dev_outer_sums) {
  const auto K = static_cast<std::ptrdiff_t>(members.size());
  const auto p = covariates.cols();
  dev_sums = Matrix::Zero(K, p);
  dev_outer_sums.assign(static_cast<std::size_t>(K), Matrix::Zero(p, p));

#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t c = 0; c < K; ++c) {
    Vector sum = Vector::Zero(p);
    Matrix outer = Matrix::Zero(p, p);
    for (std::size_t k : members[static_cast<std::size_t>(c)]) {
      const Vector dev = (covariates.row(static_cast<Eigen::Index>(k)) - centroids.row(c)).transpose();
      sum += dev;
      outer.selfadjointView<Eigen::Lower>().rankUpdate(dev);
    }
    outer.triangularView<Eigen::StrictlyUpper>() = outer.transpose();
    dev_sums.row(c) = sum.transpose();
    dev_outer_sums[static_cast<std::size_t>(c)] = std::move(outer);
  }
}

namespace serial {

double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta) {
  double sum = 0.0;
  for (std::size_t k = 0; k < data.n(); ++k) {
    double t = 0.0;
    for (std::size_t j = 0; j < data.p(); ++j)
      t += data.covariates()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) *
           theta[static_cast<Eigen::Index>(j)];
    sum += model.log_density(t, data.response(k));
  }
  return sum;
}

double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta,
                       std::span<const std::size_t> rows) {
  double sum = 0.0;
  for (std::size_t k : rows) sum += model.log_density(data.row(k).dot(theta), data.response(k));
  return sum;
}

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      double d = 0.0;
      for (Eigen::Index j = 0; j < points.cols(); ++j) {
        const double diff = points(i, j) - centroids(c, j);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best_c;
    distance2[static_cast<std::size_t>(i)] = best;
  }
}

void cluster_moments(const Matrix& covariates, const std::vector<std::vector<std::size_t>>& members,
                     const Matrix& centroids, Matrix& dev_sums, std::vector<Matrix>& dev_outer_sums) {
  const auto K = static_cast<Eigen::Index>(members.size());
  const auto p = covariates.cols();
  dev_sums = Matrix::Zero(K, p);
  dev_outer_sums.assign(static_cast<std::size_t>(K), Matrix::Zero(p, p));
  for (Eigen::Index c = 0; c < K; ++c) {
    for (std::size_t k : members[static_cast<std::size_t>(c)]) {
      for (Eigen::Index a = 0; a < p; ++a) {
        const double da = covariates(static_cast<Eigen::Index>(k), a) - centroids(c, a);
        dev_sums(c, a) += da;
        for (Eigen::Index b = 0; b < p; ++b) {
          const double db = covariates(static_cast<Eigen::Index>(k), b) - centroids(c, b);
          dev_outer_sums[static_cast<std::size_t>(c)](a, b) += da * db;
        }
      }
    }
  }
}

}  // namespace serial

}  // namespace damc::kernels

#include "damc/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace damc {

namespace {
constexpr double kGpJitter = 1e-10;
}  // namespace

SurrogateBackend parse_surrogate_backend(std::string_view text) {
  if (text == "linear" || text == "lr") return SurrogateBackend::linear;
  if (text == "gp") return SurrogateBackend::gp;
  throw ConfigError("unknown surrogate backend '" + std::string(text) + "' (linear|gp)");
}

std::string_view to_string(SurrogateBackend backend) {
  return backend == SurrogateBackend::linear ? "linear" : "gp";
}

Vector quadratic_features(const Vector& z) {
  const auto d = z.size();
  Vector f(1 + d + d * (d + 1) / 2);
  f[0] = 1.0;
  f.segment(1, d) = z;
  Eigen::Index at = 1 + d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) f[at++] = z[i] * z[j];
  return f;
}

std::size_t SurrogateModel::feature_count() const noexcept {
  const std::size_t d = dimension();
  return backend_ == SurrogateBackend::linear ? 1 + d + d * (d + 1) / 2 : d;
}

Vector SurrogateModel::standardize(const Theta& theta) const {
  return ((theta - mean_).array() / scale_.array()).matrix();
}

DiscrepancyPrediction SurrogateModel::predict(const Theta& theta) const {
  if (n_train_ == 0) throw ConfigError("surrogate used before fitting");
  if (static_cast<std::size_t>(theta.size()) != dimension())
    throw ConfigError("surrogate: theta has the wrong dimension");
  const Vector z = standardize(theta);
  DiscrepancyPrediction out;
  out.extrapolating = z.norm() > extrapolation_radius_;
  if (backend_ == SurrogateBackend::linear) {
    out.e_hat = quadratic_features(z).dot(weights_);
    out.cost = 1;
  } else {
    const double inv = 1.0 / (2.0 * length_scale_ * length_scale_);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
      const double d2 = (inputs_.row(i).transpose() - z).squaredNorm();
      // The jitter is part of the kernel at coincident inputs, so training points are interpolated.
      acc += alpha_[i] * (std::exp(-d2 * inv) + (d2 == 0.0 ? kGpJitter : 0.0));
    }
    out.e_hat = e_mean_ + signal_variance_ * acc;
    out.cost = n_train_;
  }
  return out;
}

DiscrepancyPrediction predict_discrepancy(const SurrogateModel& model, const Theta& theta) {
  return model.predict(theta);
}

SurrogateModel fit_surrogate(std::span<const DiscrepancySample> samples, SurrogateBackend backend) {
  const auto start = std::chrono::steady_clock::now();
  if (samples.empty()) throw ConfigError("fit_surrogate: no training samples");
  const auto d = samples.front().theta.size();
  const auto n = static_cast<Eigen::Index>(samples.size());
  const std::size_t features =
      backend == SurrogateBackend::linear ? static_cast<std::size_t>(1 + d + d * (d + 1) / 2)
                                          : static_cast<std::size_t>(d);
  if (samples.size() < std::max<std::size_t>(10, features + 1))
    throw ConfigError("fit_surrogate: need at least " + std::to_string(std::max<std::size_t>(10, features + 1)) +
                      " samples, got " + std::to_string(samples.size()));

  Matrix thetas(n, d);
  Vector e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.theta.size() != d) throw ConfigError("fit_surrogate: inconsistent theta dimension");
    if (!std::isfinite(s.e_value)) throw ConfigError("fit_surrogate: non-finite discrepancy");
    thetas.row(i) = s.theta.transpose();
    e[i] = s.e_value;
  }

  SurrogateModel model;
  model.backend_ = backend;
  model.n_train_ = samples.size();
  model.mean_ = thetas.colwise().mean().transpose();
  model.scale_ = Vector::Ones(d);
  bool any_spread = false;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt((thetas.col(j).array() - model.mean_[j]).square().sum() / static_cast<double>(n));
    if (sd > 0.0) {
      model.scale_[j] = sd;
      any_spread = true;
    }
  }
  if (!any_spread) throw ConfigError("fit_surrogate: all training inputs are identical");

  Matrix z(n, d);
  for (Eigen::Index i = 0; i < n; ++i) z.row(i) = model.standardize(thetas.row(i).transpose()).transpose();
  model.extrapolation_radius_ = z.rowwise().norm().maxCoeff() * (1.0 + 1e-12);

  Vector fitted(n);
  if (backend == SurrogateBackend::linear) {
    Matrix design(n, static_cast<Eigen::Index>(features));
    for (Eigen::Index i = 0; i < n; ++i) design.row(i) = quadratic_features(z.row(i).transpose()).transpose();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
    model.rank_deficient_ = cod.rank() < design.cols();
    model.weights_ = cod.solve(e);
    fitted = design * model.weights_;
  } else {
    std::vector<double> distances;
    distances.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) distances.push_back((z.row(i) - z.row(j)).norm());
    auto mid = distances.begin() + static_cast<std::ptrdiff_t>(distances.size() / 2);
    std::nth_element(distances.begin(), mid, distances.end());
    const double median = *mid > 0.0 ? *mid : 1.0;
    model.e_mean_ = e.mean();
    const double var = (e.array() - model.e_mean_).square().sum() / static_cast<double>(n - 1);
    model.signal_variance_ = var > 0.0 ? var : 1.0;
    const Vector centred = (e.array() - model.e_mean_).matrix();

    auto build_kernel = [&](double length) {
      const double inv = 1.0 / (2.0 * length * length);
      Matrix k(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = 1.0 + kGpJitter;
        for (Eigen::Index j = 0; j < i; ++j) {
          const double v = std::exp(-(z.row(i) - z.row(j)).squaredNorm() * inv);
          k(i, j) = v;
          k(j, i) = v;
        }
      }
      return k;
    };

    // Length scale: fraction of the median pairwise distance with the
    // smallest leave-one-out error (r_i = alpha_i / [K^-1]_ii).
    double best_score = std::numeric_limits<double>::infinity();
    model.length_scale_ = median;
    for (const double factor : {1.0, 0.5, 0.25, 0.125}) {
      const Matrix k = build_kernel(factor * median);
      Eigen::LLT<Matrix> llt(k);
      if (llt.info() != Eigen::Success) continue;
      const Matrix k_inv = llt.solve(Matrix::Identity(n, n));
      const Vector a = k_inv * centred;
      const double score = (a.array() / k_inv.diagonal().array()).square().sum();
      if (std::isfinite(score) && score < best_score) {
        best_score = score;
        model.length_scale_ = factor * median;
      }
    }

    const Matrix kernel = build_kernel(model.length_scale_);
    // Work with the unit-variance kernel; alpha absorbs 1/signal_variance.
    Eigen::LLT<Matrix> llt(kernel);
    if (llt.info() != Eigen::Success)
      throw NumericalError("fit_surrogate: GP kernel matrix is not positive definite with jitter");
    Vector alpha = llt.solve(centred);
    // Iterative refinement recovers the digits lost to conditioning.
    for (int it = 0; it < 3; ++it) alpha += llt.solve(centred - kernel * alpha);
    model.alpha_ = alpha / model.signal_variance_;
    model.inputs_ = std::move(z);
    fitted = (model.e_mean_ + (model.signal_variance_ * (kernel * model.alpha_)).array()).matrix();
  }
  model.residual_rms_ = std::sqrt((fitted - e).squaredNorm() / static_cast<double>(n));
  if (!std::isfinite(model.residual_rms_)) throw NumericalError("fit_surrogate: non-finite residuals");
  model.fit_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

namespace {

constexpr char kBlobMagic[4] = {'D', 'S', 'U', 'R'};
constexpr std::uint32_t kBlobVersion = 1;

class BlobWriter {
 public:
  template <class T>
  void put(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_vector(const Vector& v) {
    put<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
    out_.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
  std::string take() { return std::move(out_); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }

 private:
  std::string out_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string_view in) : in_(in) {}
  template <class T>
  T get() {
    if (at_ + sizeof(T) > in_.size()) throw ConfigError("surrogate blob truncated");
    T v;
    std::memcpy(&v, in_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  Vector get_vector() {
    const auto size = get<std::uint64_t>();
    if (at_ + size * sizeof(double) > in_.size()) throw ConfigError("surrogate blob truncated");
    Vector v(static_cast<Eigen::Index>(size));
    std::memcpy(v.data(), in_.data() + at_, size * sizeof(double));
    at_ += size * sizeof(double);
    return v;
  }
  void expect(const char* p, std::size_t n) {
    if (at_ + n > in_.size() || std::memcmp(in_.data() + at_, p, n) != 0)
      throw ConfigError("not a surrogate blob");
    at_ += n;
  }

 private:
  std::string_view in_;
  std::size_t at_ = 0;
};

}  // namespace

std::string SurrogateModel::serialize() const {
  BlobWriter w;
  w.raw(kBlobMagic, 4);
  w.put(kBlobVersion);
  w.put<std::uint32_t>(backend_ == SurrogateBackend::linear ? 0u : 1u);
  w.put<std::uint64_t>(n_train_);
  w.put_vector(mean_);
  w.put_vector(scale_);
  w.put(extrapolation_radius_);
  w.put_vector(weights_);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(inputs_.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(inputs_.cols()));
  w.raw(reinterpret_cast<const char*>(inputs_.data()), sizeof(double) * static_cast<std::size_t>(inputs_.size()));
  w.put_vector(alpha_);
  w.put(e_mean_);
  w.put(signal_variance_);
  w.put(length_scale_);
  w.put(fit_cost_T_);
  w.put(residual_rms_);
  return w.take();
}

SurrogateModel SurrogateModel::deserialize(std::string_view blob) {
  BlobReader r(blob);
  r.expect(kBlobMagic, 4);
  if (r.get<std::uint32_t>() != kBlobVersion) throw ConfigError("unsupported surrogate blob version");
  SurrogateModel m;
  m.backend_ = r.get<std::uint32_t>() == 0u ? SurrogateBackend::linear : SurrogateBackend::gp;
  m.n_train_ = r.get<std::uint64_t>();
  m.mean_ = r.get_vector();
  m.scale_ = r.get_vector();
  m.extrapolation_radius_ = r.get<double>();
  m.weights_ = r.get_vector();
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  m.inputs_.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.inputs_.cols(); ++j)
    for (Eigen::Index i = 0; i < m.inputs_.rows(); ++i) m.inputs_(i, j) = r.get<double>();
  m.alpha_ = r.get_vector();
  m.e_mean_ = r.get<double>();
  m.signal_variance_ = r.get<double>();
  m.length_scale_ = r.get<double>();
  m.fit_cost_T_ = r.get<double>();
  m.residual_rms_ = r.get<double>();
  return m;
}

}  // namespace damc

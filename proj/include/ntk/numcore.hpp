#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ntk/error.hpp"

namespace ntk {

/// Dense symmetric matrix; validated on construction.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols(), errc::dimension_mismatch, "matrix must be square");
    require(m_.allFinite(), errc::format_error, "matrix has non-finite entries");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
      for (Eigen::Index j = i + 1; j < m_.cols(); ++j)
        require(std::abs(m_(i, j) - m_(j, i)) <= 1e-12 * scale, errc::format_error,
                "matrix is not symmetric");
    // Average out representation noise so downstream algebra sees an exactly
    // symmetric operand.
    m_ = ((m_ + m_.transpose()) * 0.5).eval();
  }

  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& mat() const { return m_; }

 private:
  Eigen::MatrixXd m_;
};

struct GevdSolution {
  std::vector<double> eigenvalues;  // descending
  Eigen::MatrixXd eigenvectors;     // dim x k, B-orthonormal columns
  int k = 0;
};

/// r + lambda_rel * (trace(r)/dim) * I
inline SymmetricMatrix regularize_covariance(const SymmetricMatrix& r, double lambda_rel) {
  require(lambda_rel >= 0.0, errc::negative_lambda, "lambda_rel must be nonnegative");
  Eigen::MatrixXd out = r.mat();
  const double ridge = lambda_rel * out.trace() / static_cast<double>(out.rows());
  out.diagonal().array() += ridge;
  return SymmetricMatrix(std::move(out));
}

namespace detail {

// Flip sign so the entry of largest magnitude is positive; ties by lowest index.
inline void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  if (v[best] < 0.0) v = -v;
}

}  // namespace detail

/// Solves A w = lambda B w for a symmetric pencil with B positive definite.
/// Cholesky-reduces to a standard symmetric problem on L^-1 A L^-T and
/// back-transforms, so returned vectors satisfy W^T B W = I. If the Cholesky
/// factorization of B fails, a trace-scaled ridge (1e-8, then 1e-4) is applied
/// before giving up.
inline GevdSolution solve_gevd(const SymmetricMatrix& a, const SymmetricMatrix& b, int k) {
  require(a.dim() == b.dim(), errc::dimension_mismatch, "pencil matrices differ in dimension");
  require(k >= 1 && k <= a.dim(), errc::k_out_of_range,
          "k must be in [1, dim], got " + std::to_string(k));

  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  for (const double ridge_rel : {0.0, 1e-8, 1e-4}) {
    Eigen::MatrixXd bmat = b.mat();
    if (ridge_rel > 0.0) {
      bmat.diagonal().array() += ridge_rel * bmat.trace() / static_cast<double>(bmat.rows());
    }
    llt.compute(bmat);
    if (llt.info() == Eigen::Success) {
      ok = true;
      break;
    }
  }
  require(ok, errc::not_positive_definite, "B-side matrix is not positive definite");

  const Eigen::MatrixXd l = llt.matrixL();
  // C = L^-1 A L^-T, symmetric.
  Eigen::MatrixXd c = l.triangularView<Eigen::Lower>().solve(a.mat());
  c = l.triangularView<Eigen::Lower>().solve(c.transpose().eval());
  c = ((c + c.transpose()) * 0.5).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  require(es.info() == Eigen::Success, errc::rank_deficient, "symmetric eigensolver failed");

  GevdSolution sol;
  sol.k = k;
  sol.eigenvalues.resize(static_cast<std::size_t>(k));
  sol.eigenvectors.resize(a.dim(), k);
  // Eigen returns ascending order; take the top k, descending.
  for (int i = 0; i < k; ++i) {
    const Eigen::Index src = a.dim() - 1 - i;
    sol.eigenvalues[static_cast<std::size_t>(i)] = es.eigenvalues()[src];
    Eigen::VectorXd w = l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors().col(src));
    detail::canonicalize_sign(w);
    sol.eigenvectors.col(i) = w;
  }
  return sol;
}

/// Sample Pearson correlation.
inline double pearson(const double* a, const double* b, std::size_t n) {
  require(n >= 2, errc::length_mismatch, "pearson needs at least 2 samples");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  require(saa > 0.0 && sbb > 0.0, errc::zero_variance, "pearson input has zero variance");
  return sab / std::sqrt(saa * sbb);
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), errc::length_mismatch, "pearson inputs differ in length");
  return pearson(a.data(), b.data(), a.size());
}

inline double pearson(const Eigen::Ref<const Eigen::VectorXd, 0, Eigen::InnerStride<>>& a,
                      const Eigen::Ref<const Eigen::VectorXd, 0, Eigen::InnerStride<>>& b) {
  require(a.size() == b.size(), errc::length_mismatch, "pearson inputs differ in length");
  if (a.innerStride() == 1 && b.innerStride() == 1)
    return pearson(a.data(), b.data(), static_cast<std::size_t>(a.size()));
  std::vector<double> av(static_cast<std::size_t>(a.size())), bv(static_cast<std::size_t>(b.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    av[static_cast<std::size_t>(i)] = a[i];
    bv[static_cast<std::size_t>(i)] = b[i];
  }
  return pearson(av.data(), bv.data(), av.size());
}

/// Nearest-rank percentile: sort ascending, return element ceil(p/100*n) - 1.
inline double nearest_rank_percentile(std::vector<double> values, double p) {
  require(!values.empty(), errc::empty_input, "percentile of empty list");
  require(p > 0.0 && p <= 100.0, errc::config_invalid, "percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::max<std::size_t>(rank, 1);
  return values[rank - 1];
}

/// Empirical null distribution; percentiles use the nearest-rank convention.
struct NullDistribution {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::string method;

  std::size_t n() const { return values.size(); }
  double percentile(double p) const { return nearest_rank_percentile(values, p); }
};

namespace detail {

inline double norm_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Average ranks of |values|; ties get the mean rank. Returns ranks scaled by 2
// so they are exact integers.
inline std::vector<long> double_ranks_abs(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(v[i]) < std::abs(v[j]); });
  std::vector<long> r2(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(v[order[j + 1]]) == std::abs(v[order[i]])) ++j;
    // ranks i+1 .. j+1 share the average (i+j+2)/2; doubled to stay integral.
    const long sum2 = static_cast<long>(i + j + 2);
    for (std::size_t t = i; t <= j; ++t) r2[order[t]] = sum2;
    i = j + 1;
  }
  return r2;
}

}  // namespace detail

/// Two-sided Wilcoxon signed-rank test. Zero differences are discarded; exact
/// enumeration over sign assignments for n <= 20, normal approximation with
/// tie correction above that. All-zero differences degenerate to p = 1.
inline double wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), errc::length_mismatch, "paired samples differ in length");
  std::vector<double> d;
  d.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double di = x[i] - y[i];
    if (di != 0.0) d.push_back(di);
  }
  if (d.empty()) return 1.0;
  const std::size_t n = d.size();
  require(n >= 5, errc::too_few_pairs,
          "need at least 5 nonzero differences, got " + std::to_string(n));

  const std::vector<long> r2 = detail::double_ranks_abs(d);
  long w2_pos = 0;  // doubled W+
  long total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += r2[i];
    if (d[i] > 0.0) w2_pos += r2[i];
  }

  if (n <= 20) {
    // Distribution of doubled W+ over all 2^n sign assignments, by convolution.
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long r = r2[i];
      for (long s = reach; s >= 0; --s) {
        if (count[static_cast<std::size_t>(s)] > 0.0)
          count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
      }
      reach += r;
    }
    const double denom = std::pow(2.0, static_cast<double>(n));
    double le = 0.0, ge = 0.0;
    for (long s = 0; s <= total2; ++s) {
      const double c = count[static_cast<std::size_t>(s)];
      if (s <= w2_pos) le += c;
      if (s >= w2_pos) ge += c;
    }
    return std::min(1.0, 2.0 * std::min(le, ge) / denom);
  }

  // Ties inflate neither mean nor the raw variance formula; apply the usual correction.
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> av(n);
    for (std::size_t i = 0; i < n; ++i) av[i] = std::abs(d[i]);
    std::sort(av.begin(), av.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && av[j + 1] == av[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double w_pos = static_cast<double>(w2_pos) / 2.0;
  const double z = (w_pos - mean) / std::sqrt(var);
  return std::min(1.0, std::max(2.0 * detail::norm_sf(std::abs(z)),
                                std::numeric_limits<double>::min()));
}

namespace detail {

inline double mw_u_statistic(const std::vector<double>& x, const std::vector<double>& y) {
  double u = 0.0;
  for (double xi : x)
    for (double yj : y) {
      if (xi > yj)
        u += 1.0;
      else if (xi == yj)
        u += 0.5;
    }
  return u;
}

}  // namespace detail

/// Two-sided Mann-Whitney U test. Exact enumeration of all group labelings for
/// n1 + n2 <= 16, normal approximation with tie correction otherwise.
inline double mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y) {
  require(!x.empty() && !y.empty(), errc::empty_group, "both groups must be nonempty");
  const std::size_t n1 = x.size(), n2 = y.size(), n = n1 + n2;
  const double u_obs = detail::mw_u_statistic(x, y);

  if (n <= 16) {
    std::vector<double> pooled;
    pooled.reserve(n);
    pooled.insert(pooled.end(), x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());

    // Iterate all C(n, n1) choices of which pooled positions form group one.
    std::vector<std::size_t> comb(n1);
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    double total = 0.0, le = 0.0, ge = 0.0;
    const double eps = 1e-9;
    while (true) {
      std::vector<double> gx, gy;
      gx.reserve(n1);
      gy.reserve(n2);
      std::size_t ci = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (ci < n1 && comb[ci] == i) {
          gx.push_back(pooled[i]);
          ++ci;
        } else {
          gy.push_back(pooled[i]);
        }
      }
      const double u = detail::mw_u_statistic(gx, gy);
      total += 1.0;
      if (u <= u_obs + eps) le += 1.0;
      if (u >= u_obs - eps) ge += 1.0;

      // next combination
      std::size_t k = n1;
      while (k > 0 && comb[k - 1] == n - n1 + k - 1) --k;
      if (k == 0) break;
      ++comb[k - 1];
      for (std::size_t t = k; t < n1; ++t) comb[t] = comb[t - 1] + 1;
    }
    return std::min(1.0, 2.0 * std::min(le, ge) / total);
  }

  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2),
               dn = static_cast<double>(n);
  double tie_term = 0.0;
  {
    std::vector<double> pooled;
    pooled.reserve(n);
    pooled.insert(pooled.end(), x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    std::sort(pooled.begin(), pooled.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && pooled[j + 1] == pooled[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double mean = dn1 * dn2 / 2.0;
  const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  require(var > 0.0, errc::zero_variance, "all pooled values identical");
  const double z = (u_obs - mean) / std::sqrt(var);
  return std::min(1.0, std::max(2.0 * detail::norm_sf(std::abs(z)),
                                std::numeric_limits<double>::min()));
}

}  // namespace ntk

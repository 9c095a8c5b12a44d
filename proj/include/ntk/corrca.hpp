#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ntk/cca.hpp"
#include "ntk/lagembed.hpp"
#include "ntk/numcore.hpp"
#include "ntk/timeseries.hpp"

namespace ntk {

/// Correlated component analysis: one spatial filter bank shared by all
/// subjects, maximizing average pairwise correlation.
struct CorrCaModel {
  Eigen::MatrixXd ws;  // (D * L) x K
  std::vector<double> eigenvalues;  // descending
  LagSpec eeg_spec;
  double reg_lambda = 0.0;

  int k() const { return static_cast<int>(ws.cols()); }
};

/// Accumulates the two CorrCA covariance sums over per-video-centered
/// blocks. The cross-sum over all subject pairs (i, j) including i = j
/// equals S'S for S = sum of subject matrices, which avoids the quadratic
/// pair loop.
class CorrCaCov {
 public:
  void add(const std::vector<Eigen::MatrixXd>& subjects, const std::string& video_id) {
    require(subjects.size() >= 2, errc::fewer_than_two_subjects,
            "CorrCA needs at least two subjects");
    const Eigen::Index t_len = subjects.front().rows();
    const Eigen::Index dim = subjects.front().cols();
    require(t_len > 0, errc::empty_input, "empty covariance block");
    for (const Eigen::MatrixXd& s : subjects)
      require(s.rows() == t_len && s.cols() == dim, errc::dimension_mismatch,
              "subjects differ in shape");
    if (a_.size() == 0) {
      a_ = Eigen::MatrixXd::Zero(dim, dim);
      b_ = Eigen::MatrixXd::Zero(dim, dim);
    }
    require(dim == a_.rows(), errc::dimension_mismatch,
            "covariance block dimensions changed between videos");

    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(t_len, dim);
    for (const Eigen::MatrixXd& s : subjects) {
      total += s;
      b_.noalias() += s.transpose() * s;
    }
    a_.noalias() += total.transpose() * total;
    n_subjects_ = static_cast<int>(subjects.size());
    videos_.push_back(video_id);
  }

  void merge(const CorrCaCov& other) {
    if (other.empty()) return;
    if (a_.size() == 0) {
      a_ = other.a_;
      b_ = other.b_;
    } else {
      require(a_.rows() == other.a_.rows(), errc::dimension_mismatch,
              "merging covariances of different dimensions");
      a_ += other.a_;
      b_ += other.b_;
    }
    n_subjects_ = other.n_subjects_;
    videos_.insert(videos_.end(), other.videos_.begin(), other.videos_.end());
  }

  const Eigen::MatrixXd& pooled_cross() const { return a_; }
  const Eigen::MatrixXd& pooled_auto() const { return b_; }
  int n_subjects() const { return n_subjects_; }
  const std::vector<std::string>& videos() const { return videos_; }
  bool empty() const { return a_.size() == 0; }

 private:
  Eigen::MatrixXd a_, b_;
  int n_subjects_ = 0;
  std::vector<std::string> videos_;
};

inline CorrCaModel fit_corrca_cov(const CorrCaCov& cov, int k, double reg_lambda,
                                  const LagSpec& eeg_spec = {}) {
  require(!cov.empty(), errc::empty_input, "no covariance blocks accumulated");
  require(reg_lambda >= 0.0, errc::negative_lambda, "reg_lambda must be nonnegative");
  const Eigen::Index dim = cov.pooled_auto().rows();
  require(k >= 1 && k <= dim, errc::k_out_of_range, "k must lie in [1, D*L]");

  const Eigen::MatrixXd b_reg =
      regularize_covariance(
          SymmetricMatrix(0.5 * (cov.pooled_auto() + cov.pooled_auto().transpose())),
          reg_lambda)
          .mat();
  GevdSolution sol = detail::gevd_or_rank_deficient(cov.pooled_cross(), b_reg, k);

  CorrCaModel model;
  model.ws = std::move(sol.eigenvectors);
  model.eigenvalues = std::move(sol.eigenvalues);
  model.eeg_spec = eeg_spec;
  model.reg_lambda = reg_lambda;
  return model;
}

/// Fits CorrCA on one centered, lag-embedded block per subject.
inline CorrCaModel fit_corrca(const std::vector<TimeSeriesMatrix>& subjects, int k,
                              double reg_lambda = 0.0) {
  require(subjects.size() >= 2, errc::fewer_than_two_subjects,
          "CorrCA needs at least two subjects");
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(subjects.size());
  for (const TimeSeriesMatrix& s : subjects) {
    s.validate();
    blocks.push_back(s.samples);
  }
  CorrCaCov cov;
  cov.add(blocks, subjects.front().video_id);
  return fit_corrca_cov(cov, k, reg_lambda);
}

namespace detail {

inline std::vector<Eigen::VectorXd> project_component(const CorrCaModel& model,
                                                      const std::vector<TimeSeriesMatrix>& subjects,
                                                      int component,
                                                      const std::vector<bool>* keep) {
  require(component >= 1 && component <= model.k(), errc::component_out_of_range,
          "component index out of range");
  require(subjects.size() >= 2, errc::fewer_than_two_subjects,
          "ISC needs at least two subjects");
  const Eigen::Index t_len = subjects.front().n_samples();
  std::vector<Eigen::VectorXd> proj;
  proj.reserve(subjects.size());
  for (const TimeSeriesMatrix& s : subjects) {
    require(s.n_channels() == model.ws.rows(), errc::dimension_mismatch,
            "subject does not match model filter dimension");
    require(s.n_samples() == t_len, errc::dimension_mismatch, "subjects differ in length");
    proj.push_back(s.samples * model.ws.col(component - 1));
  }
  if (keep != nullptr) {
    require(static_cast<Eigen::Index>(keep->size()) == t_len, errc::length_mismatch,
            "keep mask length does not match sample count");
    Eigen::Index n_keep = 0;
    for (const bool b : *keep) n_keep += b ? 1 : 0;
    require(n_keep >= 2, errc::series_too_short, "keep mask retains fewer than two samples");
    for (Eigen::VectorXd& p : proj) {
      Eigen::VectorXd sub(n_keep);
      Eigen::Index m = 0;
      for (Eigen::Index t = 0; t < t_len; ++t)
        if ((*keep)[static_cast<std::size_t>(t)]) sub[m++] = p[t];
      p = std::move(sub);
    }
  }
  return proj;
}

}  // namespace detail

/// Mean pairwise Pearson correlation of the filtered subject signals for
/// one component (1-based). An optional keep mask restricts the samples
/// entering the correlations (used to drop event-adjacent windows).
inline double isc(const CorrCaModel& model, const std::vector<TimeSeriesMatrix>& subjects,
                  int component, const std::vector<bool>* keep = nullptr) {
  const std::vector<Eigen::VectorXd> proj =
      detail::project_component(model, subjects, component, keep);
  const std::size_t n = proj.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sum += pearson(proj[i], proj[j]);
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

inline double isc_sum_first2(const CorrCaModel& model,
                             const std::vector<TimeSeriesMatrix>& subjects,
                             const std::vector<bool>* keep = nullptr) {
  require(model.k() >= 2, errc::component_out_of_range,
          "model must hold at least two components");
  return isc(model, subjects, 1, keep) + isc(model, subjects, 2, keep);
}

}  // namespace ntk

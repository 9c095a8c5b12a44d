#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ntk/lagembed.hpp"
#include "ntk/numcore.hpp"
#include "ntk/timeseries.hpp"

namespace ntk {

/// Two-view canonical correlation model on lag-embedded signals.
struct CcaModel {
  Eigen::MatrixXd wx;  // (D_x * L_x) x K
  Eigen::MatrixXd wy;  // (D_y * L_y) x K
  std::vector<double> train_correlations;  // descending
  LagSpec eeg_spec;
  LagSpec stim_spec;
  double reg_lambda = 0.0;

  int k() const { return static_cast<int>(wx.cols()); }
};

/// Cross- and auto-covariance accumulator (X'X, Y'Y, X'Y without 1/T),
/// summed over per-video-centered blocks. Video ids are kept so training
/// provenance can be audited against fold plans.
class CcaCov {
 public:
  void add(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const std::string& video_id) {
    require(x.rows() == y.rows(), errc::length_mismatch, "views differ in sample count");
    require(x.rows() > 0, errc::empty_input, "empty covariance block");
    if (rxx_.size() == 0) {
      rxx_ = Eigen::MatrixXd::Zero(x.cols(), x.cols());
      ryy_ = Eigen::MatrixXd::Zero(y.cols(), y.cols());
      rxy_ = Eigen::MatrixXd::Zero(x.cols(), y.cols());
    }
    require(x.cols() == rxx_.rows() && y.cols() == ryy_.rows(), errc::dimension_mismatch,
            "covariance block dimensions changed between videos");
    rxx_.noalias() += x.transpose() * x;
    ryy_.noalias() += y.transpose() * y;
    rxy_.noalias() += x.transpose() * y;
    n_samples_ += x.rows();
    videos_.push_back(video_id);
  }

  void merge(const CcaCov& other) {
    if (other.empty()) return;
    if (rxx_.size() == 0) {
      rxx_ = other.rxx_;
      ryy_ = other.ryy_;
      rxy_ = other.rxy_;
    } else {
      require(rxx_.rows() == other.rxx_.rows() && ryy_.rows() == other.ryy_.rows(),
              errc::dimension_mismatch, "merging covariances of different dimensions");
      rxx_ += other.rxx_;
      ryy_ += other.ryy_;
      rxy_ += other.rxy_;
    }
    n_samples_ += other.n_samples_;
    videos_.insert(videos_.end(), other.videos_.begin(), other.videos_.end());
  }

  const Eigen::MatrixXd& rxx() const { return rxx_; }
  const Eigen::MatrixXd& ryy() const { return ryy_; }
  const Eigen::MatrixXd& rxy() const { return rxy_; }
  Eigen::Index n_samples() const { return n_samples_; }
  const std::vector<std::string>& videos() const { return videos_; }
  bool empty() const { return rxx_.size() == 0; }

 private:
  Eigen::MatrixXd rxx_, ryy_, rxy_;
  Eigen::Index n_samples_ = 0;
  std::vector<std::string> videos_;
};

namespace detail {

/// inv(R + ridge) * M through Cholesky, stepping up the ridge if the
/// factorization fails; gives up with RankDeficient.
inline Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& r, double lambda_rel,
                                 const Eigen::MatrixXd& m) {
  const SymmetricMatrix sym(0.5 * (r + r.transpose()));
  for (const double extra : {0.0, 1e-8, 1e-4}) {
    const SymmetricMatrix reg = regularize_covariance(sym, std::max(lambda_rel, extra));
    Eigen::LLT<Eigen::MatrixXd> llt(reg.mat());
    if (llt.info() == Eigen::Success) return llt.solve(m);
  }
  fail(errc::rank_deficient, "covariance not invertible after regularization retries");
}

inline GevdSolution gevd_or_rank_deficient(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                           int k) {
  try {
    return solve_gevd(SymmetricMatrix(0.5 * (a + a.transpose())),
                      SymmetricMatrix(0.5 * (b + b.transpose())), k);
  } catch (const error& e) {
    if (e.kind() == errc::not_positive_definite)
      fail(errc::rank_deficient, std::string("covariance pencil is rank deficient: ") + e.what());
    throw;
  }
}

}  // namespace detail

/// Fits CCA from accumulated covariances: one GEVD per view, components
/// paired by descending eigenvalue, signs flipped so each training
/// correlation is nonnegative.
inline CcaModel fit_cca_cov(const CcaCov& cov, int k, double reg_lambda,
                            const LagSpec& eeg_spec = {}, const LagSpec& stim_spec = {}) {
  require(!cov.empty(), errc::empty_input, "no covariance blocks accumulated");
  require(reg_lambda >= 0.0, errc::negative_lambda, "reg_lambda must be nonnegative");
  const Eigen::Index dx = cov.rxx().rows();
  const Eigen::Index dy = cov.ryy().rows();
  require(k >= 1 && k <= std::min(dx, dy), errc::k_out_of_range,
          "k must lie in [1, min(view dimensions)]");

  const Eigen::MatrixXd rxx_r =
      regularize_covariance(SymmetricMatrix(0.5 * (cov.rxx() + cov.rxx().transpose())),
                            reg_lambda)
          .mat();
  const Eigen::MatrixXd ryy_r =
      regularize_covariance(SymmetricMatrix(0.5 * (cov.ryy() + cov.ryy().transpose())),
                            reg_lambda)
          .mat();
  const Eigen::MatrixXd ryx = cov.rxy().transpose();

  const Eigen::MatrixXd ax = cov.rxy() * detail::spd_solve(cov.ryy(), reg_lambda, ryx);
  const Eigen::MatrixXd ay = ryx * detail::spd_solve(cov.rxx(), reg_lambda, cov.rxy());

  GevdSolution solx = detail::gevd_or_rank_deficient(ax, rxx_r, k);
  GevdSolution soly = detail::gevd_or_rank_deficient(ay, ryy_r, k);

  CcaModel model;
  model.wx = std::move(solx.eigenvectors);
  model.wy = std::move(soly.eigenvectors);
  model.eeg_spec = eeg_spec;
  model.stim_spec = stim_spec;
  model.reg_lambda = reg_lambda;
  model.train_correlations.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const Eigen::VectorXd wxj = model.wx.col(j);
    const Eigen::VectorXd wyj = model.wy.col(j);
    double cross = wxj.dot(cov.rxy() * wyj);
    if (cross < 0.0) {
      model.wy.col(j) = -wyj;
      cross = -cross;
    }
    const double vx = wxj.dot(cov.rxx() * wxj);
    const double vy = wyj.dot(cov.ryy() * wyj);
    require(vx > 0.0 && vy > 0.0, errc::zero_variance, "component with zero training variance");
    model.train_correlations[static_cast<std::size_t>(j)] = cross / std::sqrt(vx * vy);
  }
  return model;
}

/// Fits CCA on one pair of centered, lag-embedded views.
inline CcaModel fit_cca(const TimeSeriesMatrix& x_emb, const TimeSeriesMatrix& y_emb, int k,
                        double reg_lambda = 0.0) {
  x_emb.validate();
  y_emb.validate();
  require(x_emb.n_samples() == y_emb.n_samples(), errc::length_mismatch,
          "views differ in sample count");
  CcaCov cov;
  cov.add(x_emb.samples, y_emb.samples, x_emb.video_id);
  return fit_cca_cov(cov, k, reg_lambda);
}

inline Eigen::MatrixXd project_x(const CcaModel& model, const TimeSeriesMatrix& x_emb) {
  require(x_emb.n_channels() == model.wx.rows(), errc::dimension_mismatch,
          "x view does not match model filter dimension");
  return x_emb.samples * model.wx;
}

inline Eigen::MatrixXd project_y(const CcaModel& model, const TimeSeriesMatrix& y_emb) {
  require(y_emb.n_channels() == model.wy.rows(), errc::dimension_mismatch,
          "y view does not match model filter dimension");
  return y_emb.samples * model.wy;
}

/// Per-component Pearson correlation of the projected views on supplied
/// (test) data; no refitting.
inline std::vector<double> canonical_correlations(const CcaModel& model,
                                                  const TimeSeriesMatrix& x_emb,
                                                  const TimeSeriesMatrix& y_emb) {
  require(x_emb.n_samples() == y_emb.n_samples(), errc::length_mismatch,
          "views differ in sample count");
  const Eigen::MatrixXd px = project_x(model, x_emb);
  const Eigen::MatrixXd py = project_y(model, y_emb);
  std::vector<double> rho(static_cast<std::size_t>(model.k()));
  for (int j = 0; j < model.k(); ++j)
    rho[static_cast<std::size_t>(j)] = pearson(px.col(j), py.col(j));
  return rho;
}

}  // namespace ntk

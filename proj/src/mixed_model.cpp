#include "padsim/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "padsim/error.hpp"

namespace padsim::mixed {

namespace {
constexpr double kRhoScale = 0.999;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kSimplexLimit = 12;
}  // namespace

double Ar1::rho(double eta) { return kRhoScale * std::tanh(eta); }

void Ar1::build(std::span<const int> positions, const Eigen::VectorXd& theta, Eigen::MatrixXd& v,
                std::vector<Eigen::MatrixXd>* dv) const {
  const auto m = static_cast<Eigen::Index>(positions.size());
  const double s2 = std::exp(2.0 * theta(0));
  const double th = std::tanh(theta(1));
  const double r = kRhoScale * th;
  const double dr = kRhoScale * (1.0 - th * th);
  v.resize(m, m);
  if (dv) {
    dv->resize(2);
    (*dv)[0].resize(m, m);
    (*dv)[1].resize(m, m);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const int lag = std::abs(positions[i] - positions[j]);
      const double val = s2 * std::pow(r, lag);
      v(i, j) = v(j, i) = val;
      if (dv) {
        (*dv)[0](i, j) = (*dv)[0](j, i) = 2.0 * val;
        const double d = lag == 0 ? 0.0 : s2 * lag * std::pow(r, lag - 1) * dr;
        (*dv)[1](i, j) = (*dv)[1](j, i) = d;
      }
    }
  }
}

Eigen::VectorXd Ar1::start(double residual_variance) const {
  Eigen::VectorXd t(2);
  t << 0.5 * std::log(residual_variance), std::atanh(0.5 / kRhoScale);
  return t;
}

void Ar1::bounds(double residual_variance, Eigen::VectorXd& lower, Eigen::VectorXd& upper) const {
  const double ls = 0.5 * std::log(residual_variance);
  lower.resize(2);
  upper.resize(2);
  lower << ls - 15.0, -8.0;
  upper << ls + 5.0, 8.0;
}

std::vector<std::pair<std::string, double>> Ar1::components(const Eigen::VectorXd& theta) const {
  return {{"sigma", std::exp(theta(0))}, {"rho", rho(theta(1))}};
}

void HeteroAr1::build(std::span<const int> positions, const Eigen::VectorXd& theta,
                      Eigen::MatrixXd& v, std::vector<Eigen::MatrixXd>* dv) const {
  const auto m = static_cast<Eigen::Index>(positions.size());
  const double th = std::tanh(theta(k_));
  const double r = kRhoScale * th;
  const double dr = kRhoScale * (1.0 - th * th);
  v.resize(m, m);
  if (dv) {
    dv->assign(static_cast<std::size_t>(k_ + 1), Eigen::MatrixXd::Zero(m, m));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const int pi = positions[i];
    for (Eigen::Index j = 0; j <= i; ++j) {
      const int pj = positions[j];
      const int lag = std::abs(pi - pj);
      const double sds = std::exp(theta(pi) + theta(pj));
      const double val = sds * std::pow(r, lag);
      v(i, j) = v(j, i) = val;
      if (dv) {
        (*dv)[pi](i, j) += val;
        (*dv)[pj](i, j) += val;
        if (i != j) {
          (*dv)[pi](j, i) += val;
          (*dv)[pj](j, i) += val;
        }
        const double d = lag == 0 ? 0.0 : sds * lag * std::pow(r, lag - 1) * dr;
        (*dv)[k_](i, j) = (*dv)[k_](j, i) = d;
      }
    }
  }
}

Eigen::VectorXd HeteroAr1::start(double residual_variance) const {
  Eigen::VectorXd t = Eigen::VectorXd::Constant(k_ + 1, 0.5 * std::log(residual_variance));
  t(k_) = std::atanh(0.5 / kRhoScale);
  return t;
}

void HeteroAr1::bounds(double residual_variance, Eigen::VectorXd& lower,
                       Eigen::VectorXd& upper) const {
  const double ls = 0.5 * std::log(residual_variance);
  lower = Eigen::VectorXd::Constant(k_ + 1, ls - 15.0);
  upper = Eigen::VectorXd::Constant(k_ + 1, ls + 5.0);
  lower(k_) = -8.0;
  upper(k_) = 8.0;
}

std::vector<std::pair<std::string, double>> HeteroAr1::components(
    const Eigen::VectorXd& theta) const {
  std::vector<std::pair<std::string, double>> out;
  for (int i = 0; i < k_; ++i) out.emplace_back("sigma_" + std::to_string(i + 1), std::exp(theta(i)));
  out.emplace_back("rho", Ar1::rho(theta(k_)));
  return out;
}

void RandomSlope::build(std::span<const int> positions, const Eigen::VectorXd& theta,
                        Eigen::MatrixXd& v, std::vector<Eigen::MatrixXd>* dv) const {
  const auto m = static_cast<Eigen::Index>(positions.size());
  const double ea = std::exp(theta(0));
  const double c = theta(1);
  const double eb = std::exp(theta(2));
  const double s2 = std::exp(2.0 * theta(3));
  const double g00 = ea * ea;
  const double g01 = c * ea;
  const double g11 = c * c + eb * eb;
  v.resize(m, m);
  if (dv) {
    dv->resize(4);
    for (auto& d : *dv) d.resize(m, m);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const double ti = times_[positions[i]];
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double tj = times_[positions[j]];
      const double sum = ti + tj;
      const double prod = ti * tj;
      const double diag = i == j ? 1.0 : 0.0;
      v(i, j) = v(j, i) = g00 + g01 * sum + g11 * prod + s2 * diag;
      if (dv) {
        (*dv)[0](i, j) = (*dv)[0](j, i) = 2.0 * g00 + g01 * sum;
        (*dv)[1](i, j) = (*dv)[1](j, i) = ea * sum + 2.0 * c * prod;
        (*dv)[2](i, j) = (*dv)[2](j, i) = 2.0 * eb * eb * prod;
        (*dv)[3](i, j) = (*dv)[3](j, i) = 2.0 * s2 * diag;
      }
    }
  }
}

Eigen::VectorXd RandomSlope::start(double residual_variance) const {
  const double ls = 0.5 * std::log(residual_variance);
  Eigen::VectorXd t(4);
  t << ls + 0.5 * std::log(0.5), 0.0, ls + std::log(0.1), ls + 0.5 * std::log(0.5);
  return t;
}

void RandomSlope::bounds(double residual_variance, Eigen::VectorXd& lower,
                         Eigen::VectorXd& upper) const {
  const double ls = 0.5 * std::log(residual_variance);
  const double span = std::exp(ls + 5.0);
  lower.resize(4);
  upper.resize(4);
  lower << ls - 15.0, -span, ls - 15.0, ls - 15.0;
  upper << ls + 5.0, span, ls + 5.0, ls + 5.0;
}

std::vector<std::pair<std::string, double>> RandomSlope::components(
    const Eigen::VectorXd& theta) const {
  const double ea = std::exp(theta(0));
  const double c = theta(1);
  const double eb = std::exp(theta(2));
  const double slope_sd = std::sqrt(c * c + eb * eb);
  return {{"intercept_sd", ea},
          {"slope_sd", slope_sd},
          {"intercept_slope_corr", c / slope_sd},
          {"sigma", std::exp(theta(3))}};
}

Eigen::MatrixXd Unstructured::factor(const Eigen::VectorXd& theta) const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k_, k_);
  int idx = 0;
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j <= i; ++j, ++idx) l(i, j) = i == j ? std::exp(theta(idx)) : theta(idx);
  return l;
}

void Unstructured::build(std::span<const int> positions, const Eigen::VectorXd& theta,
                         Eigen::MatrixXd& v, std::vector<Eigen::MatrixXd>* dv) const {
  const auto m = static_cast<Eigen::Index>(positions.size());
  const Eigen::MatrixXd l = factor(theta);
  const Eigen::MatrixXd sigma = l * l.transpose();
  v.resize(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) v(a, b) = sigma(positions[a], positions[b]);
  if (!dv) return;
  dv->assign(static_cast<std::size_t>(parameter_count()), Eigen::MatrixXd::Zero(m, m));
  // Parameter (i, j) moves L(i, j); d Sigma = E L' + L E' touches row and
  // column i only.
  for (Eigen::Index a = 0; a < m; ++a) {
    const int i = positions[a];
    const int row = i * (i + 1) / 2;
    for (int j = 0; j <= i; ++j) {
      const double e = i == j ? l(i, i) : 1.0;
      Eigen::MatrixXd& d = (*dv)[static_cast<std::size_t>(row + j)];
      for (Eigen::Index b = 0; b < m; ++b) {
        const double val = e * l(positions[b], j);
        d(a, b) += val;
        d(b, a) += val;
      }
    }
  }
}

Eigen::VectorXd Unstructured::start(double residual_variance) const {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(parameter_count());
  for (int i = 0; i < k_; ++i) t(i * (i + 1) / 2 + i) = 0.5 * std::log(residual_variance);
  return t;
}

void Unstructured::bounds(double residual_variance, Eigen::VectorXd& lower,
                          Eigen::VectorXd& upper) const {
  const double ls = 0.5 * std::log(residual_variance);
  const double span = std::exp(ls + 5.0);
  lower = Eigen::VectorXd::Constant(parameter_count(), -span);
  upper = Eigen::VectorXd::Constant(parameter_count(), span);
  for (int i = 0; i < k_; ++i) {
    lower(i * (i + 1) / 2 + i) = ls - 15.0;
    upper(i * (i + 1) / 2 + i) = ls + 5.0;
  }
}

std::vector<std::pair<std::string, double>> Unstructured::components(
    const Eigen::VectorXd& theta) const {
  const Eigen::MatrixXd l = factor(theta);
  const Eigen::MatrixXd sigma = l * l.transpose();
  std::vector<std::pair<std::string, double>> out;
  for (int i = 0; i < k_; ++i) out.emplace_back("sigma_" + std::to_string(i + 1), std::sqrt(sigma(i, i)));
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < i; ++j)
      out.emplace_back("corr_" + std::to_string(i + 1) + "_" + std::to_string(j + 1),
                       sigma(i, j) / std::sqrt(sigma(i, i) * sigma(j, j)));
  return out;
}

std::optional<Eigen::VectorXd> Unstructured::start_from(const Eigen::MatrixXd& empirical) const {
  if (empirical.rows() != k_) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(empirical);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return std::nullopt;
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(1e-3 * top);
  const Eigen::MatrixXd pd = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(pd);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::VectorXd t(parameter_count());
  int idx = 0;
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j <= i; ++j, ++idx) t(idx) = i == j ? std::log(l(i, i)) : l(i, j);
  return t;
}

PatternedGls::PatternedGls(const std::vector<Cluster>& clusters,
                           const CovarianceStructure& structure, bool reml)
    : structure_(structure), reml_(reml) {
  if (clusters.empty()) throw FitError("no clusters to fit");
  p_ = static_cast<int>(clusters.front().x.cols());
  const int q = p_ + 1;

  std::map<std::vector<int>, std::vector<const Cluster*>> groups;
  for (const Cluster& c : clusters) {
    const auto m = static_cast<Eigen::Index>(c.positions.size());
    if (m == 0) continue;
    if (c.x.rows() != m || c.y.size() != m || c.x.cols() != p_)
      throw DataError("cluster dimensions disagree");
    for (Eigen::Index i = 1; i < m; ++i)
      if (c.positions[i] <= c.positions[i - 1])
        throw DataError("cluster positions must be strictly increasing");
    groups[c.positions].push_back(&c);
    n_obs_ += static_cast<int>(m);
  }
  if (n_obs_ <= p_) throw FitError("fewer observations than fixed effects");

  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p_, p_);
  for (auto& [positions, members] : groups) {
    const auto m = static_cast<Eigen::Index>(positions.size());
    Eigen::MatrixXd u(static_cast<Eigen::Index>(members.size()), m * q);
    for (std::size_t s = 0; s < members.size(); ++s) {
      const Cluster& c = *members[s];
      for (Eigen::Index a = 0; a < m; ++a) {
        u.block(static_cast<Eigen::Index>(s), a * q, 1, p_) = c.x.row(a);
        u(static_cast<Eigen::Index>(s), a * q + p_) = c.y(a);
      }
    }
    Pattern pat;
    pat.positions = positions;
    pat.count = static_cast<int>(members.size());
    pat.moments = Eigen::MatrixXd::Zero(m * q, m * q);
    pat.moments.selfadjointView<Eigen::Lower>().rankUpdate(u.transpose());
    pat.moments.triangularView<Eigen::StrictlyUpper>() =
        pat.moments.triangularView<Eigen::StrictlyLower>().transpose();
    for (Eigen::Index a = 0; a < m; ++a) xtx += pat.moments.block(a * q, a * q, p_, p_);
    patterns_.push_back(std::move(pat));
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtx);
  qr.setThreshold(1e-10);
  if (qr.rank() < p_) throw FitError("singular design: fixed effects are not estimable");
}

Eigen::MatrixXd PatternedGls::contract(const Pattern& pattern, const Eigen::MatrixXd& w) const {
  const int q = p_ + 1;
  const auto m = w.rows();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index a = 0; a < m; ++a) {
    s.noalias() += w(a, a) * pattern.moments.block(a * q, a * q, q, q);
    for (Eigen::Index b = 0; b < a; ++b) {
      const auto blk = pattern.moments.block(a * q, b * q, q, q);
      s.noalias() += w(a, b) * (blk + blk.transpose());
    }
  }
  return s;
}

double PatternedGls::criterion(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient) const {
  const int q = p_ + 1;
  const int k = structure_.parameter_count();
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(q, q);
  double logdet = 0.0;
  std::vector<Eigen::MatrixXd> ws;
  std::vector<std::vector<Eigen::MatrixXd>> dvs;
  if (gradient) {
    ws.reserve(patterns_.size());
    dvs.reserve(patterns_.size());
  }
  Eigen::MatrixXd v;
  std::vector<Eigen::MatrixXd> dv;
  for (const Pattern& pat : patterns_) {
    structure_.build(pat.positions, theta, v, gradient ? &dv : nullptr);
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) return kInf;
    const Eigen::MatrixXd& l = llt.matrixLLT();
    double ld = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      if (!(l(i, i) > 0.0)) return kInf;
      ld += std::log(l(i, i));
    }
    logdet += 2.0 * pat.count * ld;
    Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(v.rows(), v.cols()));
    total += contract(pat, w);
    if (gradient) {
      ws.push_back(std::move(w));
      dvs.push_back(dv);
    }
  }
  const Eigen::MatrixXd a = total.topLeftCorner(p_, p_);
  Eigen::LLT<Eigen::MatrixXd> allt(a);
  if (allt.info() != Eigen::Success) return kInf;
  const Eigen::VectorXd beta = allt.solve(total.col(p_).head(p_));
  const double rwr = total(p_, p_) - total.col(p_).head(p_).dot(beta);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double value = logdet + rwr;
  if (reml_) {
    const Eigen::MatrixXd& la = allt.matrixLLT();
    double lda = 0.0;
    for (Eigen::Index i = 0; i < p_; ++i) lda += std::log(la(i, i));
    value += 2.0 * lda + (n_obs_ - p_) * log2pi;
  } else {
    value += n_obs_ * log2pi;
  }
  if (gradient) {
    // d/dtheta_j = sum_p <dV_j, n_p W - W S_p W>, where S_p(a, b) = <Omega,
    // block(a, b)> collects the residual cross-products (and, for REML, the
    // A^-1 correction) of the pattern.
    Eigen::VectorXd w(q);
    w.head(p_) = -beta;
    w(p_) = 1.0;
    Eigen::MatrixXd omega = w * w.transpose();
    if (reml_) omega.topLeftCorner(p_, p_) += allt.solve(Eigen::MatrixXd::Identity(p_, p_));
    gradient->setZero(k);
    for (std::size_t i = 0; i < patterns_.size(); ++i) {
      const Pattern& pat = patterns_[i];
      const Eigen::MatrixXd& wi = ws[i];
      const Eigen::MatrixXd t = pat.count * wi - wi * dual_contract(pat, omega) * wi;
      for (int j = 0; j < k; ++j) (*gradient)(j) += dvs[i][j].cwiseProduct(t).sum();
    }
  }
  return value;
}

Eigen::MatrixXd PatternedGls::dual_contract(const Pattern& pattern, const Eigen::MatrixXd& omega) const {
  const int q = p_ + 1;
  const auto m = static_cast<Eigen::Index>(pattern.positions.size());
  Eigen::MatrixXd s(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b <= a; ++b)
      s(a, b) = s(b, a) = pattern.moments.block(a * q, b * q, q, q).cwiseProduct(omega).sum();
  return s;
}

void PatternedGls::fixed_effects(const Eigen::VectorXd& theta, Eigen::VectorXd& beta,
                                 Eigen::MatrixXd& beta_cov) const {
  const int q = p_ + 1;
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd v;
  for (const Pattern& pat : patterns_) {
    structure_.build(pat.positions, theta, v, nullptr);
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) throw FitError("marginal covariance is not positive definite");
    total += contract(pat, llt.solve(Eigen::MatrixXd::Identity(v.rows(), v.cols())));
  }
  Eigen::LLT<Eigen::MatrixXd> allt(total.topLeftCorner(p_, p_));
  if (allt.info() != Eigen::Success) throw FitError("singular design: fixed effects are not estimable");
  beta = allt.solve(total.col(p_).head(p_));
  beta_cov = allt.solve(Eigen::MatrixXd::Identity(p_, p_));
}

double PatternedGls::residual_variance() const {
  const int q = p_ + 1;
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(q, q);
  for (const Pattern& pat : patterns_) {
    const auto m = static_cast<Eigen::Index>(pat.positions.size());
    for (Eigen::Index a = 0; a < m; ++a) total += pat.moments.block(a * q, a * q, q, q);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(total.topLeftCorner(p_, p_));
  const Eigen::VectorXd beta = ldlt.solve(total.col(p_).head(p_));
  const double rss = total(p_, p_) - total.col(p_).head(p_).dot(beta);
  return std::max(rss / (n_obs_ - p_), 0.0);
}

Eigen::MatrixXd PatternedGls::empirical_covariance(int grid) const {
  const int q = p_ + 1;
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(q, q);
  for (const Pattern& pat : patterns_) {
    const auto m = static_cast<Eigen::Index>(pat.positions.size());
    for (Eigen::Index a = 0; a < m; ++a) total += pat.moments.block(a * q, a * q, q, q);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(total.topLeftCorner(p_, p_));
  Eigen::VectorXd w(q);
  w.head(p_) = -ldlt.solve(total.col(p_).head(p_));
  w(p_) = 1.0;
  const Eigen::MatrixXd omega = w * w.transpose();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(grid, grid);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(grid, grid);
  for (const Pattern& pat : patterns_) {
    const Eigen::MatrixXd s = dual_contract(pat, omega);
    const auto m = static_cast<Eigen::Index>(pat.positions.size());
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) {
        const int i = pat.positions[a], j = pat.positions[b];
        if (i >= grid || j >= grid) continue;
        sums(i, j) += s(a, b);
        counts(i, j) += pat.count;
      }
  }
  for (Eigen::Index i = 0; i < grid; ++i)
    for (Eigen::Index j = 0; j < grid; ++j) sums(i, j) = counts(i, j) > 0 ? sums(i, j) / counts(i, j) : 0.0;
  return sums;
}

Eigen::MatrixXd PatternedGls::expected_information(const Eigen::VectorXd& theta) const {
  const int k = structure_.parameter_count();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd v;
  std::vector<Eigen::MatrixXd> dv;
  std::vector<Eigen::MatrixXd> a(static_cast<std::size_t>(k));
  for (const Pattern& pat : patterns_) {
    structure_.build(pat.positions, theta, v, &dv);
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) throw FitError("marginal covariance is not positive definite");
    for (int j = 0; j < k; ++j) a[j] = llt.solve(dv[j]);
    for (int i = 0; i < k; ++i) {
      if (dv[i].isZero(0.0)) continue;
      for (int j = 0; j <= i; ++j) {
        const double t = pat.count * a[i].cwiseProduct(a[j].transpose()).sum();
        info(i, j) += t;
        if (i != j) info(j, i) += t;
      }
    }
  }
  return info;
}

namespace {

struct Objective {
  const PatternedGls* model;
  const Eigen::VectorXd* lower;
  const Eigen::VectorXd* upper;
};

double simplex_target(const gsl_vector* x, void* params) {
  const auto* obj = static_cast<const Objective*>(params);
  const auto n = static_cast<Eigen::Index>(x->size);
  Eigen::VectorXd theta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    theta(i) = gsl_vector_get(x, static_cast<std::size_t>(i));
    if (theta(i) < (*obj->lower)(i) || theta(i) > (*obj->upper)(i)) return GSL_POSINF;
  }
  const double f = obj->model->criterion(theta);
  return std::isfinite(f) ? f : GSL_POSINF;
}

int run_simplex(const PatternedGls& model, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                Eigen::VectorXd& theta, double& f, const FitOptions& options) {
  const auto n = static_cast<std::size_t>(theta.size());
  Objective obj{&model, &lower, &upper};
  gsl_multimin_function fn{&simplex_target, n, &obj};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x, i, theta(static_cast<Eigen::Index>(i)));
    gsl_vector_set(step, i, 0.5);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, step);
  int iter = 0;
  for (; iter < options.max_simplex_iterations; ++iter) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), options.simplex_tolerance) ==
        GSL_SUCCESS)
      break;
  }
  const double best = gsl_multimin_fminimizer_minimum(s);
  if (std::isfinite(best) && best <= f) {
    f = best;
    for (std::size_t i = 0; i < n; ++i)
      theta(static_cast<Eigen::Index>(i)) = gsl_vector_get(s->x, i);
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return iter + 1;
}

// Zeroes gradient components that push against an active bound.
Eigen::VectorXd projected(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double tol = 1e-9 * std::max(1.0, std::abs(x(i)));
    if ((x(i) <= lower(i) + tol && g(i) > 0.0) || (x(i) >= upper(i) - tol && g(i) < 0.0))
      pg(i) = 0.0;
  }
  return pg;
}

struct NewtonOutcome {
  int iterations = 0;
  bool converged = false;
};

NewtonOutcome run_newton(const PatternedGls& model, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, Eigen::VectorXd& theta, double& f,
                         Eigen::VectorXd& g, std::vector<double>& trace,
                         const FitOptions& options, bool scoring) {
  const auto k = theta.size();
  NewtonOutcome out;
  for (; out.iterations < options.max_newton_iterations; ++out.iterations) {
    Eigen::VectorXd pg = projected(g, theta, lower, upper);
    if (pg.norm() < options.gradient_tolerance) {
      out.converged = true;
      return out;
    }
    std::vector<bool> free(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) free[i] = pg(i) != 0.0 || g(i) == 0.0;

    Eigen::MatrixXd h(k, k);
    if (scoring) h = model.expected_information(theta);
    for (Eigen::Index i = 0; i < k && !scoring; ++i) {
      const double step = 1e-5 * std::max(1.0, std::abs(theta(i)));
      Eigen::VectorXd tp = theta, tm = theta, gp, gm;
      tp(i) += step;
      tm(i) -= step;
      const double fp = model.criterion(tp, &gp);
      const double fm = model.criterion(tm, &gm);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        h.col(i).setZero();
        h(i, i) = 1.0;
      } else {
        h.col(i) = (gp - gm) / (2.0 * step);
      }
    }
    h = 0.5 * (h + h.transpose()).eval();
    for (Eigen::Index i = 0; i < k; ++i) {
      if (free[i]) continue;
      h.row(i).setZero();
      h.col(i).setZero();
      h(i, i) = 1.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    Eigen::VectorXd ev = eig.eigenvalues();
    const double floor = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < k; ++i) ev(i) = std::max(std::abs(ev(i)), floor);
    const Eigen::MatrixXd& u = eig.eigenvectors();
    Eigen::VectorXd d = -u * ((u.transpose() * pg).cwiseQuotient(ev));

    bool accepted = false;
    double t = 1.0;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      Eigen::VectorXd cand = (theta + t * d).cwiseMax(lower).cwiseMin(upper);
      Eigen::VectorXd gc;
      const double fc = model.criterion(cand, &gc);
      if (!std::isfinite(fc)) continue;
      // The criterion sums O(n) terms, so near the optimum its rounding noise
      // hides the Newton decrease; there a smaller gradient decides.
      const double slack = 1e-10 * (std::abs(f) + model.observation_count());
      const Eigen::VectorXd pgc = projected(gc, cand, lower, upper);
      if (fc < f || (fc <= f + slack && pgc.norm() < pg.norm())) {
        theta = cand;
        f = fc;
        g = gc;
        trace.push_back(f);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  out.converged = projected(g, theta, lower, upper).norm() < options.gradient_tolerance;
  return out;
}

}  // namespace

Fit fit(const std::vector<Cluster>& clusters, const CovarianceStructure& structure,
        const FitOptions& options) {
  gsl_set_error_handler_off();
  PatternedGls model(clusters, structure, options.reml);
  double rv = model.residual_variance();
  if (!(rv > 0.0)) {
    // Exact fit: fall back to the response scale so the bounds stay finite.
    double yy = 0.0;
    for (const Cluster& c : clusters) yy += c.y.squaredNorm();
    rv = yy > 0.0 ? yy / model.observation_count() : 1.0;
    rv = std::max(rv * 1e-12, 1e-300);
  }
  Eigen::VectorXd lower, upper;
  structure.bounds(rv, lower, upper);

  Fit result;
  // Many parameters: the simplex is hopeless, so start from the empirical
  // covariance and take Fisher scoring steps before plain Newton.
  const bool large = structure.parameter_count() > kSimplexLimit;
  Eigen::VectorXd theta = structure.start(rv);
  if (large) {
    int grid = 0;
    for (const Cluster& c : clusters)
      if (!c.positions.empty()) grid = std::max(grid, c.positions.back() + 1);
    if (auto s = structure.start_from(model.empirical_covariance(grid))) theta = *s;
  }
  theta = theta.cwiseMax(lower).cwiseMin(upper);
  double f = model.criterion(theta);
  if (!std::isfinite(f)) f = kInf;

  Eigen::VectorXd g;
  for (int attempt = 0; attempt < 2 && !result.converged; ++attempt) {
    if (!large || !std::isfinite(f))
      result.iterations += run_simplex(model, lower, upper, theta, f, options);
    f = model.criterion(theta, &g);
    if (!std::isfinite(f)) {
      result.message = "criterion is not finite at the simplex optimum";
      continue;
    }
    result.trace.push_back(f);
    const NewtonOutcome nt =
        run_newton(model, lower, upper, theta, f, g, result.trace, options, large && attempt == 0);
    result.iterations += nt.iterations;
    result.converged = nt.converged;
  }

  result.theta = theta;
  result.criterion = f;
  result.gradient_norm = std::isfinite(f) ? projected(g, theta, lower, upper).norm() : kInf;
  if (!result.converged && result.message.empty())
    result.message = "optimizer did not reach the gradient tolerance";
  if (std::isfinite(f)) model.fixed_effects(theta, result.beta, result.beta_cov);
  return result;
}

void gls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& v,
         Eigen::VectorXd& beta, Eigen::MatrixXd& beta_cov) {
  if (x.rows() != y.size() || v.rows() != y.size() || v.cols() != y.size())
    throw DataError("GLS dimensions disagree");
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  if (llt.info() != Eigen::Success) throw FitError("covariance matrix is not positive definite");
  const Eigen::MatrixXd wx = llt.matrixL().solve(x);
  const Eigen::VectorXd wy = llt.matrixL().solve(y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wx);
  if (qr.rank() < x.cols()) throw FitError("singular design: X is rank deficient");
  const Eigen::MatrixXd a = wx.transpose() * wx;
  Eigen::LLT<Eigen::MatrixXd> allt(a);
  if (allt.info() != Eigen::Success) throw FitError("singular design: X is rank deficient");
  beta = allt.solve(wx.transpose() * wy);
  beta_cov = allt.solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
}

}  // namespace padsim::mixed

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace padsim::mixed {

// One subject's rows. `positions` index the covariance structure's grid and
// must be strictly increasing.
struct Cluster {
  std::vector<int> positions;
  Eigen::MatrixXd x;  // rows x p
  Eigen::VectorXd y;
};

class CovarianceStructure {
 public:
  virtual ~CovarianceStructure() = default;
  virtual int parameter_count() const = 0;
  // Marginal covariance of one cluster and, when dv is given, its partial
  // derivatives with respect to each parameter.
  virtual void build(std::span<const int> positions, const Eigen::VectorXd& theta,
                     Eigen::MatrixXd& v, std::vector<Eigen::MatrixXd>* dv) const = 0;
  // Starting point given a pooled residual variance.
  virtual Eigen::VectorXd start(double residual_variance) const = 0;
  virtual void bounds(double residual_variance, Eigen::VectorXd& lower,
                      Eigen::VectorXd& upper) const = 0;
  // Human-readable variance components at theta.
  virtual std::vector<std::pair<std::string, double>> components(
      const Eigen::VectorXd& theta) const = 0;
  // Starting point from an empirical covariance over the grid positions;
  // empty when the structure has no use for one.
  virtual std::optional<Eigen::VectorXd> start_from(const Eigen::MatrixXd& empirical) const {
    (void)empirical;
    return std::nullopt;
  }
};

// sigma^2 rho^|i-j| on grid positions; theta = (log sigma, eta) with
// rho = 0.999 tanh(eta).
class Ar1 final : public CovarianceStructure {
 public:
  int parameter_count() const override { return 2; }
  void build(std::span<const int> positions, const Eigen::VectorXd& theta, Eigen::MatrixXd& v,
             std::vector<Eigen::MatrixXd>* dv) const override;
  Eigen::VectorXd start(double residual_variance) const override;
  void bounds(double residual_variance, Eigen::VectorXd& lower,
              Eigen::VectorXd& upper) const override;
  std::vector<std::pair<std::string, double>> components(const Eigen::VectorXd& theta) const override;
  static double rho(double eta);
};

// sigma_i sigma_j rho^|i-j| with one SD per grid position; theta =
// (log sigma_1, ..., log sigma_K, eta).
class HeteroAr1 final : public CovarianceStructure {
 public:
  explicit HeteroAr1(int positions) : k_(positions) {}
  int parameter_count() const override { return k_ + 1; }
  void build(std::span<const int> positions, const Eigen::VectorXd& theta, Eigen::MatrixXd& v,
             std::vector<Eigen::MatrixXd>* dv) const override;
  Eigen::VectorXd start(double residual_variance) const override;
  void bounds(double residual_variance, Eigen::VectorXd& lower,
              Eigen::VectorXd& upper) const override;
  std::vector<std::pair<std::string, double>> components(const Eigen::VectorXd& theta) const override;

 private:
  int k_;
};

// Random intercept and slope in time plus independent residual:
// V = Z G Z' + sigma^2 I with Z rows (1, t). G = L L' with
// L = [[e^a, 0], [c, e^b]]; theta = (a, c, b, log sigma).
class RandomSlope final : public CovarianceStructure {
 public:
  explicit RandomSlope(std::vector<double> times) : times_(std::move(times)) {}
  int parameter_count() const override { return 4; }
  void build(std::span<const int> positions, const Eigen::VectorXd& theta, Eigen::MatrixXd& v,
             std::vector<Eigen::MatrixXd>* dv) const override;
  Eigen::VectorXd start(double residual_variance) const override;
  void bounds(double residual_variance, Eigen::VectorXd& lower,
              Eigen::VectorXd& upper) const override;
  std::vector<std::pair<std::string, double>> components(const Eigen::VectorXd& theta) const override;

 private:
  std::vector<double> times_;
};

// Sigma = L L' over the grid positions, L lower triangular; theta holds the
// rows of L in order, diagonal entries on the log scale.
class Unstructured final : public CovarianceStructure {
 public:
  explicit Unstructured(int positions) : k_(positions) {}
  int parameter_count() const override { return k_ * (k_ + 1) / 2; }
  void build(std::span<const int> positions, const Eigen::VectorXd& theta, Eigen::MatrixXd& v,
             std::vector<Eigen::MatrixXd>* dv) const override;
  Eigen::VectorXd start(double residual_variance) const override;
  void bounds(double residual_variance, Eigen::VectorXd& lower,
              Eigen::VectorXd& upper) const override;
  std::vector<std::pair<std::string, double>> components(const Eigen::VectorXd& theta) const override;
  std::optional<Eigen::VectorXd> start_from(const Eigen::MatrixXd& empirical) const override;

 private:
  Eigen::MatrixXd factor(const Eigen::VectorXd& theta) const;
  int k_;
};

struct FitOptions {
  bool reml = false;
  int max_simplex_iterations = 400;
  double simplex_tolerance = 1e-2;
  int max_newton_iterations = 50;
  double gradient_tolerance = 1e-6;
};

struct Fit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;  // (X' V^-1 X)^-1 at theta
  Eigen::VectorXd theta;
  double criterion = 0.0;  // -2 log likelihood (restricted when reml)
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> trace;  // criterion after each accepted step
  std::string message;
};

// Profiled (RE)ML over theta. Clusters sharing a position pattern share the
// covariance factorization, so one evaluation costs O(patterns), not
// O(subjects). Throws FitError on a rank-deficient design.
class PatternedGls {
 public:
  PatternedGls(const std::vector<Cluster>& clusters, const CovarianceStructure& structure,
               bool reml);

  // -2 log likelihood at theta (+inf where V is not positive definite);
  // fills the analytic gradient when asked.
  double criterion(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient = nullptr) const;
  // GLS fixed effects and their covariance at theta.
  void fixed_effects(const Eigen::VectorXd& theta, Eigen::VectorXd& beta,
                     Eigen::MatrixXd& beta_cov) const;
  // Pooled OLS residual variance (V = I).
  double residual_variance() const;
  // Pairwise-available OLS residual covariance over grid positions
  // [0, grid); pairs never observed together get zero.
  Eigen::MatrixXd empirical_covariance(int grid) const;
  // Expected information of the -2 log likelihood, sum_p n_p tr(W dV_i W dV_j)
  // (the REML correction is left out).
  Eigen::MatrixXd expected_information(const Eigen::VectorXd& theta) const;

  int fixed_count() const { return p_; }
  int observation_count() const { return n_obs_; }

 private:
  struct Pattern {
    std::vector<int> positions;
    int count = 0;
    Eigen::MatrixXd moments;  // sum of u u' with u the stacked rows of [X | y]
  };
  // sum_ab w(a, b) block(a, b): q x q.
  Eigen::MatrixXd contract(const Pattern& pattern, const Eigen::MatrixXd& w) const;
  // (a, b) -> <omega, block(a, b)>: m x m.
  Eigen::MatrixXd dual_contract(const Pattern& pattern, const Eigen::MatrixXd& omega) const;

  const CovarianceStructure& structure_;
  bool reml_;
  int p_ = 0;
  int n_obs_ = 0;
  std::vector<Pattern> patterns_;
};

Fit fit(const std::vector<Cluster>& clusters, const CovarianceStructure& structure,
        const FitOptions& options);

// Generalized least squares via Cholesky of V: beta = (X'V^-1X)^-1 X'V^-1 y.
// Throws FitError when V is not positive definite or X is rank deficient.
void gls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& v,
         Eigen::VectorXd& beta, Eigen::MatrixXd& beta_cov);

}  // namespace padsim::mixed

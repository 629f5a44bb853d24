#include "padsim/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "padsim/error.hpp"

namespace padsim {

namespace {

constexpr double kTimeTol = 1e-9;

int grid_index(const std::vector<double>& grid, double t) {
  auto it = std::lower_bound(grid.begin(), grid.end(), t - kTimeTol);
  if (it == grid.end() || std::abs(*it - t) > kTimeTol) return -1;
  return static_cast<int>(it - grid.begin());
}

std::string time_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

// Rows grouped by subject, each group sorted by time; subjects in id order.
std::map<int, std::vector<const LongitudinalRow*>> by_subject(const LongitudinalDataset& data) {
  std::map<int, std::vector<const LongitudinalRow*>> out;
  for (const LongitudinalRow& r : data.rows)
    if (std::isfinite(r.pacc)) out[r.subject].push_back(&r);
  for (auto& [id, rows] : out)
    std::sort(rows.begin(), rows.end(),
              [](const LongitudinalRow* a, const LongitudinalRow* b) { return a->time < b->time; });
  return out;
}

FitResult from_mixed(ModelKind kind, std::vector<std::string> names, const mixed::Fit& fit,
                     const mixed::CovarianceStructure& structure, int subjects, int observations) {
  FitResult r;
  r.model = kind;
  r.names = std::move(names);
  r.coefficients = fit.beta;
  r.covariance = fit.beta_cov;
  if (fit.theta.size() > 0) r.variance_components = structure.components(fit.theta);
  r.log_likelihood = -0.5 * fit.criterion;
  r.converged = fit.converged;
  r.iterations = fit.iterations;
  r.gradient_norm = fit.gradient_norm;
  r.trace = fit.trace;
  r.subjects = subjects;
  r.observations = observations;
  r.message = fit.message;
  return r;
}

mixed::FitOptions mixed_options(const OptimizerOptions& o, bool reml) {
  mixed::FitOptions m;
  m.reml = reml;
  m.max_simplex_iterations = o.max_simplex_iterations;
  m.simplex_tolerance = o.simplex_tolerance;
  m.max_newton_iterations = o.max_newton_iterations;
  m.gradient_tolerance = o.gradient_tolerance;
  return m;
}

double mean_age(const std::map<int, std::vector<const LongitudinalRow*>>& subjects) {
  double s = 0.0;
  for (const auto& [id, rows] : subjects) s += rows.front()->age;
  return subjects.empty() ? 0.0 : s / static_cast<double>(subjects.size());
}

}  // namespace

void LongitudinalDataset::validate() const {
  if (visit_grid.empty()) throw DataError("longitudinal dataset has no visit grid");
  std::set<std::pair<int, int>> seen;
  for (const LongitudinalRow& r : rows) {
    const int k = grid_index(visit_grid, r.time);
    if (k < 0) throw DataError("visit time " + time_label(r.time) + " is not on the visit grid");
    if (r.time > horizon + kTimeTol) throw DataError("visit time past the analysis horizon");
    if (!seen.insert({r.subject, k}).second)
      throw DataError("duplicate row for subject " + std::to_string(r.subject));
  }
}

void SurvivalDataset::validate() const {
  for (const SurvivalRow& r : rows)
    if (!(r.time > 0.0)) throw DataError("survival times must be positive");
}

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mmrm:
      return "mmrm";
    case ModelKind::Clda1:
      return "clda1";
    case ModelKind::Clda2:
      return "clda2";
    case ModelKind::Cox:
      return "cox";
  }
  return "?";
}

ModelKind model_from_name(std::string_view name) {
  for (ModelKind k : {ModelKind::Mmrm, ModelKind::Clda1, ModelKind::Clda2, ModelKind::Cox})
    if (model_name(k) == name) return k;
  throw ConfigError("unknown model '" + std::string(name) + "'");
}

int FitResult::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw FitError("fit has no coefficient '" + std::string(name) + "'");
}

double FitResult::standard_error(std::string_view name) const {
  const int i = index_of(name);
  return std::sqrt(covariance(i, i));
}

void gls_estimate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& v,
                  Eigen::VectorXd& beta, Eigen::MatrixXd& beta_cov) {
  mixed::gls(x, y, v, beta, beta_cov);
}

std::string_view covariance_name(MmrmCovariance c) {
  switch (c) {
    case MmrmCovariance::Ar1:
      return "ar1";
    case MmrmCovariance::HeteroAr1:
      return "ar1_hetero";
    case MmrmCovariance::Unstructured:
      break;
  }
  return "unstructured";
}

MmrmCovariance covariance_from_name(std::string_view name) {
  if (name == "ar1") return MmrmCovariance::Ar1;
  if (name == "ar1_hetero") return MmrmCovariance::HeteroAr1;
  if (name == "unstructured") return MmrmCovariance::Unstructured;
  throw ConfigError("unknown MMRM covariance '" + std::string(name) + "'");
}

FitResult fit_mmrm(const LongitudinalDataset& data, const OptimizerOptions& options,
                   MmrmCovariance covariance) {
  data.validate();
  std::vector<double> visits;
  for (double t : data.visit_grid)
    if (t > kTimeTol && t <= data.horizon + kTimeTol) visits.push_back(t);
  const int nv = static_cast<int>(visits.size());
  if (nv < 1) throw DataError("no post-baseline visits before the horizon");
  const int p = 2 * nv + 3;

  std::vector<std::string> names;
  for (double t : visits) names.push_back("visit_" + time_label(t));
  for (double t : visits) names.push_back("trt:visit_" + time_label(t));
  names.insert(names.end(), {"baseline", "age", "apoe4"});

  const auto subjects = by_subject(data);
  const double age0 = mean_age(subjects);
  std::vector<mixed::Cluster> clusters;
  int n_subjects = 0;
  int n_obs = 0;
  for (const auto& [id, rows] : subjects) {
    const double base = rows.front()->baseline_pacc;
    if (!std::isfinite(base)) continue;
    mixed::Cluster c;
    std::vector<const LongitudinalRow*> post;
    for (const LongitudinalRow* r : rows)
      if (r->time > kTimeTol) post.push_back(r);
    if (post.empty()) continue;
    const auto m = static_cast<Eigen::Index>(post.size());
    c.x = Eigen::MatrixXd::Zero(m, p);
    c.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const LongitudinalRow& r = *post[i];
      const int k = grid_index(visits, r.time);
      c.positions.push_back(k);
      c.x(i, k) = 1.0;
      if (r.arm == Arm::Treatment) c.x(i, nv + k) = 1.0;
      c.x(i, 2 * nv) = base;
      c.x(i, 2 * nv + 1) = r.age - age0;
      c.x(i, 2 * nv + 2) = r.apoe4;
      c.y(i) = r.pacc - base;
    }
    clusters.push_back(std::move(c));
    ++n_subjects;
    n_obs += static_cast<int>(m);
  }
  if (clusters.empty()) throw DataError("no subjects with baseline and follow-up data");
  mixed::Ar1 ar1;
  mixed::HeteroAr1 hetero(nv);
  mixed::Unstructured unstructured(nv);
  const mixed::CovarianceStructure& structure =
      covariance == MmrmCovariance::Ar1         ? static_cast<const mixed::CovarianceStructure&>(ar1)
      : covariance == MmrmCovariance::HeteroAr1 ? static_cast<const mixed::CovarianceStructure&>(hetero)
                                                : unstructured;
  const mixed::Fit fit = mixed::fit(clusters, structure, mixed_options(options, true));
  return from_mixed(ModelKind::Mmrm, std::move(names), fit, structure, n_subjects, n_obs);
}

FitResult fit_clda(const LongitudinalDataset& data, int degree, const OptimizerOptions& options) {
  if (degree != 1 && degree != 2) throw ConfigError("cLDA degree must be 1 or 2");
  data.validate();
  std::vector<double> times;
  for (double t : data.visit_grid)
    if (t <= data.horizon + kTimeTol) times.push_back(t);

  std::vector<std::string> names{"intercept", "time", "time:trt"};
  if (degree == 2) names.insert(names.end(), {"time2", "time2:trt"});
  names.insert(names.end(), {"age", "apoe4"});
  const auto p = static_cast<Eigen::Index>(names.size());

  const auto subjects = by_subject(data);
  const double age0 = mean_age(subjects);
  std::vector<mixed::Cluster> clusters;
  int n_obs = 0;
  bool has_baseline = false;
  for (const auto& [id, rows] : subjects) {
    mixed::Cluster c;
    const auto m = static_cast<Eigen::Index>(rows.size());
    c.x.resize(m, p);
    c.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const LongitudinalRow& r = *rows[i];
      const double t = r.time;
      const double trt = r.arm == Arm::Treatment ? 1.0 : 0.0;
      if (t <= kTimeTol) has_baseline = true;
      c.positions.push_back(grid_index(times, t));
      Eigen::Index col = 0;
      c.x(i, col++) = 1.0;
      c.x(i, col++) = t;
      c.x(i, col++) = t * trt;
      if (degree == 2) {
        c.x(i, col++) = t * t;
        c.x(i, col++) = t * t * trt;
      }
      c.x(i, col++) = r.age - age0;
      c.x(i, col++) = r.apoe4;
      c.y(i) = r.pacc;
    }
    n_obs += static_cast<int>(m);
    clusters.push_back(std::move(c));
  }
  if (!has_baseline) throw DataError("cLDA requires baseline rows");
  mixed::RandomSlope structure(times);
  const mixed::Fit fit = mixed::fit(clusters, structure, mixed_options(options, false));
  return from_mixed(degree == 1 ? ModelKind::Clda1 : ModelKind::Clda2, std::move(names), fit,
                    structure, static_cast<int>(clusters.size()), n_obs);
}

namespace {

struct CoxData {
  Eigen::MatrixXd x;  // centered covariates, rows sorted by time descending
  std::vector<double> time;
  std::vector<char> event;
};

double cox_evaluate(const CoxData& d, const Eigen::VectorXd& beta, Eigen::VectorXd* grad,
                    Eigen::MatrixXd* info) {
  const auto n = d.x.rows();
  const auto k = d.x.cols();
  const Eigen::VectorXd eta = d.x * beta;
  double loglik = 0.0;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k, k);
  if (grad) grad->setZero(k);
  if (info) info->setZero(k, k);

  Eigen::Index i = 0;
  while (i < n) {
    const double t = d.time[i];
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(k, k);
    int deaths = 0;
    Eigen::Index j = i;
    for (; j < n && d.time[j] == t; ++j) {
      const double w = std::exp(eta(j));
      const auto xj = d.x.row(j).transpose();
      s0 += w;
      s1 += w * xj;
      s2.noalias() += w * xj * xj.transpose();
      if (d.event[j]) {
        ++deaths;
        d0 += w;
        d1 += w * xj;
        d2.noalias() += w * xj * xj.transpose();
        loglik += eta(j);
        if (grad) *grad += xj;
      }
    }
    for (int r = 0; r < deaths; ++r) {
      const double f = static_cast<double>(r) / deaths;
      const double den = s0 - f * d0;
      loglik -= std::log(den);
      const Eigen::VectorXd a = (s1 - f * d1) / den;
      if (grad) *grad -= a;
      if (info) *info += (s2 - f * d2) / den - a * a.transpose();
    }
    i = j;
  }
  return loglik;
}

}  // namespace

FitResult fit_coxph(const SurvivalDataset& data, const CoxOptions& options) {
  data.validate();
  const auto k = static_cast<Eigen::Index>(options.covariates.size());
  if (k == 0) throw ConfigError("Cox model needs at least one covariate");
  for (const std::string& c : options.covariates)
    if (c != "treatment" && c != "age" && c != "apoe4")
      throw ConfigError("unknown Cox covariate '" + c + "'");

  std::vector<const SurvivalRow*> rows;
  for (const SurvivalRow& r : data.rows) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const SurvivalRow* a, const SurvivalRow* b) {
    if (a->time != b->time) return a->time > b->time;
    if (a->event != b->event) return a->event < b->event;
    return a->subject < b->subject;
  });
  int events = 0;
  for (const SurvivalRow* r : rows) events += r->event ? 1 : 0;
  if (events == 0) throw FitError("Cox model has no events");

  const auto n = static_cast<Eigen::Index>(rows.size());
  CoxData d;
  d.x.resize(n, k);
  d.time.resize(static_cast<std::size_t>(n));
  d.event.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const SurvivalRow& r = *rows[i];
    d.time[i] = r.time;
    d.event[i] = r.event ? 1 : 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const std::string& c = options.covariates[j];
      d.x(i, j) = c == "treatment" ? (r.arm == Arm::Treatment ? 1.0 : 0.0)
                  : c == "age"     ? r.age
                                   : static_cast<double>(r.apoe4);
    }
  }
  const Eigen::RowVectorXd center = d.x.colwise().mean();
  d.x.rowwise() -= center;
  Eigen::VectorXd sd(k);
  for (Eigen::Index j = 0; j < k; ++j)
    sd(j) = n > 1 ? std::sqrt(d.x.col(j).squaredNorm() / static_cast<double>(n - 1)) : 0.0;

  FitResult res;
  res.model = ModelKind::Cox;
  res.names = options.covariates;
  res.subjects = static_cast<int>(n);
  res.observations = static_cast<int>(n);
  res.events = events;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd g;
  Eigen::MatrixXd info;
  double ll = cox_evaluate(d, beta, &g, &info);
  res.trace.push_back(-ll);
  {
    Eigen::LDLT<Eigen::MatrixXd> start(info);
    if (start.info() != Eigen::Success || !start.isPositive() ||
        start.vectorD().minCoeff() <= 1e-12 * std::max(1.0, start.vectorD().maxCoeff()))
      throw FitError("Cox information matrix is singular (constant covariate?)");
  }

  bool converged = false;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (g.norm() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = llt.solve(g);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      Eigen::VectorXd gc;
      Eigen::MatrixXd ic;
      const double lc = cox_evaluate(d, cand, &gc, &ic);
      const double slack = 1e-12 * std::max(1.0, std::abs(ll));
      if (std::isfinite(lc) && (lc > ll || (lc >= ll - slack && gc.norm() < g.norm()))) {
        beta = cand;
        ll = lc;
        g = gc;
        info = ic;
        res.trace.push_back(-ll);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (!converged && g.norm() < options.gradient_tolerance) converged = true;

  res.coefficients = beta;
  res.log_likelihood = ll;
  res.iterations = iter;
  res.gradient_norm = g.norm();
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) {
    res.covariance = llt.solve(Eigen::MatrixXd::Identity(k, k));
  } else {
    res.covariance = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    converged = false;
  }
  bool separated = false;
  for (Eigen::Index j = 0; j < k; ++j)
    if (std::abs(beta(j)) * sd(j) > options.separation_bound) separated = true;
  res.converged = converged && !separated;
  if (separated)
    res.message = "monotone likelihood: a coefficient diverges (separation)";
  else if (!converged)
    res.message = "Newton-Raphson did not reach the gradient tolerance";
  return res;
}

double KaplanMeier::survival_at(double t) const {
  double s = 1.0;
  for (const KaplanMeierStep& st : steps) {
    if (st.time > t) break;
    s = st.survival;
  }
  return s;
}

KaplanMeier kaplan_meier(const SurvivalDataset& data, std::optional<Arm> group) {
  std::map<double, std::pair<int, int>> counts;  // time -> (events, censored)
  int at_risk = 0;
  for (const SurvivalRow& r : data.rows) {
    if (group && r.arm != *group) continue;
    auto& c = counts[r.time];
    (r.event ? c.first : c.second) += 1;
    ++at_risk;
  }
  KaplanMeier km;
  double s = 1.0;
  double greenwood = 0.0;
  const double zc = 1.959963984540054;
  for (const auto& [t, c] : counts) {
    const auto [dth, cen] = c;
    KaplanMeierStep st;
    st.time = t;
    st.at_risk = at_risk;
    st.events = dth;
    st.censored = cen;
    if (dth > 0) {
      s *= 1.0 - static_cast<double>(dth) / at_risk;
      if (at_risk > dth)
        greenwood += static_cast<double>(dth) / (static_cast<double>(at_risk) * (at_risk - dth));
    }
    st.survival = s;
    if (s > 0.0) {
      const double se_log = std::sqrt(greenwood);
      st.std_error = s * se_log;
      st.lower = s * std::exp(-zc * se_log);
      st.upper = std::min(1.0, s * std::exp(zc * se_log));
    } else {
      st.std_error = 0.0;
      st.lower = st.upper = 0.0;
    }
    km.steps.push_back(st);
    at_risk -= dth + cen;
  }
  return km;
}

}  // namespace padsim

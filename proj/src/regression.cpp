#include "bdi/regression.hpp"

#include "bdi/csv.hpp"
#include "bdi/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <Eigen/QR>

#include <cmath>
#include <map>
#include <set>

namespace bdi {

namespace {
constexpr const char* kModule = "regression";
}

std::string_view to_string(Dependent d) {
  switch (d) {
    case Dependent::MaxBdiH: return "max_bdi_h";
    case Dependent::MaxBdiPBlack: return "max_bdi_pblack";
    case Dependent::MaxBdi: return "max_bdi";
  }
  return "?";
}

std::optional<Dependent> parse_dependent(std::string_view name) {
  for (const Dependent d : {Dependent::MaxBdiH, Dependent::MaxBdiPBlack, Dependent::MaxBdi}) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

std::string_view required_attribute(Dependent d) {
  switch (d) {
    case Dependent::MaxBdiH: return "herfindahl";
    case Dependent::MaxBdiPBlack: return "percent_black";
    case Dependent::MaxBdi: return "";
  }
  return "";
}

RegressionSpec::RegressionSpec(std::string name, Dependent dependent, std::vector<Covariate> regressors)
    : name_(std::move(name)), dependent_(dependent), regressors_(std::move(regressors)) {
  std::set<Covariate> seen;
  for (const Covariate c : regressors_) {
    if (!seen.insert(c).second) {
      throw ConfigError(kModule, "regressor " + std::string(to_string(c)) + " listed twice in '" + name_ + "'");
    }
  }
}

std::vector<std::string> RegressionSpec::column_names() const {
  std::vector<std::string> out{"INPT"};
  for (const Covariate c : regressors_) out.emplace_back(to_string(c));
  return out;
}

DesignMatrix build_design_matrix(std::span<const PlaceSummary> summaries, const RegressionSpec& spec) {
  if (summaries.empty()) throw ContractViolation(kModule, "no place summaries");
  DesignMatrix d;
  d.column_names = spec.column_names();
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (const PlaceSummary& s : summaries) {
    if (s.is_core) continue;
    std::vector<double> row{1.0};
    bool complete = !std::isnan(s.max);
    for (const Covariate c : spec.regressors()) {
      const auto v = s.covariate(c);
      if (!v || !std::isfinite(*v)) {
        complete = false;
        break;
      }
      row.push_back(*v);
    }
    if (!complete) {
      d.dropped.push_back(s.place_id);
      continue;
    }
    rows.push_back(std::move(row));
    ys.push_back(s.max);
    d.cluster_ids.push_back(s.msa_id);
    d.row_ids.push_back(s.place_id);
  }
  const auto k = static_cast<Eigen::Index>(d.column_names.size());
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n <= k) {
    throw RankError(kModule, "'" + spec.name() + "' has " + std::to_string(n) + " complete rows for " +
                                 std::to_string(k) + " columns");
  }
  d.x.resize(n, k);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) d.x(i, j) = rows[i][j];
    d.y[i] = ys[i];
  }
  return d;
}

OlsFit ols_fit(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
               std::span<const std::string> column_names) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (y.size() != n) throw ContractViolation(kModule, "y length does not match X rows");
  if (n <= k) throw RankError(kModule, "need more rows than columns");

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < k) {
    std::vector<std::string> names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < k; ++j) {
      const auto col = perm[j];
      names.push_back(static_cast<std::size_t>(col) < column_names.size() ? column_names[col]
                                                                          : "column " + std::to_string(col));
    }
    std::string joined;
    for (const auto& s : names) joined += (joined.empty() ? "" : ", ") + s;
    throw RankError(kModule, "design matrix is rank deficient; collinear: " + joined, names);
  }

  OlsFit fit;
  fit.coefficients = qr.solve(y);
  fit.fitted = x * fit.coefficients;
  fit.residuals = y - fit.fitted;

  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd inv_perm = r_inv * r_inv.transpose();
  fit.xtx_inverse = qr.colsPermutation() * inv_perm * qr.colsPermutation().transpose();

  const double ssr = fit.residuals.squaredNorm();
  const double sst = (y.array() - y.mean()).matrix().squaredNorm();
  fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : std::numeric_limits<double>::quiet_NaN();
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / static_cast<double>(n - k);
  return fit;
}

double two_sided_p(double t, double df) {
  if (std::isnan(t) || !(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

ClusteredErrors clustered_se(const Eigen::Ref<const Eigen::MatrixXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& residuals,
                             std::span<const std::string> cluster_ids,
                             const Eigen::Ref<const Eigen::VectorXd>& coefficients) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (residuals.size() != n || static_cast<Eigen::Index>(cluster_ids.size()) != n) {
    throw ContractViolation(kModule, "X, residuals and cluster ids must have equal length");
  }
  if (coefficients.size() != k) throw ContractViolation(kModule, "one coefficient per column expected");
  std::map<std::string, Eigen::VectorXd> scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = scores.try_emplace(cluster_ids[i], Eigen::VectorXd::Zero(k)).first;
    it->second.noalias() += x.row(i).transpose() * residuals[i];
  }
  const auto g = static_cast<double>(scores.size());
  if (scores.size() < 2) throw ContractViolation(kModule, "clustered errors need at least two clusters");
  if (n <= k) throw RankError(kModule, "need more rows than columns");

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [id, s] : scores) meat.noalias() += s * s.transpose();

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.transpose() * x);
  if (qr.rank() < k) throw RankError(kModule, "X'X is singular");
  const Eigen::MatrixXd bread = qr.inverse();

  ClusteredErrors out;
  out.n_clusters = scores.size();
  out.small_sample_factor = g / (g - 1.0) * static_cast<double>(n - 1) / static_cast<double>(n - k);
  out.covariance = out.small_sample_factor * bread * meat * bread;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.se = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.t = coefficients.cwiseQuotient(out.se);
  out.p.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) out.p[j] = two_sided_p(out.t[j], g - 1.0);
  return out;
}

RegressionResult fit_regression(std::span<const PlaceSummary> summaries, const RegressionSpec& spec) {
  const DesignMatrix d = build_design_matrix(summaries, spec);
  const OlsFit fit = ols_fit(d.x, d.y, d.column_names);
  const ClusteredErrors ce = clustered_se(d.x, fit.residuals, d.cluster_ids, fit.coefficients);

  RegressionResult r;
  r.name = spec.name();
  r.dependent = spec.dependent();
  r.variables = d.column_names;
  r.coefficients = fit.coefficients;
  r.se = ce.se;
  r.t = ce.t;
  r.p = ce.p;
  r.r2 = fit.r2;
  r.adj_r2 = fit.adj_r2;
  r.n_used = static_cast<std::size_t>(d.x.rows());
  std::size_t input = 0;
  for (const auto& s : summaries) input += s.is_core ? 0 : 1;
  r.n_input = input;
  r.n_clusters = ce.n_clusters;
  r.dropped = d.dropped;
  return r;
}

std::string format_regression_csv(const RegressionResult& result) {
  std::string out = "variable,coefficient,se,t,p\n";
  for (std::size_t j = 0; j < result.variables.size(); ++j) {
    const auto idx = static_cast<Eigen::Index>(j);
    out += csv::join({result.variables[j], csv::format_double(result.coefficients[idx]),
                      csv::format_double(result.se[idx]), csv::format_optional(result.t[idx]),
                      csv::format_optional(result.p[idx])});
  }
  return out;
}

}  // namespace bdi

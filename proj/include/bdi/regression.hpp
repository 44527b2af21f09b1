#pragma once

#include "bdi/aggregation.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bdi {

/// Which place-level maximum BDI is modeled. `MaxBdi` accepts whatever
/// attribute the summaries were computed on.
enum class Dependent { MaxBdiH, MaxBdiPBlack, MaxBdi };

std::string_view to_string(Dependent d);
std::optional<Dependent> parse_dependent(std::string_view name);

/// Attribute name a dependent variable requires, empty for MaxBdi.
std::string_view required_attribute(Dependent d);

class RegressionSpec {
 public:
  /// Throws ConfigError on a repeated regressor.
  RegressionSpec(std::string name, Dependent dependent, std::vector<Covariate> regressors);

  const std::string& name() const { return name_; }
  Dependent dependent() const { return dependent_; }
  const std::vector<Covariate>& regressors() const { return regressors_; }

  /// "INPT" followed by the regressor names.
  std::vector<std::string> column_names() const;

 private:
  std::string name_;
  Dependent dependent_;
  std::vector<Covariate> regressors_;
};

struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> cluster_ids;
  std::vector<std::string> row_ids;
  std::vector<std::string> column_names;
  /// Place ids dropped for a missing regressor or dependent value.
  std::vector<std::string> dropped;
};

/// Suburb rows only (core pseudo-summaries are skipped); listwise deletion.
/// Throws RankError when fewer rows than columns + 1 remain.
DesignMatrix build_design_matrix(std::span<const PlaceSummary> summaries, const RegressionSpec& spec);

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd xtx_inverse;
  double r2 = 0.0;
  double adj_r2 = 0.0;
};

/// Least squares through a column-pivoting QR. Throws RankError naming the
/// collinear columns when X is rank deficient.
OlsFit ols_fit(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
               std::span<const std::string> column_names = {});

struct ClusteredErrors {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd se;
  Eigen::VectorXd t;
  Eigen::VectorXd p;
  std::size_t n_clusters = 0;
  double small_sample_factor = 1.0;
};

/// CR1 cluster-robust covariance
///   c (X'X)^-1 (sum_g X_g' u_g u_g' X_g) (X'X)^-1,  c = G/(G-1) (n-1)/(n-k)
/// with two-sided p-values from Student t on G-1 degrees of freedom.
/// t and p are computed for `coefficients`. Throws ContractViolation with
/// fewer than two clusters.
ClusteredErrors clustered_se(const Eigen::Ref<const Eigen::MatrixXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& residuals,
                             std::span<const std::string> cluster_ids,
                             const Eigen::Ref<const Eigen::VectorXd>& coefficients);

/// Two-sided p-value of |t| under Student t with `df` degrees of freedom.
double two_sided_p(double t, double df);

struct RegressionResult {
  std::string name;
  Dependent dependent = Dependent::MaxBdi;
  std::vector<std::string> variables;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd se;
  Eigen::VectorXd t;
  Eigen::VectorXd p;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  std::size_t n_used = 0;
  std::size_t n_input = 0;
  std::size_t n_clusters = 0;
  std::vector<std::string> dropped;
};

RegressionResult fit_regression(std::span<const PlaceSummary> summaries, const RegressionSpec& spec);

/// `variable,coefficient,se,t,p`
std::string format_regression_csv(const RegressionResult& result);

}  // namespace bdi

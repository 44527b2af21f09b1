#pragma once

#include "bdi/contiguity.hpp"
#include "bdi/errors.hpp"
#include "bdi/ingestion.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace bdi {

/// Undefined index values travel as quiet NaN through Eigen vectors.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Five group proportions summing to one.
class EthnicComposition {
 public:
  using Proportions = Eigen::Matrix<double, 5, 1>;

  /// Throws ContractViolation when the total population is zero.
  static EthnicComposition from_counts(const GroupCounts& counts);

  /// Throws ContractViolation unless every entry is in [0, 1] and the sum is
  /// within 1e-9 of one.
  static EthnicComposition from_proportions(const Proportions& p);

  const Proportions& proportions() const { return p_; }
  double operator[](Group g) const { return p_[static_cast<Eigen::Index>(g)]; }

 private:
  explicit EthnicComposition(const Proportions& p) : p_(p) {}
  Proportions p_;
};

/// 1 - sum of squared proportions over any proportion vector expression.
template <typename Derived>
typename Derived::Scalar herfindahl(const Eigen::MatrixBase<Derived>& p) {
  return typename Derived::Scalar(1) - p.squaredNorm();
}

/// Herfindahl diversity: 0 for one group, 0.8 for five equal groups.
inline double herfindahl(const EthnicComposition& c) { return herfindahl(c.proportions()); }

inline double percent_attribute(const EthnicComposition& c, Group g) { return c[g]; }

/// out_i = sum_j w_ij x_j; NaN for empty rows. W must be row-normalized.
template <typename Derived>
Eigen::VectorXd spatial_lag(const ContiguityMatrix& w, const Eigen::MatrixBase<Derived>& x) {
  if (!w.normalized()) throw ContractViolation("indices", "spatial lag needs a row-normalized matrix");
  if (x.size() != w.size()) {
    throw ContractViolation("indices", "vector length " + std::to_string(x.size()) +
                                           " does not match matrix size " + std::to_string(w.size()));
  }
  const Eigen::VectorXd xv = x.template cast<double>();
  Eigen::VectorXd out(w.size());
  for (ContiguityMatrix::Index i = 0; i < w.size(); ++i) {
    if (w.degree(i) == 0) {
      out[i] = kUndefined;
      continue;
    }
    const auto nb = w.neighbors(i);
    const auto wt = w.row_weights(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) acc += wt[k] * xv[nb[k]];
    out[i] = acc;
  }
  return out;
}

/// Per-unit unadjusted and adjusted neighborhood averages and their
/// difference. Positive bdi means the unit's cross-border neighbors raise its
/// neighborhood average (ndi_u > ndi_a).
struct DisparityField {
  Eigen::VectorXd attribute;
  Eigen::VectorXd ndi_u;
  Eigen::VectorXd ndi_a;
  Eigen::VectorXd bdi;
  std::vector<bool> on_border;
};

/// `w_adjusted` must come from mask_cross_border(w_unadjusted, ...), else
/// ContractViolation. Units off the border get bdi exactly 0; units whose
/// adjusted row is empty get NaN for ndi_a and bdi.
DisparityField border_disparity(const ContiguityMatrix& w_unadjusted, const ContiguityMatrix& w_adjusted,
                                const Eigen::Ref<const Eigen::VectorXd>& x);

/// Per-unit output row for reporting.
struct DisparityRecord {
  std::string id;
  std::string msa_id;
  std::string place_id;
  Region region = Region::Outside;
  double h = kUndefined;
  double attribute = kUndefined;
  double ndi_u = kUndefined;
  double ndi_a = kUndefined;
  double bdi = kUndefined;
  bool on_border = false;
};

enum class MoranClass { HighHigh, LowLow, HighLow, LowHigh, NotSignificant };

std::string_view to_string(MoranClass c);

struct LocalMoran {
  Eigen::VectorXd local_i;
  Eigen::VectorXd pseudo_p;
  std::vector<MoranClass> cluster;
};

struct MoranOptions {
  int permutations = 999;
  std::uint64_t seed = 42;
  double alpha = 0.05;
};

/// Standardized values z = (x - mean) / sd with the population (denominator
/// n) standard deviation. Returns NaN everywhere when x is constant.
Eigen::VectorXd standardize_population(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Local Moran's I with conditional-permutation pseudo p-values. Each unit's
/// random stream is seeded from (seed, unit index), so results do not depend
/// on the worker count.
LocalMoran local_morans_i(const ContiguityMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const MoranOptions& options = {});

/// Stream seed for one unit.
std::uint64_t unit_stream_seed(std::uint64_t seed, std::uint64_t unit);

}  // namespace bdi

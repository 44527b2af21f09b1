#include "bdi/indices.hpp"

#include "bdi/parallel.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace bdi {

EthnicComposition EthnicComposition::from_counts(const GroupCounts& counts) {
  std::int64_t total = 0;
  for (const auto c : counts) {
    if (c < 0) throw ContractViolation("indices", "negative group count");
    total += c;
  }
  if (total == 0) throw ContractViolation("indices", "composition of an empty unit is undefined");
  Proportions p;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    p[static_cast<Eigen::Index>(g)] = static_cast<double>(counts[g]) / static_cast<double>(total);
  }
  return EthnicComposition(p);
}

EthnicComposition EthnicComposition::from_proportions(const Proportions& p) {
  if ((p.array() < 0.0).any() || (p.array() > 1.0).any() || !p.allFinite()) {
    throw ContractViolation("indices", "proportions must lie in [0, 1]");
  }
  if (std::abs(p.sum() - 1.0) > 1e-9) throw ContractViolation("indices", "proportions must sum to 1");
  return EthnicComposition(p);
}

DisparityField border_disparity(const ContiguityMatrix& w_unadjusted, const ContiguityMatrix& w_adjusted,
                                const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (w_adjusted.derived_from() != w_unadjusted.structure_fingerprint()) {
    throw ContractViolation("indices", "adjusted matrix was not masked from the unadjusted matrix");
  }
  if (w_adjusted.size() != w_unadjusted.size()) {
    throw ContractViolation("indices", "matrix sizes differ");
  }
  DisparityField f;
  f.attribute = x;
  f.ndi_u = spatial_lag(w_unadjusted, x);
  f.ndi_a = spatial_lag(w_adjusted, x);
  const auto n = w_unadjusted.size();
  f.bdi.resize(n);
  f.on_border.assign(static_cast<std::size_t>(n), false);
  for (ContiguityMatrix::Index i = 0; i < n; ++i) {
    const bool border = w_adjusted.degree(i) < w_unadjusted.degree(i);
    f.on_border[i] = border;
    if (w_unadjusted.degree(i) == 0) {
      f.bdi[i] = kUndefined;
    } else if (!border) {
      f.bdi[i] = std::isnan(f.ndi_u[i]) ? kUndefined : 0.0;
    } else {
      f.bdi[i] = f.ndi_u[i] - f.ndi_a[i];  // NaN when the adjusted row emptied
    }
  }
  return f;
}

std::string_view to_string(MoranClass c) {
  switch (c) {
    case MoranClass::HighHigh: return "HH";
    case MoranClass::LowLow: return "LL";
    case MoranClass::HighLow: return "HL";
    case MoranClass::LowHigh: return "LH";
    case MoranClass::NotSignificant: return "NotSig";
  }
  return "?";
}

Eigen::VectorXd standardize_population(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = x.sum() / n;
  const Eigen::VectorXd centered = x.array() - mean;
  const double sd = std::sqrt(centered.squaredNorm() / n);
  if (!(sd > 0.0)) return Eigen::VectorXd::Constant(x.size(), kUndefined);
  return centered / sd;
}

std::uint64_t unit_stream_seed(std::uint64_t seed, std::uint64_t unit) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (unit + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

LocalMoran local_morans_i(const ContiguityMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const MoranOptions& options) {
  const auto n = w.size();
  if (x.size() != n) throw ContractViolation("indices", "vector length does not match matrix size");
  if (n < 3) throw ContractViolation("indices", "local Moran's I needs at least 3 units");
  if (options.permutations < 99) throw ContractViolation("indices", "at least 99 permutations required");
  if (!w.normalized()) throw ContractViolation("indices", "local Moran's I needs a row-normalized matrix");
  if (!x.allFinite()) throw ContractViolation("indices", "local Moran's I needs a defined value for every unit");

  LocalMoran out;
  out.local_i = Eigen::VectorXd::Constant(n, kUndefined);
  out.pseudo_p = Eigen::VectorXd::Constant(n, kUndefined);
  out.cluster.assign(static_cast<std::size_t>(n), MoranClass::NotSignificant);

  const Eigen::VectorXd z = standardize_population(x);
  if (std::isnan(z[0])) return out;  // zero variance
  const Eigen::VectorXd lag = spatial_lag(w, z);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
    const auto i = static_cast<ContiguityMatrix::Index>(ui);
    const auto k = static_cast<std::size_t>(w.degree(i));
    if (k == 0) return;
    const double observed = z[i] * lag[i];
    out.local_i[i] = observed;

    // Draw k of the other n-1 values without replacement per permutation.
    std::mt19937_64 rng(unit_stream_seed(options.seed, ui));
    std::vector<ContiguityMatrix::Index> pool(static_cast<std::size_t>(n) - 1);
    std::iota(pool.begin(), pool.begin() + i, 0);
    std::iota(pool.begin() + i, pool.end(), i + 1);
    const auto weights = w.row_weights(i);
    int larger = 0;
    for (int p = 0; p < options.permutations; ++p) {
      double sim_lag = 0.0;
      for (std::size_t s = 0; s < k; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
        std::swap(pool[s], pool[pick(rng)]);
        sim_lag += weights[s] * z[pool[s]];
      }
      if (z[i] * sim_lag >= observed) ++larger;
    }
    if (options.permutations - larger < larger) larger = options.permutations - larger;
    const double p_value = (larger + 1.0) / (options.permutations + 1.0);
    out.pseudo_p[i] = p_value;
    if (p_value > options.alpha) return;
    if (z[i] > 0 && lag[i] > 0) {
      out.cluster[ui] = MoranClass::HighHigh;
    } else if (z[i] < 0 && lag[i] < 0) {
      out.cluster[ui] = MoranClass::LowLow;
    } else if (z[i] > 0 && lag[i] < 0) {
      out.cluster[ui] = MoranClass::HighLow;
    } else if (z[i] < 0 && lag[i] > 0) {
      out.cluster[ui] = MoranClass::LowHigh;
    }
  });
  return out;
}

}  // namespace bdi

#pragma once

#include "bdi/indices.hpp"
#include "bdi/ingestion.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bdi {

/// Linear-interpolation quantile: position q * (n - 1) in the sorted sample.
double quantile(std::span<const double> values, double q);
std::vector<double> quantiles(std::span<const double> values, std::span<const double> qs);

/// Order statistics plus mean and sample standard deviation (n - 1).
struct Distribution {
  std::size_t n = 0;
  double min = kUndefined;
  double q05 = kUndefined;
  double q25 = kUndefined;
  double median = kUndefined;
  double q75 = kUndefined;
  double q95 = kUndefined;
  double max = kUndefined;
  double mean = kUndefined;
  double sd = kUndefined;
};

/// NaN entries are skipped. An empty input gives n = 0 and NaN statistics.
Distribution describe(std::span<const double> values);

struct PooledMoments {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

/// Mean and sample sd of bdi over every border unit with a defined value.
/// Throws ContractViolation with fewer than two such units.
PooledMoments pooled_border_moments(std::span<const DisparityRecord> records);

struct ExtremeShare {
  std::size_t n = 0;       // border units of this metro and side
  double positive = 0.0;   // share with bdi > mean + k sd
  double negative = 0.0;   // share with bdi < mean - k sd
};

/// Keyed by (msa, region). Only Core and Suburb keys appear.
using ExtremeShares = std::map<std::pair<std::string, Region>, ExtremeShare>;

ExtremeShares extreme_shares(std::span<const DisparityRecord> records, const PooledMoments& pooled,
                             double k = 2.0);

struct MetroSummary {
  std::string msa_id;
  Distribution h;    // every analysis unit
  Distribution bdi;  // border units
  double city_pos = kUndefined;
  double city_neg = kUndefined;
  double sub_pos = kUndefined;
  double sub_neg = kUndefined;
  std::size_t n_suburbs = 0;
  /// Whether the metro's largest (smallest) border bdi lies in the core city.
  bool max_in_core = false;
  bool min_in_core = false;
};

/// One row per metro, sorted by id, followed by a pooled row with msa "ALL".
std::vector<MetroSummary> metro_summaries(std::span<const DisparityRecord> records,
                                          const std::map<std::string, std::size_t>& suburb_counts,
                                          double k = 2.0);

enum class Covariate {
  H,
  HGAP,
  BORDER,
  PERCBORDER,
  PERCBLK,
  BLKDIFF,
  WHTDIFF,
  MEDINC,
  MEDINCRAT,
  POPDENS,
  POPDENSRAT,
  POPRATIO,
};
inline constexpr std::size_t kCovariateCount = 12;

std::string_view to_string(Covariate c);
std::optional<Covariate> parse_covariate(std::string_view name);

using Covariates = std::array<std::optional<double>, kCovariateCount>;

/// Place-level inputs for covariates: counts and areas aggregated over the
/// place, plus boundary lengths shared with the core city.
struct PlaceProfile {
  std::string place_id;
  std::string msa_id;
  GroupCounts counts{};
  std::optional<double> median_income;
  std::optional<double> land_area_m2;
  double border_length = 0.0;  // meters shared with the core
  double perimeter = 0.0;      // meters
};

/// Suburb covariates relative to its core. Percentages and differences are
/// in percentage points; density is people per km2. Missing inputs give
/// nullopt for the dependent covariates only.
Covariates compute_covariates(const PlaceProfile& place, const PlaceProfile& core);

struct PlaceSummary {
  std::string place_id;
  std::string msa_id;
  bool is_core = false;
  std::size_t n_border = 0;
  double mean = kUndefined;
  double sum = kUndefined;
  double max = kUndefined;
  double min = kUndefined;
  double range = kUndefined;
  Covariates covariates{};

  std::optional<double> covariate(Covariate c) const { return covariates[static_cast<std::size_t>(c)]; }
};

struct PlaceSummaryResult {
  std::vector<PlaceSummary> summaries;  // suburbs by (msa, place), then each metro's core row
  std::vector<std::string> omitted;     // suburbs without border units
};

/// Aggregates each suburb's own border units (Suburb label, matching place),
/// and each metro's core border units into a pseudo-summary whose place_id is
/// the metro's core profile id.
PlaceSummaryResult place_summaries(std::span<const DisparityRecord> records,
                                   const std::map<std::string, PlaceProfile>& suburbs,
                                   const std::map<std::string, PlaceProfile>& cores_by_msa);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. nullopt when either ranking is
/// constant. Throws ContractViolation for unequal lengths or fewer than 3.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

enum class RankMetric { Max, Min };

/// ceil(fraction * count), guarded against representation error.
std::size_t cutoff_count(std::size_t count, double fraction);

/// Suburbs only (core rows skipped): descending max or ascending min, ties
/// by place id.
std::vector<PlaceSummary> rank_places(std::span<const PlaceSummary> summaries, RankMetric metric,
                                      double cutoff_fraction = 0.05);

}  // namespace bdi

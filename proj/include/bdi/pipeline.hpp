#pragma once

#include "bdi/aggregation.hpp"
#include "bdi/contiguity.hpp"
#include "bdi/indices.hpp"
#include "bdi/ingestion.hpp"
#include "bdi/regression.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace bdi {

inline constexpr std::string_view kVersion = "0.1.0";

/// The scalar analyzed across the border: Herfindahl diversity or one
/// group's share.
struct AnalysisAttribute {
  enum class Kind { Herfindahl, Percent };
  Kind kind = Kind::Herfindahl;
  Group group = Group::Black;

  /// "herfindahl" or "percent_<group>".
  static AnalysisAttribute parse(std::string_view name);
  std::string name() const;
  double evaluate(const EthnicComposition& c) const;
};

struct PipelineConfig {
  std::filesystem::path geometry;
  std::filesystem::path attributes;
  std::filesystem::path places;
  std::optional<std::filesystem::path> place_attributes;
  /// Precomputed unadjusted weights (text format) used instead of building
  /// contiguity from geometry.
  std::optional<std::filesystem::path> weights;
  /// Input for the `regress` subcommand; defaults to <output>/place_summary.csv.
  std::optional<std::filesystem::path> place_summary;

  std::map<std::string, std::set<std::string>> core_places;  // msa -> core place ids
  std::set<std::string> exclude_places;
  AnalysisAttribute attribute;
  double snap_tolerance = 0.001;
  bool moran = false;
  int permutations = 999;
  std::uint64_t seed = 42;
  double ranking_cutoff = 0.05;
  double extreme_k = 2.0;
  std::filesystem::path output_dir = "out";
  std::vector<RegressionSpec> regressions;

  /// Config echo for the run manifest (paths as written, overrides applied).
  nlohmann::json echo;
};

/// Parses the JSON document; relative paths resolve against `base_dir`.
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { Contiguity, Indices, Analyze, Regress };

/// Checks that every path the stage reads exists and the settings are
/// coherent. Throws ConfigError before any computation.
void validate(const PipelineConfig& config, Stage stage);

/// Loaded, joined and classified inputs.
struct IngestedData {
  std::vector<GeoUnit> units;
  std::vector<GeoUnit> places;
  std::map<std::string, std::set<std::string>> suburbs;  // msa -> suburb place ids
  std::optional<AttributeTable> place_attributes;
  std::vector<std::string> warnings;
};

IngestedData ingest(const PipelineConfig& config);

/// Weight matrices over the analysis set (Core or Suburb units with
/// population), with no links across metros.
struct WeightsStage {
  std::vector<std::size_t> analysis;  // indices into IngestedData::units
  std::vector<std::string> ids;
  ContiguityMatrix unadjusted;        // row-normalized
  MaskedMatrix adjusted;
};

WeightsStage build_weights(const PipelineConfig& config, const IngestedData& data);

struct IndicesStage {
  std::vector<DisparityRecord> records;            // one per analysis unit
  std::vector<std::pair<std::string, std::string>> masked_isolates;  // id, reason
  std::optional<std::vector<std::tuple<std::string, double, double, MoranClass>>> moran;
};

IndicesStage compute_indices(const PipelineConfig& config, const IngestedData& data, const WeightsStage& weights);

/// Records that appear in bdi.csv: isolates and emptied-mask units removed.
std::vector<DisparityRecord> reportable(const IndicesStage& stage);

struct AggregationStage {
  std::vector<MetroSummary> metros;
  PlaceSummaryResult places;
  std::vector<PlaceSummary> top_max;
  std::vector<PlaceSummary> top_min;
  std::size_t ranked_suburbs = 0;
};

/// Place profiles (counts, incomes, areas, shared border) of each suburb and
/// each metro's combined core.
std::pair<std::map<std::string, PlaceProfile>, std::map<std::string, PlaceProfile>> build_place_profiles(
    const PipelineConfig& config, const IngestedData& data);

AggregationStage aggregate(const PipelineConfig& config, const IngestedData& data,
                           std::span<const DisparityRecord> records);

struct RegressionStage {
  std::vector<RegressionResult> results;
  std::vector<std::string> skipped;  // specs whose dependent does not match the attribute
};

RegressionStage run_regressions(const PipelineConfig& config, std::span<const PlaceSummary> summaries,
                                const std::string& attribute_name);

// Serialization of the tabular outputs.
std::string format_bdi_csv(std::span<const DisparityRecord> records);
std::string format_metro_summary_csv(std::span<const MetroSummary> metros);
std::string format_place_summary_csv(std::span<const PlaceSummary> summaries, const std::string& attribute);
std::string format_rankings_csv(std::span<const PlaceSummary> ranked);

struct PlaceSummaryFile {
  std::string attribute;
  std::vector<PlaceSummary> summaries;
};
PlaceSummaryFile parse_place_summary_csv(std::string_view text);

/// Runs one stage and every stage before it, writing all outputs into
/// config.output_dir. Returns the process exit status.
int run_pipeline(const PipelineConfig& config, Stage stage);

}  // namespace bdi

#pragma once

#include "bdi/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace bdi {

enum class Group { White = 0, Black = 1, Asian = 2, Latino = 3, Other = 4 };
inline constexpr std::size_t kGroupCount = 5;

/// Population counts per group in Group order.
using GroupCounts = std::array<std::int64_t, kGroupCount>;

std::string_view to_string(Group g);
std::optional<Group> parse_group(std::string_view name);

/// Side of the core-city border a unit lies on.
enum class Region { Core, Suburb, Outside };

std::string_view to_string(Region r);

/// Why a unit is left out of the index computation.
enum class Exclusion { None, MissingAttributes, ZeroPopulation };

std::string_view to_string(Exclusion e);

struct GeoUnit {
  std::string id;
  std::string msa_id;
  std::string place_id;  // empty when unincorporated
  Region region = Region::Outside;
  GroupCounts counts{};
  std::optional<double> median_income;
  std::optional<double> land_area_m2;
  Exclusion exclusion = Exclusion::None;
  MultiPolygon geometry;

  std::int64_t population() const;
};

struct AttributeRow {
  GroupCounts counts{};
  std::optional<double> median_income;
  std::optional<double> land_area_m2;
};

/// Rows keyed by unit id. Ordered so that serialization is sorted by id.
struct AttributeTable {
  std::map<std::string, AttributeRow> rows;
};

/// Fixed CSV header of attribute tables.
inline constexpr std::string_view kAttributeHeader =
    "id,white,black,asian,latino,other,median_income,land_area_m2";

/// Parses a GeoJSON FeatureCollection. `source` names the input in errors.
std::vector<GeoUnit> parse_geounits(std::string_view geojson, const std::string& source = "<memory>");

std::vector<GeoUnit> load_geounits(const std::filesystem::path& path);

AttributeTable parse_attribute_table(std::string_view csv, const std::string& source = "<memory>");
AttributeTable load_attribute_table(const std::filesystem::path& path);
void write_attribute_table(const AttributeTable& table, const std::filesystem::path& path);
std::string format_attribute_table(const AttributeTable& table);

struct JoinResult {
  std::vector<GeoUnit> units;
  std::size_t populated = 0;
  std::size_t excluded = 0;
  /// One entry per table row whose id has no geometry.
  std::vector<std::string> warnings;
};

/// Fills counts, income and land area from the table. Units without a row are
/// flagged MissingAttributes; units whose row sums to zero are flagged
/// ZeroPopulation.
JoinResult join_attributes(std::vector<GeoUnit> units, const AttributeTable& table);

/// Places (not in `core_place_ids`, not in `excluded`) sharing at least one
/// boundary point with any core place, under the Queen predicate.
std::set<std::string> identify_suburbs(const std::vector<GeoUnit>& places,
                                       const std::set<std::string>& core_place_ids,
                                       double snap_tolerance = 0.001,
                                       const std::set<std::string>& excluded = {});

/// Labels by place membership: Core, Suburb, or Outside (unincorporated or
/// non-adjacent place). Throws ConfigError when `core_place_ids` is empty.
std::vector<GeoUnit> classify_regions(std::vector<GeoUnit> units,
                                      const std::set<std::string>& core_place_ids,
                                      const std::set<std::string>& suburb_place_ids);

}  // namespace bdi

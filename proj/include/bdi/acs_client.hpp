#pragma once

#include "bdi/ingestion.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bdi {

/// One ACS 5-year block-group extract request. `endpoint` is the dataset
/// URL, e.g. https://api.census.gov/data/2016/acs/acs5.
struct AcsRequest {
  std::string endpoint;
  std::string api_key;
  std::string state;
  std::vector<std::string> counties;
};

/// Census variables pulled per block group. Groups are non-Hispanic except
/// Latino; Other is the remainder of the total.
struct AcsVariables {
  static constexpr std::string_view total = "B03002_001E";
  static constexpr std::string_view white = "B03002_003E";
  static constexpr std::string_view black = "B03002_004E";
  static constexpr std::string_view asian = "B03002_006E";
  static constexpr std::string_view latino = "B03002_012E";
  static constexpr std::string_view median_income = "B19013_001E";
};

/// Parses the API's array-of-arrays response (first row is the header) into
/// rows keyed by the 12-digit block-group GEOID. Throws ColumnMappingError
/// when a required column is missing.
AttributeTable parse_acs_response(std::string_view body);

/// Downloads every county in the request, merges the rows and writes an
/// attribute CSV sorted by id. Nothing is written if any request fails.
AttributeTable fetch_acs_extract(const AcsRequest& request, const std::filesystem::path& out_path);

}  // namespace bdi

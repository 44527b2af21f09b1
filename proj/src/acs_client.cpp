#include "bdi/acs_client.hpp"

#include "bdi/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace bdi {

namespace {

constexpr const char* kModule = "ingestion.fetch";

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(kModule, "endpoint is not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::int64_t as_count(const std::string& field, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    // Census marks suppressed cells with large negative sentinels.
    if (v < 0 || !std::isfinite(v)) return 0;
    return static_cast<std::int64_t>(std::llround(v));
  } catch (const std::exception&) {
    throw ColumnMappingError(kModule, "non-numeric value '" + field + "' in column " + column);
  }
}

}  // namespace

AttributeTable parse_acs_response(std::string_view body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw TransportError(kModule, "response is not JSON", 200);
  }
  if (!doc.is_array() || doc.empty() || !doc[0].is_array()) {
    throw ColumnMappingError(kModule, "response is not an array of rows");
  }
  const auto& header = doc[0];
  const auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i].is_string() && header[i].get<std::string>() == name) return i;
    }
    throw ColumnMappingError(kModule, "response lacks column '" + std::string(name) + "'");
  };
  const std::size_t c_total = column(AcsVariables::total);
  const std::size_t c_white = column(AcsVariables::white);
  const std::size_t c_black = column(AcsVariables::black);
  const std::size_t c_asian = column(AcsVariables::asian);
  const std::size_t c_latino = column(AcsVariables::latino);
  const std::size_t c_income = column(AcsVariables::median_income);
  const std::size_t c_state = column("state");
  const std::size_t c_county = column("county");
  const std::size_t c_tract = column("tract");
  const std::size_t c_bg = column("block group");

  AttributeTable table;
  for (std::size_t r = 1; r < doc.size(); ++r) {
    const auto& row = doc[r];
    if (!row.is_array() || row.size() != header.size()) {
      throw ColumnMappingError(kModule, "row " + std::to_string(r) + " has the wrong width");
    }
    const auto cell = [&](std::size_t c) { return row[c].is_null() ? std::string() : row[c].get<std::string>(); };
    const std::string id = cell(c_state) + cell(c_county) + cell(c_tract) + cell(c_bg);
    AttributeRow a;
    const std::int64_t total = as_count(cell(c_total), "total");
    a.counts[static_cast<std::size_t>(Group::White)] = as_count(cell(c_white), "white");
    a.counts[static_cast<std::size_t>(Group::Black)] = as_count(cell(c_black), "black");
    a.counts[static_cast<std::size_t>(Group::Asian)] = as_count(cell(c_asian), "asian");
    a.counts[static_cast<std::size_t>(Group::Latino)] = as_count(cell(c_latino), "latino");
    std::int64_t named = 0;
    for (std::size_t g = 0; g + 1 < kGroupCount; ++g) named += a.counts[g];
    a.counts[static_cast<std::size_t>(Group::Other)] = std::max<std::int64_t>(0, total - named);
    const std::string income = cell(c_income);
    if (!income.empty()) {
      const double v = std::strtod(income.c_str(), nullptr);
      if (v >= 0) a.median_income = v;
    }
    table.rows.insert_or_assign(id, a);
  }
  return table;
}

AttributeTable fetch_acs_extract(const AcsRequest& request, const std::filesystem::path& out_path) {
  if (request.counties.empty()) throw ConfigError(kModule, "no county given");
  if (request.state.empty()) throw ConfigError(kModule, "no state given");
  const Url url = split_url(request.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);

  const std::string vars = std::string(AcsVariables::total) + "," + std::string(AcsVariables::white) + "," +
                           std::string(AcsVariables::black) + "," + std::string(AcsVariables::asian) + "," +
                           std::string(AcsVariables::latino) + "," + std::string(AcsVariables::median_income);
  AttributeTable merged;
  for (const std::string& county : request.counties) {
    httplib::Params params{{"get", vars},
                           {"for", "block group:*"},
                           {"in", "state:" + request.state},
                           {"in", "county:" + county},
                           {"in", "tract:*"}};
    if (!request.api_key.empty()) params.emplace("key", request.api_key);
    const auto res = client.Get(url.path, params, httplib::Headers{});
    if (!res) {
      throw TransportError(kModule, "request failed: " + httplib::to_string(res.error()), 0);
    }
    if (res->status != 200) {
      throw TransportError(kModule, "HTTP " + std::to_string(res->status) + " for county " + county, res->status);
    }
    AttributeTable part = parse_acs_response(res->body);
    for (auto& [id, row] : part.rows) merged.rows.insert_or_assign(id, row);
  }
  write_attribute_table(merged, out_path);
  return merged;
}

}  // namespace bdi

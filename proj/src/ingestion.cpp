#include "bdi/ingestion.hpp"

#include "bdi/contiguity.hpp"
#include "bdi/csv.hpp"
#include "bdi/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <numeric>
#include <unordered_set>

namespace bdi {

using nlohmann::json;

namespace {

constexpr const char* kModule = "ingestion";

std::string property_string(const json& props, const char* key, bool required, long index) {
  const auto it = props.find(key);
  if (it == props.end() || it->is_null()) {
    if (required) throw ParseError(kModule, std::string("feature missing '") + key + "' property", index);
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(kModule, std::string("property '") + key + "' must be a string", index);
}

Ring parse_ring(const json& coords, long index) {
  if (!coords.is_array()) throw ParseError(kModule, "ring is not an array", index);
  Ring ring;
  ring.reserve(coords.size());
  for (const json& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
      throw ParseError(kModule, "position must be [x, y]", index);
    }
    ring.emplace_back(c[0].get<double>(), c[1].get<double>());
  }
  return ring;
}

Polygon parse_polygon(const json& rings, const std::string& id, long index) {
  if (!rings.is_array() || rings.empty()) throw ParseError(kModule, "polygon has no rings", index);
  Polygon poly;
  for (const json& r : rings) {
    Ring ring = parse_ring(r, index);
    close_and_validate(ring, id);
    poly.rings.push_back(std::move(ring));
  }
  return poly;
}

MultiPolygon parse_geometry(const json& geom, const std::string& id, long index) {
  if (geom.is_null()) throw GeometryKindError(kModule, id, "null");
  if (!geom.is_object()) throw ParseError(kModule, "geometry is not an object", index);
  const std::string type = geom.value("type", "");
  const auto coords = geom.find("coordinates");
  if (type == "Polygon" || type == "MultiPolygon") {
    if (coords == geom.end()) throw ParseError(kModule, "geometry without coordinates", index);
  }
  MultiPolygon out;
  if (type == "Polygon") {
    out.parts.push_back(parse_polygon(*coords, id, index));
  } else if (type == "MultiPolygon") {
    if (!coords->is_array() || coords->empty()) throw ParseError(kModule, "empty MultiPolygon", index);
    for (const json& p : *coords) out.parts.push_back(parse_polygon(p, id, index));
  } else {
    throw GeometryKindError(kModule, id, type.empty() ? "<untyped>" : type);
  }
  return out;
}

std::int64_t parse_count(const std::string& field, long row) {
  std::int64_t v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    // Some extracts write counts as "12.0".
    const auto d = csv::parse_optional_double(field);
    if (!d || *d != static_cast<double>(static_cast<std::int64_t>(*d))) {
      throw ParseError(kModule, "count is not an integer: '" + field + "'", row);
    }
    v = static_cast<std::int64_t>(*d);
  }
  if (v < 0) throw ParseError(kModule, "negative count: '" + field + "'", row);
  return v;
}

}  // namespace

std::string_view to_string(Group g) {
  switch (g) {
    case Group::White: return "white";
    case Group::Black: return "black";
    case Group::Asian: return "asian";
    case Group::Latino: return "latino";
    case Group::Other: return "other";
  }
  return "?";
}

std::optional<Group> parse_group(std::string_view name) {
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    if (to_string(static_cast<Group>(g)) == name) return static_cast<Group>(g);
  }
  return std::nullopt;
}

std::string_view to_string(Region r) {
  switch (r) {
    case Region::Core: return "core";
    case Region::Suburb: return "suburb";
    case Region::Outside: return "outside";
  }
  return "?";
}

std::string_view to_string(Exclusion e) {
  switch (e) {
    case Exclusion::None: return "none";
    case Exclusion::MissingAttributes: return "missing_attributes";
    case Exclusion::ZeroPopulation: return "zero_population";
  }
  return "?";
}

std::int64_t GeoUnit::population() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::vector<GeoUnit> parse_geounits(std::string_view geojson, const std::string& source) {
  json doc;
  try {
    doc = json::parse(geojson);
  } catch (const json::parse_error& e) {
    throw ParseError(kModule, source + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw ParseError(kModule, source + ": not a GeoJSON FeatureCollection");
  }
  const auto features = doc.find("features");
  if (features == doc.end() || !features->is_array()) {
    throw ParseError(kModule, source + ": FeatureCollection has no features array");
  }

  std::vector<GeoUnit> units;
  units.reserve(features->size());
  std::unordered_set<std::string> seen;
  long index = 0;
  for (const json& f : *features) {
    if (!f.is_object()) throw ParseError(kModule, source + ": feature is not an object", index);
    const auto props_it = f.find("properties");
    if (props_it == f.end() || !props_it->is_object()) {
      throw ParseError(kModule, source + ": feature has no properties object", index);
    }
    GeoUnit u;
    u.id = property_string(*props_it, "id", true, index);
    u.msa_id = property_string(*props_it, "msa", false, index);
    u.place_id = property_string(*props_it, "place", false, index);
    if (!seen.insert(u.id).second) throw DuplicateKeyError(kModule, u.id);
    const auto geom = f.find("geometry");
    if (geom == f.end()) throw ParseError(kModule, source + ": feature has no geometry member", index);
    u.geometry = parse_geometry(*geom, u.id, index);
    units.push_back(std::move(u));
    ++index;
  }
  return units;
}

std::vector<GeoUnit> load_geounits(const std::filesystem::path& path) {
  return parse_geounits(csv::read_file(path), path.string());
}

AttributeTable parse_attribute_table(std::string_view text, const std::string& source) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw ParseError(kModule, source + ": empty attribute table");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != kAttributeHeader) {
    throw ColumnMappingError(kModule, source + ": expected header '" + std::string(kAttributeHeader) + "'");
  }
  AttributeTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const long line = static_cast<long>(r);
    if (row.size() != 8) throw ParseError(kModule, source + ": expected 8 columns", line);
    AttributeRow a;
    for (std::size_t g = 0; g < kGroupCount; ++g) a.counts[g] = parse_count(row[1 + g], line);
    try {
      a.median_income = csv::parse_optional_double(row[6]);
      a.land_area_m2 = csv::parse_optional_double(row[7]);
    } catch (const ParseError& e) {
      throw ParseError(kModule, source + ": " + e.what(), line);
    }
    if (a.median_income && *a.median_income < 0) throw ParseError(kModule, "negative median_income", line);
    if (a.land_area_m2 && *a.land_area_m2 < 0) throw ParseError(kModule, "negative land_area_m2", line);
    if (!table.rows.emplace(row[0], a).second) throw DuplicateKeyError(kModule, row[0]);
  }
  return table;
}

AttributeTable load_attribute_table(const std::filesystem::path& path) {
  return parse_attribute_table(csv::read_file(path), path.string());
}

std::string format_attribute_table(const AttributeTable& table) {
  std::string out(kAttributeHeader);
  out += '\n';
  for (const auto& [id, a] : table.rows) {
    csv::Row row{id};
    for (const auto c : a.counts) row.push_back(std::to_string(c));
    row.push_back(csv::format_optional(a.median_income));
    row.push_back(csv::format_optional(a.land_area_m2));
    out += csv::join(row);
  }
  return out;
}

void write_attribute_table(const AttributeTable& table, const std::filesystem::path& path) {
  csv::write_file(path, format_attribute_table(table));
}

JoinResult join_attributes(std::vector<GeoUnit> units, const AttributeTable& table) {
  JoinResult out;
  std::unordered_set<std::string> ids;
  ids.reserve(units.size());
  for (GeoUnit& u : units) {
    ids.insert(u.id);
    const auto it = table.rows.find(u.id);
    if (it == table.rows.end()) {
      u.exclusion = Exclusion::MissingAttributes;
      ++out.excluded;
      continue;
    }
    u.counts = it->second.counts;
    u.median_income = it->second.median_income;
    u.land_area_m2 = it->second.land_area_m2;
    if (u.population() == 0) {
      u.exclusion = Exclusion::ZeroPopulation;
      ++out.excluded;
    } else {
      u.exclusion = Exclusion::None;
      ++out.populated;
    }
  }
  for (const auto& [id, row] : table.rows) {
    if (!ids.contains(id)) out.warnings.push_back("attribute row '" + id + "' has no matching geometry");
  }
  out.units = std::move(units);
  return out;
}

std::set<std::string> identify_suburbs(const std::vector<GeoUnit>& places,
                                       const std::set<std::string>& core_place_ids, double snap_tolerance,
                                       const std::set<std::string>& excluded) {
  if (core_place_ids.empty()) throw ConfigError(kModule, "no core place ids given");
  std::vector<const MultiPolygon*> geoms;
  geoms.reserve(places.size());
  std::set<std::string> found_cores;
  for (const GeoUnit& p : places) {
    geoms.push_back(&p.geometry);
    if (core_place_ids.contains(p.id)) found_cores.insert(p.id);
  }
  if (found_cores.size() != core_place_ids.size()) {
    std::vector<std::string> missing;
    for (const auto& c : core_place_ids) {
      if (!found_cores.contains(c)) missing.push_back(c);
    }
    throw ConfigError(kModule, "core place polygon not found: " + missing.front(), missing);
  }
  const auto adjacency = queen_neighbors(geoms, snap_tolerance);
  std::set<std::string> suburbs;
  for (std::size_t i = 0; i < places.size(); ++i) {
    if (!core_place_ids.contains(places[i].id)) continue;
    for (const auto j : adjacency[i]) {
      const std::string& id = places[j].id;
      if (id.empty() || core_place_ids.contains(id) || excluded.contains(id)) continue;
      suburbs.insert(id);
    }
  }
  return suburbs;
}

std::vector<GeoUnit> classify_regions(std::vector<GeoUnit> units, const std::set<std::string>& core_place_ids,
                                      const std::set<std::string>& suburb_place_ids) {
  if (core_place_ids.empty()) throw ConfigError(kModule, "no core place ids given");
  for (GeoUnit& u : units) {
    if (u.place_id.empty()) {
      u.region = Region::Outside;
    } else if (core_place_ids.contains(u.place_id)) {
      u.region = Region::Core;
    } else if (suburb_place_ids.contains(u.place_id)) {
      u.region = Region::Suburb;
    } else {
      u.region = Region::Outside;
    }
  }
  return units;
}

}  // namespace bdi

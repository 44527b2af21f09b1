#include "fixtures.hpp"

#include "bdi/csv.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace bdi::testing {

namespace fs = std::filesystem;
using nlohmann::json;

MultiPolygon rectangle(double x0, double y0, double x1, double y1) {
  Ring ring{Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1), Point(x0, y0)};
  MultiPolygon m;
  m.parts.push_back(Polygon{{std::move(ring)}});
  return m;
}

std::vector<MultiPolygon> grid_geometries(int cols, int rows, double cell) {
  std::vector<MultiPolygon> out;
  out.reserve(static_cast<std::size_t>(cols * rows));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out.push_back(rectangle(c * cell, r * cell, (c + 1) * cell, (r + 1) * cell));
  }
  return out;
}

ContiguityMatrix rook_grid(int cols, int rows) {
  std::vector<std::vector<ContiguityMatrix::Index>> nb(static_cast<std::size_t>(cols * rows));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto& row = nb[static_cast<std::size_t>(r * cols + c)];
      if (c > 0) row.push_back(r * cols + c - 1);
      if (c + 1 < cols) row.push_back(r * cols + c + 1);
      if (r > 0) row.push_back((r - 1) * cols + c);
      if (r + 1 < rows) row.push_back((r + 1) * cols + c);
    }
  }
  return ContiguityMatrix::from_neighbors(nb);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bdi_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string feature_collection(const std::vector<FeatureSpec>& features) {
  json fc{{"type", "FeatureCollection"}, {"features", json::array()}};
  for (const auto& f : features) {
    json parts = json::array();
    for (const auto& poly : f.geometry.parts) {
      json rings = json::array();
      for (const auto& ring : poly.rings) {
        json coords = json::array();
        for (const auto& p : ring) coords.push_back({p.x(), p.y()});
        rings.push_back(coords);
      }
      parts.push_back(rings);
    }
    json props{{"id", f.id}};
    if (!f.msa.empty()) props["msa"] = f.msa;
    if (!f.place.empty()) props["place"] = f.place;
    json geometry = parts.size() == 1 ? json{{"type", "Polygon"}, {"coordinates", parts[0]}}
                                      : json{{"type", "MultiPolygon"}, {"coordinates", parts}};
    fc["features"].push_back({{"type", "Feature"}, {"properties", props}, {"geometry", geometry}});
  }
  return fc.dump() + "\n";
}

fs::path write_worked_example(const fs::path& dir) {
  std::vector<FeatureSpec> units;
  AttributeTable table;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      const std::string id = "u_" + std::to_string(r) + "_" + std::to_string(c);
      const bool core = c < 2;
      units.push_back({id, "M1", core ? "CORE" : "SUB", rectangle(c, r, c + 1, r + 1)});
      AttributeRow row;
      row.counts = core ? GroupCounts{20, 20, 20, 20, 20} : GroupCounts{100, 0, 0, 0, 0};
      row.land_area_m2 = 1e6;
      table.rows[id] = row;
    }
  }
  write_text(dir / "geometry.geojson", feature_collection(units));
  write_text(dir / "attributes.csv", format_attribute_table(table));
  write_text(dir / "places.geojson",
             feature_collection({{"CORE", "M1", "", rectangle(0, 0, 2, 3)}, {"SUB", "M1", "", rectangle(2, 0, 4, 3)}}));
  const json config{{"geometry", "geometry.geojson"},
                    {"attributes", "attributes.csv"},
                    {"places", "places.geojson"},
                    {"core_places", {{"M1", {"CORE"}}}},
                    {"attribute", "herfindahl"},
                    {"output_dir", "out"}};
  write_text(dir / "config.json", config.dump(2) + "\n");
  return dir / "config.json";
}

namespace {

struct Rect {
  int c0, r0, c1, r1;  // half-open cell ranges
  bool contains(int c, int r) const { return c >= c0 && c < c1 && r >= r0 && r < r1; }
};

/// Splits [lo, hi) into `parts` nearly equal consecutive ranges.
std::vector<std::pair<int, int>> split(int lo, int hi, int parts) {
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < parts; ++k) {
    out.emplace_back(lo + (hi - lo) * k / parts, lo + (hi - lo) * (k + 1) / parts);
  }
  return out;
}

GroupCounts draw_counts(std::mt19937_64& rng, const std::array<double, 5>& base, std::int64_t pop) {
  std::gamma_distribution<double> noise(4.0, 0.25);
  std::array<double, 5> w{};
  double total = 0.0;
  for (std::size_t g = 0; g < 5; ++g) {
    w[g] = base[g] * noise(rng) + 1e-3;
    total += w[g];
  }
  GroupCounts counts{};
  std::int64_t assigned = 0;
  for (std::size_t g = 0; g + 1 < 5; ++g) {
    counts[g] = static_cast<std::int64_t>(std::floor(static_cast<double>(pop) * w[g] / total));
    assigned += counts[g];
  }
  counts[4] = pop - assigned;
  return counts;
}

}  // namespace

SyntheticDataset write_synthetic_metros(const fs::path& dir, const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::int64_t> pop_dist(300, 2000);
  std::uniform_real_distribution<double> income_dist(25000.0, 140000.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<FeatureSpec> units;
  std::vector<FeatureSpec> places;
  AttributeTable table;
  AttributeTable place_table;
  json cores = json::object();
  SyntheticDataset out;

  const int outer = std::max(1, spec.cols / 9);
  const int band = std::max(1, spec.cols / 6);
  const int half = spec.suburbs_per_metro / 2;
  const int side_pieces = half / 2;
  const int top_pieces = half - side_pieces;

  for (int m = 0; m < spec.metros; ++m) {
    const std::string msa = "M" + std::to_string(m + 1);
    const int x_off = m * (spec.cols + 3);
    const Rect core{outer + band, outer + band, spec.cols - outer - band, spec.rows - outer - band};
    std::vector<std::pair<std::string, Rect>> named;
    const std::string core_id = msa + "_CORE";
    named.emplace_back(core_id, core);
    int k = 0;
    for (const auto& [a, b] : split(outer, spec.cols - outer, top_pieces)) {
      named.emplace_back(msa + "_S" + std::to_string(++k), Rect{a, core.r1, b, core.r1 + band});
      named.emplace_back(msa + "_S" + std::to_string(++k), Rect{a, core.r0 - band, b, core.r0});
    }
    for (const auto& [a, b] : split(core.r0, core.r1, side_pieces)) {
      named.emplace_back(msa + "_S" + std::to_string(++k), Rect{core.c0 - band, a, core.c0, b});
      named.emplace_back(msa + "_S" + std::to_string(++k), Rect{core.c1, a, core.c1 + band, b});
    }
    named.emplace_back(msa + "_FAR", Rect{0, 0, outer, outer});
    cores[msa] = json::array({core_id});
    out.suburbs += static_cast<std::size_t>(k);

    // Suburb composition leans to one group, shifted per place.
    std::map<std::string, std::array<double, 5>> base;
    for (const auto& [id, rect] : named) {
      if (id == core_id) {
        base[id] = {0.3, 0.3, 0.1, 0.2, 0.1};
      } else {
        base[id] = {0.6 + 0.3 * unit(rng), 0.3 * unit(rng), 0.05, 0.1 * unit(rng), 0.05};
      }
    }
    std::map<std::string, AttributeRow> place_rows;
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        if (spec.max_units != 0 && units.size() >= spec.max_units) break;
        std::string place;
        for (const auto& [id, rect] : named) {
          if (rect.contains(c, r)) place = id;
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s_%03d_%03d", msa.c_str(), r, c);
        const std::string uid = buf;
        units.push_back({uid, msa, place, rectangle(x_off + c, r, x_off + c + 1, r + 1)});
        const int cell = r * spec.cols + c;
        if (cell == 1) continue;  // no attribute row
        AttributeRow row;
        const std::int64_t pop = cell % 173 == 5 ? 0 : pop_dist(rng);
        const auto& b = place.empty() ? std::array<double, 5>{0.8, 0.05, 0.05, 0.05, 0.05} : base[place];
        row.counts = pop == 0 ? GroupCounts{} : draw_counts(rng, b, pop);
        row.median_income = income_dist(rng);
        row.land_area_m2 = 1e6;
        table.rows[uid] = row;
        if (!place.empty()) {
          auto& pr = place_rows[place];
          for (std::size_t g = 0; g < kGroupCount; ++g) pr.counts[g] += row.counts[g];
          pr.land_area_m2 = pr.land_area_m2.value_or(0.0) + 1e6;
        }
      }
    }
    for (const auto& [id, rect] : named) {
      places.push_back({id, msa, "", rectangle(x_off + rect.c0, rect.r0, x_off + rect.c1, rect.r1)});
      auto row = place_rows[id];
      row.median_income = income_dist(rng);
      place_table.rows[id] = row;
    }
  }
  out.units = units.size();

  write_text(dir / "geometry.geojson", feature_collection(units));
  write_text(dir / "attributes.csv", format_attribute_table(table));
  write_text(dir / "places.geojson", feature_collection(places));
  write_text(dir / "place_attributes.csv", format_attribute_table(place_table));
  json config{{"geometry", "geometry.geojson"},
              {"attributes", "attributes.csv"},
              {"places", "places.geojson"},
              {"place_attributes", "place_attributes.csv"},
              {"core_places", cores},
              {"attribute", "herfindahl"},
              {"moran", spec.moran},
              {"permutations", 199},
              {"seed", 42},
              {"output_dir", "out"}};
  if (spec.regressions) {
    config["regressions"] = json::array(
        {{{"name", "composition"}, {"dependent", "max_bdi"}, {"regressors", {"H", "PERCBLK", "MEDINC"}}},
         {{"name", "ratios"}, {"dependent", "max_bdi_h"}, {"regressors", {"HGAP", "PERCBORDER", "POPDENSRAT"}}}});
  }
  write_text(dir / "config.json", config.dump(2) + "\n");
  out.config = dir / "config.json";
  return out;
}

std::vector<Region> random_labels(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<Region> out(n);
  for (auto& r : out) r = coin(rng) ? Region::Core : Region::Suburb;
  return out;
}

Eigen::VectorXd dense_adjusted_lag(const Eigen::MatrixXd& binary, std::span<const Region> labels,
                                   const Eigen::VectorXd& x) {
  const auto n = binary.rows();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    double count = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (binary(i, j) != 0.0 && labels[i] == labels[j]) {
        sum += x[j];
        count += 1.0;
      }
    }
    out[i] = count > 0.0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace bdi::testing

#include <doctest.h>

#include "bdi/csv.hpp"
#include "bdi/errors.hpp"
#include "bdi/pipeline.hpp"
#include "fixtures.hpp"

#include <json.hpp>

#include <cstdlib>
#include <set>
#include <sys/wait.h>

using namespace bdi;
namespace fs = std::filesystem;
using bdi::testing::read_text;
using bdi::testing::write_text;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BDI_EXECUTABLE) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, csv::Row> rows_by_id(const fs::path& file) {
  const auto rows = csv::parse(read_text(file));
  std::map<std::string, csv::Row> out;
  for (std::size_t i = 1; i < rows.size(); ++i) out[rows[i][0]] = rows[i];
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing resolves paths and rejects unknown keys") {
  const auto c = parse_config(R"({"geometry":"g.geojson","attributes":"/abs/a.csv","places":"p.geojson",
                                   "core_places":{"M1":"C1","M2":["C2","C3"]},"attribute":"percent_black",
                                   "seed":9,"permutations":499,"moran":true})",
                              "/base");
  CHECK(c.geometry == fs::path("/base/g.geojson"));
  CHECK(c.attributes == fs::path("/abs/a.csv"));
  CHECK(c.core_places.at("M1") == std::set<std::string>{"C1"});
  CHECK(c.core_places.at("M2").size() == 2);
  CHECK(c.attribute.name() == "percent_black");
  CHECK(c.seed == 9);
  CHECK(c.moran);
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK_FALSE(c.echo.contains("output_dir"));

  CHECK_THROWS_AS(parse_config(R"({"geometry":"g","colour":"red"})", "/"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"attribute":"percent_martian"})", "/"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"regressions":[{"name":"x","regressors":["NOPE"]}]})", "/"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1,2", "/"), ConfigError);
}

TEST_CASE("validation fails on a missing file before any output is written") {
  const auto dir = bdi::testing::scratch_dir("missing");
  const auto config = bdi::testing::write_worked_example(dir);
  fs::remove(dir / "attributes.csv");
  const auto c = load_config(config);
  try {
    run_pipeline(c, Stage::Analyze);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("attributes") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(run_cli("analyze --config " + config.string()) == 1);
}

TEST_CASE("worked example through the command line") {
  const auto dir = bdi::testing::scratch_dir("worked_cli");
  const auto config = bdi::testing::write_worked_example(dir);
  REQUIRE(run_cli("bdi --config " + config.string()) == 0);
  const auto rows = rows_by_id(dir / "out" / "bdi.csv");
  REQUIRE(rows.size() == 12);
  const auto& core = rows.at(bdi::testing::kWorkedCoreUnit);
  CHECK(std::abs(std::stod(core[5]) - 0.5) <= 1e-12);
  CHECK(std::abs(std::stod(core[6]) - 0.8) <= 1e-12);
  CHECK(std::abs(std::stod(core[7]) + 0.3) <= 1e-12);
  CHECK(core[8] == "1");
  const auto& sub = rows.at(bdi::testing::kWorkedSuburbUnit);
  CHECK(std::abs(std::stod(sub[7]) - 0.3) <= 1e-12);
  CHECK(rows.at("u_1_0")[7] == "0");
  CHECK(rows.at("u_1_0")[8] == "0");

  const auto geo = nlohmann::json::parse(read_text(dir / "out" / "bdi.geojson"));
  CHECK(geo["features"].size() == 12);
  const auto in = nlohmann::json::parse(read_text(dir / "geometry.geojson"));
  CHECK(geo["features"][5]["geometry"] == in["features"][5]["geometry"]);
  CHECK(geo["features"][5]["properties"]["bdi_ndi_u"].get<double>() == doctest::Approx(0.5));

  const auto manifest = nlohmann::json::parse(read_text(dir / "out" / "run_manifest.json"));
  CHECK(manifest["subcommand"] == "bdi");
  CHECK(manifest["effective"]["seed"] == 42);
}

TEST_CASE("contiguity on a 3x3 grid lists eight weights of 0.125 for the center") {
  const auto dir = bdi::testing::scratch_dir("grid3");
  std::vector<bdi::testing::FeatureSpec> f;
  const auto g = bdi::testing::grid_geometries(3, 3);
  for (std::size_t i = 0; i < g.size(); ++i) f.push_back({"g" + std::to_string(i), "M", "", g[i]});
  write_text(dir / "grid.geojson", bdi::testing::feature_collection(f));
  write_text(dir / "config.json", R"({"geometry":"grid.geojson","output_dir":"out"})");
  REQUIRE(run_cli("contiguity --config " + (dir / "config.json").string()) == 0);
  const auto text = read_text(dir / "out" / "weights.txt");
  CHECK(text.find("g4 8 g0:0.125 g1:0.125 g2:0.125 g3:0.125 g5:0.125 g6:0.125 g7:0.125 g8:0.125\n") !=
        std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "weights_adjusted.txt"));
}

TEST_CASE("unknown subcommand prints usage and exits 2") {
  CHECK(run_cli("frobnicate --config x.json") == 2);
  CHECK(run_cli("") == 2);
}

TEST_CASE("fetch refuses to run without the credential variable") {
  CHECK(run_cli("fetch --acs-endpoint http://127.0.0.1:9/x --state 17 --county 031 --out-file /tmp/x.csv "
                "--acs-key-env BDI_TEST_UNSET_VARIABLE") == 1);
}

TEST_CASE("synthetic metros: composability, attribute switch and diagnostics") {
  const auto dir = bdi::testing::scratch_dir("compose");
  bdi::testing::SyntheticSpec spec;
  spec.cols = 24;
  spec.rows = 24;
  spec.suburbs_per_metro = 6;
  spec.metros = 3;
  const auto ds = bdi::testing::write_synthetic_metros(dir, spec);
  REQUIRE(run_cli("analyze --config " + ds.config.string()) == 0);
  const fs::path out = dir / "out";
  const auto manifest = nlohmann::json::parse(read_text(out / "run_manifest.json"));
  CHECK(manifest["counts"]["suburbs_identified"] == 18);

  // regress on the saved place summary reproduces the analyze regression
  REQUIRE(run_cli("regress --config " + ds.config.string() + " --out " + (dir / "reg").string() +
                  " ") == 1);  // no place_summary in reg/
  auto c = load_config(ds.config);
  c.output_dir = dir / "reg";
  c.place_summary = out / "place_summary.csv";
  REQUIRE(run_pipeline(c, Stage::Regress) == 0);
  CHECK(read_text(dir / "reg" / "regression.csv") == read_text(out / "regression.csv"));
  CHECK(read_text(dir / "reg" / "regression_ratios.csv") == read_text(out / "regression_ratios.csv"));

  // chained bdi then analyze produce the same bdi.csv
  REQUIRE(run_cli("bdi --config " + ds.config.string() + " --out " + (dir / "chain").string()) == 0);
  CHECK(read_text(dir / "chain" / "bdi.csv") == read_text(out / "bdi.csv"));

  // attribute switch changes only the attribute-dependent columns
  REQUIRE(run_cli("analyze --attribute percent_black --config " + ds.config.string() + " --out " +
                  (dir / "pblack").string()) == 0);
  const auto h_rows = rows_by_id(out / "bdi.csv");
  const auto b_rows = rows_by_id(dir / "pblack" / "bdi.csv");
  REQUIRE(h_rows.size() == b_rows.size());
  for (const auto& [id, row] : h_rows) {
    const auto& other = b_rows.at(id);
    for (std::size_t k : {1, 2, 3, 8}) CHECK(row[k] == other[k]);
  }
  const auto meta = nlohmann::json::parse(read_text(dir / "pblack" / "regression_meta.json"));
  CHECK(meta["skipped"] == nlohmann::json::array({"ratios"}));

  // every unit in exactly one of bdi.csv, excluded_units.csv, masked_isolates.csv
  std::multiset<std::string> seen;
  for (const auto* name : {"bdi.csv", "excluded_units.csv", "masked_isolates.csv"}) {
    for (const auto& [id, row] : rows_by_id(out / name)) seen.insert(id);
  }
  CHECK(seen.size() == ds.units);
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == ds.units);
  const auto excluded = rows_by_id(out / "excluded_units.csv");
  std::set<std::string> reasons;
  for (const auto& [id, row] : excluded) reasons.insert(row[1]);
  CHECK(reasons == std::set<std::string>{"missing_attributes", "outside", "zero_population"});

  // rankings hold ceil(5% of 18) = 1 row each
  CHECK(csv::parse(read_text(out / "rankings_max.csv")).size() == 2);

  // place summary round trip
  const auto parsed = parse_place_summary_csv(read_text(out / "place_summary.csv"));
  CHECK(format_place_summary_csv(parsed.summaries, parsed.attribute) == read_text(out / "place_summary.csv"));
}

TEST_CASE("precomputed weights file gives the same indices") {
  const auto dir = bdi::testing::scratch_dir("weights_file");
  const auto config = bdi::testing::write_worked_example(dir);
  REQUIRE(run_cli("contiguity --config " + config.string()) == 0);
  CHECK(fs::exists(dir / "out" / "weights_adjusted.txt"));
  auto doc = nlohmann::json::parse(read_text(config));
  doc["weights"] = "out/weights.txt";
  doc["output_dir"] = "out2";
  write_text(dir / "config2.json", doc.dump());
  REQUIRE(run_cli("bdi --config " + (dir / "config2.json").string()) == 0);
  CHECK(read_text(dir / "out" / "weights.txt") != "");
  REQUIRE(run_cli("bdi --config " + config.string()) == 0);
  CHECK(read_text(dir / "out2" / "bdi.csv") == read_text(dir / "out" / "bdi.csv"));
}

}  // TEST_SUITE

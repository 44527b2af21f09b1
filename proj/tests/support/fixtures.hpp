#pragma once

#include "bdi/contiguity.hpp"
#include "bdi/geometry.hpp"
#include "bdi/ingestion.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace bdi::testing {

MultiPolygon rectangle(double x0, double y0, double x1, double y1);

/// Unit squares of a cols x rows grid, row-major from the bottom-left cell.
std::vector<MultiPolygon> grid_geometries(int cols, int rows, double cell = 1.0);

/// Rook (edge-only) adjacency of a cols x rows grid.
ContiguityMatrix rook_grid(int cols, int rows);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

/// Minimal GeoJSON feature description used by the fixture writers.
struct FeatureSpec {
  std::string id;
  std::string msa;
  std::string place;
  MultiPolygon geometry;
};
std::string feature_collection(const std::vector<FeatureSpec>& features);

/// The twelve-unit worked example: a 4 x 3 grid whose left two columns are a
/// core city with five equal groups (H = 0.8) and whose right two columns are
/// a single-group suburb (H = 0). Writes geometry, attributes, places and
/// config.json into `dir` and returns the config path.
std::filesystem::path write_worked_example(const std::filesystem::path& dir);

/// Ids of the two central units of the worked example (row 1, columns 1
/// and 2).
inline const char* kWorkedCoreUnit = "u_1_1";
inline const char* kWorkedSuburbUnit = "u_1_2";

/// Grid metros: each metro is a square grid of unit cells with a central core
/// place, a band of suburb places around it and unincorporated cells outside.
struct SyntheticSpec {
  int metros = 2;
  int cols = 36;
  int rows = 36;
  int suburbs_per_metro = 10;
  std::size_t max_units = 0;  // 0 = no cap
  std::uint64_t seed = 7;
  bool moran = false;
  bool regressions = true;
};

struct SyntheticDataset {
  std::filesystem::path config;
  std::size_t units = 0;
  std::size_t suburbs = 0;
};

SyntheticDataset write_synthetic_metros(const std::filesystem::path& dir, const SyntheticSpec& spec);

/// Random 0/1 labelled 20x20-style fixture for weight-matrix tests.
std::vector<Region> random_labels(std::size_t n, std::mt19937_64& rng);

/// Dense oracle for the adjusted lag: neighbors restricted to same-label
/// units, averaged with equal weights.
Eigen::VectorXd dense_adjusted_lag(const Eigen::MatrixXd& binary, std::span<const Region> labels,
                                   const Eigen::VectorXd& x);

}  // namespace bdi::testing

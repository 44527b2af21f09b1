#include <doctest.h>

#include "bdi/contiguity.hpp"
#include "bdi/indices.hpp"
#include "bdi/parallel.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <random>

using namespace bdi;
using bdi::testing::grid_geometries;

TEST_SUITE("indices") {

TEST_CASE("Herfindahl of known compositions") {
  CHECK(herfindahl(EthnicComposition::from_counts({20, 20, 20, 20, 20})) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(herfindahl(EthnicComposition::from_counts({100, 0, 0, 0, 0})) == 0.0);
  CHECK(herfindahl(EthnicComposition::from_counts({50, 50, 0, 0, 0})) == doctest::Approx(0.5));
  CHECK_THROWS_AS(EthnicComposition::from_counts({0, 0, 0, 0, 0}), ContractViolation);
}

TEST_CASE("proportion validation") {
  EthnicComposition::Proportions p;
  p << 0.5, 0.5, 0.1, 0.0, 0.0;
  CHECK_THROWS_AS(EthnicComposition::from_proportions(p), ContractViolation);
  p << 1.2, -0.2, 0.0, 0.0, 0.0;
  CHECK_THROWS_AS(EthnicComposition::from_proportions(p), ContractViolation);
}

TEST_CASE("Herfindahl is generic over scalar types") {
  Eigen::Matrix<float, 5, 1> p = Eigen::Matrix<float, 5, 1>::Constant(0.2f);
  CHECK(herfindahl(p) == doctest::Approx(0.8f));
}

TEST_CASE("percent attribute") {
  const auto c = EthnicComposition::from_counts({10, 30, 0, 60, 0});
  CHECK(percent_attribute(c, Group::Black) == doctest::Approx(0.3));
}

TEST_CASE("spatial lag equals the dense product") {
  const auto w = row_normalize(build_queen_contiguity(grid_geometries(5, 4)));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x(w.size());
  for (auto& v : x) v = u(rng);
  const Eigen::VectorXd dense = w.to_dense() * x;
  const Eigen::VectorXd lag = spatial_lag(w, x);
  CHECK((dense - lag).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(spatial_lag(build_queen_contiguity(grid_geometries(5, 4)), x), ContractViolation);
  CHECK_THROWS_AS(spatial_lag(w, Eigen::VectorXd::Zero(3)), ContractViolation);
}

TEST_CASE("empty rows lag to undefined") {
  std::vector<MultiPolygon> g = grid_geometries(2, 1);
  g.push_back(bdi::testing::rectangle(9, 9, 10, 10));
  const auto w = row_normalize(build_queen_contiguity(g));
  const Eigen::VectorXd lag = spatial_lag(w, Eigen::Vector3d(1, 2, 3));
  CHECK(lag[0] == 2.0);
  CHECK(std::isnan(lag[2]));
}

TEST_CASE("border disparity on the twelve-unit example") {
  const auto wu = row_normalize(build_queen_contiguity(grid_geometries(4, 3)));
  std::vector<Region> labels(12);
  Eigen::VectorXd h(12);
  for (int i = 0; i < 12; ++i) {
    const bool core = i % 4 < 2;
    labels[static_cast<std::size_t>(i)] = core ? Region::Core : Region::Suburb;
    h[i] = herfindahl(EthnicComposition::from_counts(core ? GroupCounts{20, 20, 20, 20, 20}
                                                          : GroupCounts{100, 0, 0, 0, 0}));
  }
  const auto wa = mask_cross_border(wu, labels);
  const auto f = border_disparity(wu, wa.matrix, h);
  CHECK(std::abs(f.ndi_u[5] - 0.5) <= 1e-12);
  CHECK(std::abs(f.ndi_a[5] - 0.8) <= 1e-12);
  CHECK(std::abs(f.bdi[5] + 0.3) <= 1e-12);
  CHECK(std::abs(f.ndi_u[6] - 0.3) <= 1e-12);
  CHECK(std::abs(f.ndi_a[6] - 0.0) <= 1e-12);
  CHECK(std::abs(f.bdi[6] - 0.3) <= 1e-12);
  for (int i = 0; i < 12; ++i) {
    const bool border = i % 4 == 1 || i % 4 == 2;
    CHECK(f.on_border[static_cast<std::size_t>(i)] == border);
    if (!border) CHECK(f.bdi[i] == 0.0);
  }
}

TEST_CASE("adjusted matrix from another base is refused") {
  const auto wu = row_normalize(build_queen_contiguity(grid_geometries(4, 3)));
  const auto other = row_normalize(build_queen_contiguity(grid_geometries(3, 4)));
  std::vector<Region> labels(12, Region::Core);
  const auto wa = mask_cross_border(other, labels);
  CHECK_THROWS_AS(border_disparity(wu, wa.matrix, Eigen::VectorXd::Zero(12)), ContractViolation);
  CHECK_THROWS_AS(border_disparity(wu, wu, Eigen::VectorXd::Zero(12)), ContractViolation);
}

TEST_CASE("population standardization") {
  const Eigen::VectorXd z = standardize_population(Eigen::Vector4d(1, 2, 3, 4));
  CHECK(z.mean() == doctest::Approx(0.0));
  CHECK(z.squaredNorm() / 4.0 == doctest::Approx(1.0));
  CHECK(std::isnan(standardize_population(Eigen::Vector3d(2, 2, 2))[0]));
}

TEST_CASE("local Moran's I matches the dense formula") {
  const auto w = row_normalize(build_queen_contiguity(grid_geometries(6, 6)));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Eigen::VectorXd x(36);
  for (auto& v : x) v = n01(rng);
  const auto lm = local_morans_i(w, x, MoranOptions{199, 1, 0.05});
  const Eigen::VectorXd z = (x.array() - x.mean()) / std::sqrt((x.array() - x.mean()).square().mean());
  const Eigen::VectorXd oracle = z.cwiseProduct(w.to_dense() * z);
  CHECK((lm.local_i - oracle).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < 36; ++i) {
    CHECK(lm.pseudo_p[i] >= 1.0 / 200.0);
    CHECK(lm.pseudo_p[i] <= 1.0);
  }
}

TEST_CASE("checkerboard on a rook grid is negative everywhere") {
  const auto w = row_normalize(bdi::testing::rook_grid(4, 4));
  Eigen::VectorXd x(16);
  for (int i = 0; i < 16; ++i) x[i] = ((i / 4) + (i % 4)) % 2;
  const auto lm = local_morans_i(w, x);
  CHECK(lm.local_i.maxCoeff() < 0.0);
}

TEST_CASE("strong clusters are classified") {
  const auto w = row_normalize(build_queen_contiguity(grid_geometries(10, 10)));
  Eigen::VectorXd x(100);
  for (int i = 0; i < 100; ++i) x[i] = (i % 10) < 5 ? 10.0 + 0.01 * i : 0.01 * i;
  const auto lm = local_morans_i(w, x, MoranOptions{999, 9, 0.05});
  CHECK(lm.cluster[51] == MoranClass::HighHigh);
  CHECK(lm.cluster[58] == MoranClass::LowLow);
  CHECK(lm.local_i[0] > 0.0);
  CHECK(to_string(MoranClass::HighHigh) == "HH");
  CHECK(to_string(MoranClass::NotSignificant) == "NotSig");
}

TEST_CASE("pseudo p-values depend only on the seed") {
  const auto w = row_normalize(build_queen_contiguity(grid_geometries(10, 10)));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u;
  Eigen::VectorXd x(100);
  for (auto& v : x) v = u(rng);
  set_thread_count(1);
  const auto a = local_morans_i(w, x, MoranOptions{499, 77, 0.05});
  set_thread_count(4);
  const auto b = local_morans_i(w, x, MoranOptions{499, 77, 0.05});
  set_thread_count(0);
  CHECK((a.pseudo_p.array() == b.pseudo_p.array()).all());
  const auto c = local_morans_i(w, x, MoranOptions{499, 78, 0.05});
  CHECK_FALSE((a.pseudo_p.array() == c.pseudo_p.array()).all());
  CHECK(unit_stream_seed(1, 2) != unit_stream_seed(2, 1));
}

TEST_CASE("Moran preconditions") {
  const auto w = row_normalize(build_queen_contiguity(grid_geometries(2, 1)));
  CHECK_THROWS_AS(local_morans_i(w, Eigen::Vector2d(1, 2)), ContractViolation);
  const auto w3 = row_normalize(build_queen_contiguity(grid_geometries(3, 1)));
  CHECK_THROWS_AS(local_morans_i(w3, Eigen::Vector3d(1, 2, 3), MoranOptions{10, 1, 0.05}), ContractViolation);
  const auto flat = local_morans_i(w3, Eigen::Vector3d(1, 1, 1));
  CHECK(std::isnan(flat.local_i[1]));
  CHECK(flat.cluster[1] == MoranClass::NotSignificant);
}

}  // TEST_SUITE

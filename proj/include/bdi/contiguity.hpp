#pragma once

#include "bdi/geometry.hpp"
#include "bdi/ingestion.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bdi {

/// Sparse neighbor weights over n units. Rows are sorted by neighbor index
/// and never contain the diagonal.
class ContiguityMatrix {
 public:
  using Index = int;
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor, Index>;

  ContiguityMatrix() = default;
  ContiguityMatrix(Storage weights, bool normalized, std::uint64_t derived_from = 0);

  /// Unnormalized (all weights 1) matrix from neighbor lists. The lists are
  /// symmetrized; self references are dropped.
  static ContiguityMatrix from_neighbors(const std::vector<std::vector<Index>>& neighbors);

  Index size() const { return static_cast<Index>(weights_.rows()); }
  bool normalized() const { return normalized_; }
  const Storage& weights() const { return weights_; }

  Index degree(Index i) const { return weights_.outerIndexPtr()[i + 1] - weights_.outerIndexPtr()[i]; }

  /// Neighbor indices of row i, ascending.
  std::span<const Index> neighbors(Index i) const {
    const Index begin = weights_.outerIndexPtr()[i];
    return {weights_.innerIndexPtr() + begin, static_cast<std::size_t>(degree(i))};
  }
  std::span<const double> row_weights(Index i) const {
    const Index begin = weights_.outerIndexPtr()[i];
    return {weights_.valuePtr() + begin, static_cast<std::size_t>(degree(i))};
  }

  /// Hash of the sparsity pattern; identifies the matrix a masked matrix was
  /// derived from.
  std::uint64_t structure_fingerprint() const;

  /// Fingerprint of the matrix this one was masked from, 0 if not masked.
  std::uint64_t derived_from() const { return derived_from_; }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(weights_); }

 private:
  Storage weights_;
  bool normalized_ = false;
  std::uint64_t derived_from_ = 0;
};

/// Index pairs (i, j), i < j, whose geometries share a boundary point after
/// snapping to `snap_tolerance`: a common quantized vertex, or a vertex lying
/// within the tolerance of the other's boundary segment.
std::vector<std::vector<ContiguityMatrix::Index>> queen_neighbors(
    std::span<const MultiPolygon* const> geometries, double snap_tolerance);

/// First-order Queen contiguity, unnormalized. Isolated units get empty rows.
ContiguityMatrix build_queen_contiguity(const std::vector<GeoUnit>& units, double snap_tolerance = 0.001);
ContiguityMatrix build_queen_contiguity(std::span<const MultiPolygon> geometries,
                                        double snap_tolerance = 0.001);

/// Every nonempty row scaled to sum to one (each weight 1/degree for a 0/1
/// matrix). Idempotent.
ContiguityMatrix row_normalize(const ContiguityMatrix& w);

/// Drops entries (i, j) with unequal labels.
ContiguityMatrix drop_cross_label(const ContiguityMatrix& w, std::span<const int> labels);

struct MaskedMatrix {
  ContiguityMatrix matrix;
  /// Rows that had neighbors before masking and none after.
  std::vector<ContiguityMatrix::Index> emptied;
};

/// Removes every pair whose region labels differ and re-normalizes the
/// surviving rows. The result remembers the fingerprint of `w`.
MaskedMatrix mask_cross_border(const ContiguityMatrix& w, std::span<const Region> labels);

/// True where the unit has at least one neighbor with a different label.
std::vector<bool> border_flags(const ContiguityMatrix& w, std::span<const Region> labels);

/// Total length of boundary shared by two polygons (after snapping vertices
/// to the tolerance lattice). Zero for point-only contact.
double shared_border_length(const MultiPolygon& a, const MultiPolygon& b, double snap_tolerance = 0.001);

/// Text form: one line per unit, `id n_neighbors id:weight ...`.
std::string format_weights(const ContiguityMatrix& w, std::span<const std::string> ids);

struct WeightsFile {
  std::vector<std::string> ids;
  ContiguityMatrix matrix;
};

/// Inverse of format_weights. `normalized` is set when every nonempty row
/// sums to one within 1e-12.
WeightsFile parse_weights(std::string_view text);

}  // namespace bdi

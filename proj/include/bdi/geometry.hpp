#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bdi {

using Point = Eigen::Vector2d;

/// Closed ring: first vertex equals last, at least 4 vertices.
using Ring = std::vector<Point, Eigen::aligned_allocator<Point>>;

/// One polygon part: an outer ring followed by optional holes.
struct Polygon {
  std::vector<Ring> rings;
};

/// Polygon or multipolygon. A single Polygon is a MultiPolygon with one part.
struct MultiPolygon {
  std::vector<Polygon> parts;

  bool empty() const { return parts.empty(); }
};

struct Segment {
  Point a;
  Point b;
};

/// Throws GeometryError when a ring has fewer than 4 vertices. Appends the
/// first vertex when the ring is not closed.
void close_and_validate(Ring& ring, const std::string& owner);

/// All boundary segments of every ring of every part. Degenerate
/// (zero-length) segments are skipped.
std::vector<Segment> boundary_segments(const MultiPolygon& geom);

/// Total boundary length (outer rings and holes).
double perimeter(const MultiPolygon& geom);

/// Signed-area magnitude with holes subtracted.
double area(const MultiPolygon& geom);

struct Box {
  double min_x, min_y, max_x, max_y;

  bool intersects(const Box& o, double pad) const {
    return min_x <= o.max_x + pad && o.min_x <= max_x + pad && min_y <= o.max_y + pad &&
           o.min_y <= max_y + pad;
  }
};

Box bounding_box(const MultiPolygon& geom);

/// Integer lattice key of a coordinate after snapping to `tolerance` meters.
/// With tolerance 0 the key is the exact bit pattern of the coordinate, so
/// only bit-identical vertices collide.
struct QuantizedPoint {
  std::int64_t x;
  std::int64_t y;

  friend bool operator==(const QuantizedPoint&, const QuantizedPoint&) = default;
};

struct QuantizedPointHash {
  std::size_t operator()(const QuantizedPoint& p) const noexcept;
};

QuantizedPoint quantize(const Point& p, double tolerance);

/// Euclidean distance from `p` to segment `s`.
double distance_to_segment(const Point& p, const Segment& s);

/// Length of the collinear overlap of two segments. Zero unless both
/// endpoints of the shorter segment's supporting line lie within `tolerance`
/// of the other's line, i.e. the segments run along each other.
double collinear_overlap(const Segment& s, const Segment& t, double tolerance);

/// Uniform-grid index over segments for proximity queries.
class SegmentGrid {
 public:
  SegmentGrid(std::span<const Segment> segments, double cell_size);

  /// Calls `visit(segment_index)` for each segment whose grid cells overlap
  /// the box. A segment may be visited more than once.
  template <typename Visit>
  void query(const Box& box, Visit&& visit) const {
    const auto [cx0, cy0] = cell_of(box.min_x, box.min_y);
    const auto [cx1, cy1] = cell_of(box.max_x, box.max_y);
    for (std::int64_t cx = cx0; cx <= cx1; ++cx) {
      for (std::int64_t cy = cy0; cy <= cy1; ++cy) {
        const auto it = find(cx, cy);
        if (it == nullptr) continue;
        for (const std::uint32_t idx : *it) visit(idx);
      }
    }
  }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(double x, double y) const;
  const std::vector<std::uint32_t>* find(std::int64_t cx, std::int64_t cy) const;

  double cell_size_;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

}  // namespace bdi

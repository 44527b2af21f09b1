#include "bdi/geometry.hpp"

#include "bdi/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace bdi {

void close_and_validate(Ring& ring, const std::string& owner) {
  if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());
  if (ring.size() < 4) {
    throw GeometryError("ingestion", "ring of '" + owner + "' has fewer than 4 vertices", {owner});
  }
  for (const Point& p : ring) {
    if (!p.allFinite()) {
      throw GeometryError("ingestion", "ring of '" + owner + "' has a non-finite coordinate", {owner});
    }
  }
}

std::vector<Segment> boundary_segments(const MultiPolygon& geom) {
  std::vector<Segment> out;
  for (const Polygon& part : geom.parts) {
    for (const Ring& ring : part.rings) {
      for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        if (ring[i] != ring[i + 1]) out.push_back({ring[i], ring[i + 1]});
      }
    }
  }
  return out;
}

double perimeter(const MultiPolygon& geom) {
  double total = 0.0;
  for (const Segment& s : boundary_segments(geom)) total += (s.b - s.a).norm();
  return total;
}

namespace {

double ring_area(const Ring& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    twice += ring[i].x() * ring[i + 1].y() - ring[i + 1].x() * ring[i].y();
  }
  return 0.5 * std::abs(twice);
}

}  // namespace

double area(const MultiPolygon& geom) {
  double total = 0.0;
  for (const Polygon& part : geom.parts) {
    for (std::size_t r = 0; r < part.rings.size(); ++r) {
      const double a = ring_area(part.rings[r]);
      total += r == 0 ? a : -a;
    }
  }
  return total;
}

Box bounding_box(const MultiPolygon& geom) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Box box{inf, inf, -inf, -inf};
  for (const Polygon& part : geom.parts) {
    for (const Ring& ring : part.rings) {
      for (const Point& p : ring) {
        box.min_x = std::min(box.min_x, p.x());
        box.min_y = std::min(box.min_y, p.y());
        box.max_x = std::max(box.max_x, p.x());
        box.max_y = std::max(box.max_y, p.y());
      }
    }
  }
  return box;
}

std::size_t QuantizedPointHash::operator()(const QuantizedPoint& p) const noexcept {
  // splitmix64 finalizer over the packed pair
  std::uint64_t h = static_cast<std::uint64_t>(p.x) * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(p.y);
  h ^= h >> 30;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 27;
  h *= 0x94D049BB133111EBULL;
  h ^= h >> 31;
  return static_cast<std::size_t>(h);
}

QuantizedPoint quantize(const Point& p, double tolerance) {
  if (tolerance > 0.0) {
    return {std::llround(p.x() / tolerance), std::llround(p.y() / tolerance)};
  }
  // +0.0 and -0.0 must collide
  const double x = p.x() == 0.0 ? 0.0 : p.x();
  const double y = p.y() == 0.0 ? 0.0 : p.y();
  return {std::bit_cast<std::int64_t>(x), std::bit_cast<std::int64_t>(y)};
}

double distance_to_segment(const Point& p, const Segment& s) {
  const Point d = s.b - s.a;
  const double len2 = d.squaredNorm();
  if (len2 == 0.0) return (p - s.a).norm();
  const double t = std::clamp((p - s.a).dot(d) / len2, 0.0, 1.0);
  return (p - (s.a + t * d)).norm();
}

double collinear_overlap(const Segment& s, const Segment& t, double tolerance) {
  const Point d = s.b - s.a;
  const double len = d.norm();
  if (len == 0.0 || (t.b - t.a).norm() == 0.0) return 0.0;
  const Point u = d / len;
  const auto offset = [&](const Point& p) {
    const Point r = p - s.a;
    return std::abs(u.x() * r.y() - u.y() * r.x());
  };
  if (offset(t.a) > tolerance || offset(t.b) > tolerance) return 0.0;
  const double p0 = (t.a - s.a).dot(u);
  const double p1 = (t.b - s.a).dot(u);
  const double lo = std::max(0.0, std::min(p0, p1));
  const double hi = std::min(len, std::max(p0, p1));
  return hi > lo ? hi - lo : 0.0;
}

SegmentGrid::SegmentGrid(std::span<const Segment> segments, double cell_size) : cell_size_(cell_size) {
  if (segments.empty()) return;
  constexpr double inf = std::numeric_limits<double>::infinity();
  Box extent{inf, inf, -inf, -inf};
  for (const Segment& s : segments) {
    extent.min_x = std::min({extent.min_x, s.a.x(), s.b.x()});
    extent.min_y = std::min({extent.min_y, s.a.y(), s.b.y()});
    extent.max_x = std::max({extent.max_x, s.a.x(), s.b.x()});
    extent.max_y = std::max({extent.max_y, s.a.y(), s.b.y()});
  }
  origin_x_ = extent.min_x;
  origin_y_ = extent.min_y;
  // keep the cell count per axis bounded
  const double span = std::max(extent.max_x - extent.min_x, extent.max_y - extent.min_y);
  cell_size_ = std::max({cell_size_, span / 65536.0, 1e-9});

  for (std::uint32_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    const auto [cx0, cy0] = cell_of(std::min(s.a.x(), s.b.x()), std::min(s.a.y(), s.b.y()));
    const auto [cx1, cy1] = cell_of(std::max(s.a.x(), s.b.x()), std::max(s.a.y(), s.b.y()));
    for (std::int64_t cx = cx0; cx <= cx1; ++cx) {
      for (std::int64_t cy = cy0; cy <= cy1; ++cy) {
        buckets_[(static_cast<std::uint64_t>(cx) << 32) | static_cast<std::uint32_t>(cy)].push_back(i);
      }
    }
  }
}

std::pair<std::int64_t, std::int64_t> SegmentGrid::cell_of(double x, double y) const {
  const auto clamp_cell = [](double v) {
    return static_cast<std::int64_t>(std::clamp(std::floor(v), -1.0, 65537.0));
  };
  return {clamp_cell((x - origin_x_) / cell_size_), clamp_cell((y - origin_y_) / cell_size_)};
}

const std::vector<std::uint32_t>* SegmentGrid::find(std::int64_t cx, std::int64_t cy) const {
  const auto it = buckets_.find((static_cast<std::uint64_t>(cx) << 32) | static_cast<std::uint32_t>(cy));
  return it == buckets_.end() ? nullptr : &it->second;
}

}  // namespace bdi

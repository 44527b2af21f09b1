#include "bdi/contiguity.hpp"

#include "bdi/errors.hpp"
#include "bdi/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace bdi {

namespace {

std::atomic<unsigned> g_threads{0};

using Index = ContiguityMatrix::Index;
using Triplet = Eigen::Triplet<double, Index>;

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return h;
}

void sort_unique(std::vector<Index>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

ContiguityMatrix::Storage from_rows(Index n, const std::vector<std::vector<std::pair<Index, double>>>& rows) {
  std::vector<Triplet> triplets;
  std::size_t nnz = 0;
  for (const auto& r : rows) nnz += r.size();
  triplets.reserve(nnz);
  for (Index i = 0; i < n; ++i) {
    for (const auto& [j, w] : rows[i]) triplets.emplace_back(i, j, w);
  }
  ContiguityMatrix::Storage s(n, n);
  s.setFromTriplets(triplets.begin(), triplets.end());
  s.makeCompressed();
  return s;
}

}  // namespace

void set_thread_count(unsigned n) { g_threads.store(n); }

unsigned thread_count() {
  const unsigned n = g_threads.load();
  if (n != 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

ContiguityMatrix::ContiguityMatrix(Storage weights, bool normalized, std::uint64_t derived_from)
    : weights_(std::move(weights)), normalized_(normalized), derived_from_(derived_from) {
  if (weights_.rows() != weights_.cols()) {
    throw ContractViolation("contiguity", "weights matrix must be square");
  }
  weights_.makeCompressed();
  for (Index i = 0; i < size(); ++i) {
    for (const Index j : neighbors(i)) {
      if (j == i) throw ContractViolation("contiguity", "self-loop at row " + std::to_string(i));
    }
  }
}

ContiguityMatrix ContiguityMatrix::from_neighbors(const std::vector<std::vector<Index>>& neighbors) {
  const auto n = static_cast<Index>(neighbors.size());
  std::vector<std::vector<Index>> sym(neighbors.size());
  for (Index i = 0; i < n; ++i) {
    for (const Index j : neighbors[i]) {
      if (j < 0 || j >= n) throw ContractViolation("contiguity", "neighbor index out of range");
      if (j == i) continue;
      sym[i].push_back(j);
      sym[j].push_back(i);
    }
  }
  std::vector<std::vector<std::pair<Index, double>>> rows(neighbors.size());
  for (Index i = 0; i < n; ++i) {
    sort_unique(sym[i]);
    rows[i].reserve(sym[i].size());
    for (const Index j : sym[i]) rows[i].emplace_back(j, 1.0);
  }
  return ContiguityMatrix(from_rows(n, rows), false);
}

std::uint64_t ContiguityMatrix::structure_fingerprint() const {
  std::uint64_t h = mix(0, static_cast<std::uint64_t>(size()));
  for (Index i = 0; i <= size(); ++i) h = mix(h, static_cast<std::uint64_t>(weights_.outerIndexPtr()[i]));
  for (Index k = 0; k < weights_.nonZeros(); ++k) {
    h = mix(h, static_cast<std::uint64_t>(weights_.innerIndexPtr()[k]));
  }
  return h == 0 ? 1 : h;
}

std::vector<std::vector<Index>> queen_neighbors(std::span<const MultiPolygon* const> geometries,
                                                double snap_tolerance) {
  if (!(snap_tolerance >= 0.0)) throw ContractViolation("contiguity", "snap_tolerance must be >= 0");
  const auto n = static_cast<Index>(geometries.size());
  std::vector<std::vector<Index>> adjacency(geometries.size());

  // Shared quantized vertices.
  std::unordered_map<QuantizedPoint, std::vector<Index>, QuantizedPointHash> buckets;
  std::vector<Segment> segments;
  std::vector<Index> owner;
  for (Index g = 0; g < n; ++g) {
    for (const Polygon& part : geometries[g]->parts) {
      for (const Ring& ring : part.rings) {
        for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
          auto& b = buckets[quantize(ring[k], snap_tolerance)];
          if (b.empty() || b.back() != g) b.push_back(g);
          if (ring[k] != ring[k + 1]) {
            segments.push_back({ring[k], ring[k + 1]});
            owner.push_back(g);
          }
        }
      }
    }
  }
  for (const auto& [key, members] : buckets) {
    if (members.size() < 2) continue;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (members[a] != members[b]) adjacency[members[a]].push_back(members[b]);
      }
    }
  }
  if (segments.empty()) return adjacency;

  // Vertices lying on another unit's edge (T-junctions).
  double mean_length = 0.0;
  for (const Segment& s : segments) mean_length += (s.b - s.a).norm();
  mean_length /= static_cast<double>(segments.size());
  const SegmentGrid grid(segments, mean_length);
  const double reach = snap_tolerance > 0.0 ? snap_tolerance : 1e-9;

  std::vector<std::vector<Index>> touching(geometries.size());
  parallel_for(geometries.size(), [&](std::size_t gi) {
    const auto g = static_cast<Index>(gi);
    auto& found = touching[gi];
    for (const Polygon& part : geometries[g]->parts) {
      for (const Ring& ring : part.rings) {
        for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
          const Point& p = ring[k];
          const Box probe{p.x() - reach, p.y() - reach, p.x() + reach, p.y() + reach};
          grid.query(probe, [&](std::uint32_t s) {
            const Index h = owner[s];
            if (h == g) return;
            if (distance_to_segment(p, segments[s]) <= reach) found.push_back(h);
          });
        }
      }
    }
    sort_unique(found);
  });
  for (Index g = 0; g < n; ++g) {
    for (const Index h : touching[g]) {
      adjacency[g].push_back(h);
      adjacency[h].push_back(g);
    }
  }
  for (auto& row : adjacency) sort_unique(row);
  return adjacency;
}

ContiguityMatrix build_queen_contiguity(const std::vector<GeoUnit>& units, double snap_tolerance) {
  std::vector<const MultiPolygon*> geoms;
  geoms.reserve(units.size());
  for (const GeoUnit& u : units) geoms.push_back(&u.geometry);
  return ContiguityMatrix::from_neighbors(queen_neighbors(geoms, snap_tolerance));
}

ContiguityMatrix build_queen_contiguity(std::span<const MultiPolygon> geometries, double snap_tolerance) {
  std::vector<const MultiPolygon*> geoms;
  geoms.reserve(geometries.size());
  for (const MultiPolygon& g : geometries) geoms.push_back(&g);
  return ContiguityMatrix::from_neighbors(queen_neighbors(geoms, snap_tolerance));
}

ContiguityMatrix row_normalize(const ContiguityMatrix& w) {
  ContiguityMatrix::Storage s = w.weights();
  for (Index i = 0; i < s.outerSize(); ++i) {
    double sum = 0.0;
    for (ContiguityMatrix::Storage::InnerIterator it(s, i); it; ++it) sum += it.value();
    if (sum == 0.0) continue;
    for (ContiguityMatrix::Storage::InnerIterator it(s, i); it; ++it) it.valueRef() /= sum;
  }
  return ContiguityMatrix(std::move(s), true, w.derived_from());
}

ContiguityMatrix drop_cross_label(const ContiguityMatrix& w, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(w.size())) {
    throw ContractViolation("contiguity", "label count does not match matrix size");
  }
  ContiguityMatrix::Storage s = w.weights();
  s.prune([&](Index i, Index j, double) { return labels[i] == labels[j]; });
  return ContiguityMatrix(std::move(s), false, w.derived_from());
}

MaskedMatrix mask_cross_border(const ContiguityMatrix& w, std::span<const Region> labels) {
  if (labels.size() != static_cast<std::size_t>(w.size())) {
    throw ContractViolation("contiguity", "label count does not match matrix size");
  }
  ContiguityMatrix::Storage s = w.weights();
  s.prune([&](Index i, Index j, double) { return labels[i] == labels[j]; });
  s.makeCompressed();

  MaskedMatrix out;
  for (Index i = 0; i < w.size(); ++i) {
    const bool had = w.degree(i) > 0;
    const bool has = s.outerIndexPtr()[i + 1] > s.outerIndexPtr()[i];
    if (had && !has) out.emptied.push_back(i);
  }
  // Rows that lost nothing keep their weights bit for bit.
  for (Index i = 0; i < s.outerSize(); ++i) {
    const Index kept = s.outerIndexPtr()[i + 1] - s.outerIndexPtr()[i];
    if (kept == 0 || kept == w.degree(i)) continue;
    double sum = 0.0;
    for (ContiguityMatrix::Storage::InnerIterator it(s, i); it; ++it) sum += it.value();
    for (ContiguityMatrix::Storage::InnerIterator it(s, i); it; ++it) it.valueRef() /= sum;
  }
  const bool normalized = w.normalized() || s.nonZeros() == 0;
  out.matrix = ContiguityMatrix(std::move(s), true, w.structure_fingerprint());
  if (!normalized) out.matrix = row_normalize(out.matrix);
  return out;
}

std::vector<bool> border_flags(const ContiguityMatrix& w, std::span<const Region> labels) {
  if (labels.size() != static_cast<std::size_t>(w.size())) {
    throw ContractViolation("contiguity", "label count does not match matrix size");
  }
  std::vector<bool> flags(labels.size(), false);
  for (Index i = 0; i < w.size(); ++i) {
    for (const Index j : w.neighbors(i)) {
      if (labels[j] != labels[i]) {
        flags[i] = true;
        break;
      }
    }
  }
  return flags;
}

namespace {

std::vector<Segment> snapped_segments(const MultiPolygon& geom, double tolerance) {
  std::vector<Segment> segs = boundary_segments(geom);
  if (tolerance <= 0.0) return segs;
  const auto snap = [tolerance](const Point& p) {
    return Point(std::round(p.x() / tolerance) * tolerance, std::round(p.y() / tolerance) * tolerance);
  };
  std::vector<Segment> out;
  out.reserve(segs.size());
  for (const Segment& s : segs) {
    Segment t{snap(s.a), snap(s.b)};
    if (t.a != t.b) out.push_back(t);
  }
  return out;
}

}  // namespace

double shared_border_length(const MultiPolygon& a, const MultiPolygon& b, double snap_tolerance) {
  std::vector<Segment> sa = snapped_segments(a, snap_tolerance);
  std::vector<Segment> sb = snapped_segments(b, snap_tolerance);
  if (sa.empty() || sb.empty()) return 0.0;
  // Scan the shorter boundary against a grid over the longer one; the sum is
  // symmetric either way.
  if (sa.size() > sb.size()) std::swap(sa, sb);
  double mean_length = 0.0;
  for (const Segment& s : sb) mean_length += (s.b - s.a).norm();
  mean_length /= static_cast<double>(sb.size());
  const SegmentGrid grid(sb, mean_length);
  const double reach = snap_tolerance > 0.0 ? 0.5 * snap_tolerance : 1e-9;

  double total = 0.0;
  std::vector<std::uint32_t> candidates;
  for (const Segment& s : sa) {
    const Box box{std::min(s.a.x(), s.b.x()), std::min(s.a.y(), s.b.y()), std::max(s.a.x(), s.b.x()),
                  std::max(s.a.y(), s.b.y())};
    candidates.clear();
    grid.query(Box{box.min_x - reach, box.min_y - reach, box.max_x + reach, box.max_y + reach},
               [&](std::uint32_t k) { candidates.push_back(k); });
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (const std::uint32_t k : candidates) {
      // measure along the longer of the two so tolerance checks are symmetric
      const Segment& t = sb[k];
      total += (s.b - s.a).squaredNorm() >= (t.b - t.a).squaredNorm() ? collinear_overlap(s, t, reach)
                                                                      : collinear_overlap(t, s, reach);
    }
  }
  return total;
}

std::string format_weights(const ContiguityMatrix& w, std::span<const std::string> ids) {
  if (ids.size() != static_cast<std::size_t>(w.size())) {
    throw ContractViolation("contiguity", "id count does not match matrix size");
  }
  std::string out;
  char buf[32];
  for (Index i = 0; i < w.size(); ++i) {
    out += ids[i];
    out += ' ';
    out += std::to_string(w.degree(i));
    const auto nb = w.neighbors(i);
    const auto wt = w.row_weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      out += ' ';
      out += ids[nb[k]];
      out += ':';
      const auto res = std::to_chars(buf, buf + sizeof(buf), wt[k]);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

WeightsFile parse_weights(std::string_view text) {
  struct Line {
    std::string id;
    std::vector<std::pair<std::string, double>> entries;
  };
  std::vector<Line> lines;
  std::istringstream in{std::string(text)};
  std::string raw;
  long line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (raw.empty()) continue;
    std::istringstream ls(raw);
    Line line;
    std::size_t count = 0;
    if (!(ls >> line.id >> count)) throw ParseError("contiguity", "malformed weights line", line_no);
    std::string tok;
    while (ls >> tok) {
      const auto colon = tok.rfind(':');
      if (colon == std::string::npos) throw ParseError("contiguity", "entry without ':'", line_no);
      double v = 0.0;
      const char* first = tok.data() + colon + 1;
      const auto res = std::from_chars(first, tok.data() + tok.size(), v);
      if (res.ec != std::errc{}) throw ParseError("contiguity", "bad weight '" + tok + "'", line_no);
      line.entries.emplace_back(tok.substr(0, colon), v);
    }
    if (line.entries.size() != count) {
      throw ParseError("contiguity", "neighbor count mismatch for '" + line.id + "'", line_no);
    }
    lines.push_back(std::move(line));
  }

  WeightsFile out;
  std::unordered_map<std::string, Index> index;
  for (const Line& l : lines) {
    if (!index.emplace(l.id, static_cast<Index>(out.ids.size())).second) {
      throw DuplicateKeyError("contiguity", l.id);
    }
    out.ids.push_back(l.id);
  }
  const auto n = static_cast<Index>(out.ids.size());
  std::vector<std::vector<std::pair<Index, double>>> rows(out.ids.size());
  bool normalized = true;
  for (Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& [nid, v] : lines[i].entries) {
      const auto it = index.find(nid);
      if (it == index.end()) throw ParseError("contiguity", "unknown neighbor id '" + nid + "'", i + 1);
      rows[i].emplace_back(it->second, v);
      sum += v;
    }
    if (!rows[i].empty() && std::abs(sum - 1.0) > 1e-12) normalized = false;
  }
  out.matrix = ContiguityMatrix(from_rows(n, rows), normalized);
  return out;
}

}  // namespace bdi

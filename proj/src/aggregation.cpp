#include "bdi/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace bdi {

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ContractViolation("aggregation", "quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractViolation("aggregation", "quantile probability outside [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0.0 ? sorted[lo] : sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> quantiles(std::span<const double> values, std::span<const double> qs) {
  std::vector<double> out;
  out.reserve(qs.size());
  for (const double q : qs) out.push_back(quantile(values, q));
  return out;
}

Distribution describe(std::span<const double> values) {
  std::vector<double> v;
  v.reserve(values.size());
  for (const double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  Distribution d;
  d.n = v.size();
  if (v.empty()) return d;
  std::sort(v.begin(), v.end());
  d.min = v.front();
  d.max = v.back();
  d.q05 = quantile(v, 0.05);
  d.q25 = quantile(v, 0.25);
  d.median = quantile(v, 0.5);
  d.q75 = quantile(v, 0.75);
  d.q95 = quantile(v, 0.95);
  d.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (const double x : v) ss += (x - d.mean) * (x - d.mean);
    d.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return d;
}

namespace {

bool counts_as_border(const DisparityRecord& r) {
  return r.on_border && !std::isnan(r.bdi) && (r.region == Region::Core || r.region == Region::Suburb);
}

}  // namespace

PooledMoments pooled_border_moments(std::span<const DisparityRecord> records) {
  std::vector<double> v;
  for (const auto& r : records) {
    if (counts_as_border(r)) v.push_back(r.bdi);
  }
  if (v.size() < 2) throw ContractViolation("aggregation", "fewer than 2 border units in the pool");
  const Distribution d = describe(v);
  return {d.mean, d.sd, d.n};
}

ExtremeShares extreme_shares(std::span<const DisparityRecord> records, const PooledMoments& pooled, double k) {
  if (pooled.n < 2) throw ContractViolation("aggregation", "fewer than 2 border units in the pool");
  const double upper = pooled.mean + k * pooled.sd;
  const double lower = pooled.mean - k * pooled.sd;
  std::map<std::pair<std::string, Region>, std::array<std::size_t, 3>> tally;
  for (const auto& r : records) {
    if (!counts_as_border(r)) continue;
    auto& t = tally[{r.msa_id, r.region}];
    ++t[0];
    if (r.bdi > upper) ++t[1];
    if (r.bdi < lower) ++t[2];
  }
  ExtremeShares out;
  for (const auto& [key, t] : tally) {
    const double n = static_cast<double>(t[0]);
    out[key] = ExtremeShare{t[0], static_cast<double>(t[1]) / n, static_cast<double>(t[2]) / n};
  }
  return out;
}

std::vector<MetroSummary> metro_summaries(std::span<const DisparityRecord> records,
                                          const std::map<std::string, std::size_t>& suburb_counts, double k) {
  std::map<std::string, std::vector<const DisparityRecord*>> by_msa;
  for (const auto& r : records) by_msa[r.msa_id].push_back(&r);

  std::optional<PooledMoments> pooled;
  try {
    pooled = pooled_border_moments(records);
  } catch (const ContractViolation&) {
    // too few border units: shares stay undefined
  }

  const auto summarize = [&](const std::string& id, const std::vector<const DisparityRecord*>& rs) {
    MetroSummary m;
    m.msa_id = id;
    std::vector<double> h, b;
    const DisparityRecord* top = nullptr;
    const DisparityRecord* bottom = nullptr;
    std::array<std::size_t, 2> n_side{};
    std::array<std::size_t, 4> hits{};  // city_pos, city_neg, sub_pos, sub_neg
    for (const auto* r : rs) {
      h.push_back(r->h);
      if (!counts_as_border(*r)) continue;
      b.push_back(r->bdi);
      if (top == nullptr || r->bdi > top->bdi) top = r;
      if (bottom == nullptr || r->bdi < bottom->bdi) bottom = r;
      if (pooled) {
        const bool core = r->region == Region::Core;
        ++n_side[core ? 0 : 1];
        if (r->bdi > pooled->mean + k * pooled->sd) ++hits[core ? 0 : 2];
        if (r->bdi < pooled->mean - k * pooled->sd) ++hits[core ? 1 : 3];
      }
    }
    m.h = describe(h);
    m.bdi = describe(b);
    if (pooled) {
      const auto share = [](std::size_t hit, std::size_t n) {
        return n == 0 ? kUndefined : static_cast<double>(hit) / static_cast<double>(n);
      };
      m.city_pos = share(hits[0], n_side[0]);
      m.city_neg = share(hits[1], n_side[0]);
      m.sub_pos = share(hits[2], n_side[1]);
      m.sub_neg = share(hits[3], n_side[1]);
    }
    m.max_in_core = top != nullptr && top->region == Region::Core;
    m.min_in_core = bottom != nullptr && bottom->region == Region::Core;
    return m;
  };

  std::vector<MetroSummary> out;
  std::size_t total_suburbs = 0;
  for (const auto& [id, rs] : by_msa) {
    out.push_back(summarize(id, rs));
    const auto it = suburb_counts.find(id);
    out.back().n_suburbs = it == suburb_counts.end() ? 0 : it->second;
    total_suburbs += out.back().n_suburbs;
  }
  std::vector<const DisparityRecord*> all;
  all.reserve(records.size());
  for (const auto& r : records) all.push_back(&r);
  out.push_back(summarize("ALL", all));
  out.back().n_suburbs = total_suburbs;
  return out;
}

std::string_view to_string(Covariate c) {
  static constexpr std::array<std::string_view, kCovariateCount> names{
      "H",       "HGAP",  "BORDER",    "PERCBORDER", "PERCBLK",    "BLKDIFF",
      "WHTDIFF", "MEDINC", "MEDINCRAT", "POPDENS",    "POPDENSRAT", "POPRATIO"};
  return names[static_cast<std::size_t>(c)];
}

std::optional<Covariate> parse_covariate(std::string_view name) {
  for (std::size_t i = 0; i < kCovariateCount; ++i) {
    if (to_string(static_cast<Covariate>(i)) == name) return static_cast<Covariate>(i);
  }
  return std::nullopt;
}

namespace {

std::int64_t total(const GroupCounts& c) { return std::accumulate(c.begin(), c.end(), std::int64_t{0}); }

std::optional<double> percent(const GroupCounts& c, Group g) {
  const auto pop = total(c);
  if (pop == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c[static_cast<std::size_t>(g)]) / static_cast<double>(pop);
}

std::optional<double> density(const PlaceProfile& p) {
  if (!p.land_area_m2 || *p.land_area_m2 <= 0.0) return std::nullopt;
  return static_cast<double>(total(p.counts)) / (*p.land_area_m2 / 1e6);
}

std::optional<double> diff(std::optional<double> a, std::optional<double> b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

std::optional<double> ratio(std::optional<double> a, std::optional<double> b) {
  if (!a || !b || *b == 0.0) return std::nullopt;
  return *a / *b;
}

}  // namespace

Covariates compute_covariates(const PlaceProfile& place, const PlaceProfile& core) {
  Covariates c{};
  const auto set = [&c](Covariate k, std::optional<double> v) { c[static_cast<std::size_t>(k)] = v; };
  const auto h_of = [](const PlaceProfile& p) -> std::optional<double> {
    if (total(p.counts) == 0) return std::nullopt;
    return herfindahl(EthnicComposition::from_counts(p.counts));
  };
  const auto h_place = h_of(place);
  set(Covariate::H, h_place);
  set(Covariate::HGAP, diff(h_place, h_of(core)));
  set(Covariate::BORDER, place.border_length);
  set(Covariate::PERCBORDER,
      place.perimeter > 0.0 ? std::optional<double>(100.0 * place.border_length / place.perimeter) : std::nullopt);
  const auto blk = percent(place.counts, Group::Black);
  set(Covariate::PERCBLK, blk);
  set(Covariate::BLKDIFF, diff(blk, percent(core.counts, Group::Black)));
  set(Covariate::WHTDIFF, diff(percent(place.counts, Group::White), percent(core.counts, Group::White)));
  set(Covariate::MEDINC, place.median_income);
  set(Covariate::MEDINCRAT, ratio(place.median_income, core.median_income));
  const auto dens = density(place);
  set(Covariate::POPDENS, dens);
  set(Covariate::POPDENSRAT, ratio(dens, density(core)));
  set(Covariate::POPRATIO, ratio(static_cast<double>(total(place.counts)), static_cast<double>(total(core.counts))));
  return c;
}

namespace {

void fill_stats(PlaceSummary& s, const std::vector<double>& v) {
  s.n_border = v.size();
  s.sum = 0.0;
  s.max = v.front();
  s.min = v.front();
  for (const double x : v) {
    s.sum += x;
    s.max = std::max(s.max, x);
    s.min = std::min(s.min, x);
  }
  s.mean = s.sum / static_cast<double>(v.size());
  s.range = s.max - s.min;
}

}  // namespace

PlaceSummaryResult place_summaries(std::span<const DisparityRecord> records,
                                   const std::map<std::string, PlaceProfile>& suburbs,
                                   const std::map<std::string, PlaceProfile>& cores_by_msa) {
  std::map<std::string, std::vector<double>> suburb_values;
  std::map<std::string, std::vector<double>> core_values;
  for (const auto& r : records) {
    if (!counts_as_border(r)) continue;
    if (r.region == Region::Suburb) {
      suburb_values[r.place_id].push_back(r.bdi);
    } else {
      core_values[r.msa_id].push_back(r.bdi);
    }
  }

  PlaceSummaryResult out;
  std::vector<const PlaceProfile*> ordered;
  for (const auto& [id, p] : suburbs) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(), [](const PlaceProfile* a, const PlaceProfile* b) {
    return std::tie(a->msa_id, a->place_id) < std::tie(b->msa_id, b->place_id);
  });
  for (const PlaceProfile* p : ordered) {
    const auto it = suburb_values.find(p->place_id);
    if (it == suburb_values.end()) {
      out.omitted.push_back(p->place_id);
      continue;
    }
    const auto core = cores_by_msa.find(p->msa_id);
    if (core == cores_by_msa.end()) {
      throw ContractViolation("aggregation", "no core profile for metro '" + p->msa_id + "'", {p->place_id});
    }
    PlaceSummary s;
    s.place_id = p->place_id;
    s.msa_id = p->msa_id;
    fill_stats(s, it->second);
    s.covariates = compute_covariates(*p, core->second);
    out.summaries.push_back(std::move(s));
  }
  for (const auto& [msa, core] : cores_by_msa) {
    const auto it = core_values.find(msa);
    if (it == core_values.end()) continue;
    PlaceSummary s;
    s.place_id = core.place_id;
    s.msa_id = msa;
    s.is_core = true;
    fill_stats(s, it->second);
    s.covariates = compute_covariates(core, core);
    out.summaries.push_back(std::move(s));
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  for (const double v : values) {
    if (std::isnan(v)) throw ContractViolation("aggregation", "cannot rank undefined values");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1..j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractViolation("aggregation", "spearman inputs differ in length");
  if (x.size() < 3) throw ContractViolation("aggregation", "spearman needs at least 3 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), static_cast<Eigen::Index>(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), static_cast<Eigen::Index>(ry.size()));
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double sa = ca.squaredNorm();
  const double sb = cb.squaredNorm();
  if (sa == 0.0 || sb == 0.0) return std::nullopt;
  return std::clamp(ca.dot(cb) / std::sqrt(sa * sb), -1.0, 1.0);
}

std::size_t cutoff_count(std::size_t count, double fraction) {
  const double raw = fraction * static_cast<double>(count);
  return static_cast<std::size_t>(std::max(0.0, std::ceil(raw - 1e-9)));
}

std::vector<PlaceSummary> rank_places(std::span<const PlaceSummary> summaries, RankMetric metric,
                                      double cutoff_fraction) {
  std::vector<PlaceSummary> pool;
  for (const auto& s : summaries) {
    if (s.is_core) continue;
    const double v = metric == RankMetric::Max ? s.max : s.min;
    if (!std::isnan(v)) pool.push_back(s);
  }
  std::sort(pool.begin(), pool.end(), [metric](const PlaceSummary& a, const PlaceSummary& b) {
    if (metric == RankMetric::Max && a.max != b.max) return a.max > b.max;
    if (metric == RankMetric::Min && a.min != b.min) return a.min < b.min;
    return a.place_id < b.place_id;
  });
  pool.resize(std::min(pool.size(), cutoff_count(pool.size(), cutoff_fraction)));
  return pool;
}

}  // namespace bdi

#include "bdi/pipeline.hpp"

#include "bdi/csv.hpp"
#include "bdi/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace bdi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kModule = "cli";

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path raw(p);
  return raw.is_absolute() ? raw : base / raw;
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(kModule, std::string("config lacks '") + what + "'");
  if (!fs::is_regular_file(p)) {
    throw ConfigError(kModule, std::string(what) + " file not found: " + p.string());
  }
}

std::string bool_field(bool b) { return b ? "1" : "0"; }

}  // namespace

AnalysisAttribute AnalysisAttribute::parse(std::string_view name) {
  AnalysisAttribute a;
  if (name == "herfindahl") return a;
  constexpr std::string_view prefix = "percent_";
  if (name.starts_with(prefix)) {
    if (const auto g = parse_group(name.substr(prefix.size()))) {
      a.kind = Kind::Percent;
      a.group = *g;
      return a;
    }
  }
  throw ConfigError(kModule, "unknown attribute '" + std::string(name) +
                                 "'; expected herfindahl or percent_<white|black|asian|latino|other>");
}

std::string AnalysisAttribute::name() const {
  if (kind == Kind::Herfindahl) return "herfindahl";
  return "percent_" + std::string(to_string(group));
}

double AnalysisAttribute::evaluate(const EthnicComposition& c) const {
  return kind == Kind::Herfindahl ? herfindahl(c) : percent_attribute(c, group);
}

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(kModule, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError(kModule, "config must be a JSON object");

  static const std::set<std::string> known{
      "geometry",     "attributes",  "places",         "place_attributes", "weights",
      "place_summary", "core_places", "exclude_places", "attribute",        "snap_tolerance",
      "moran",        "permutations", "seed",          "ranking_cutoff",   "extreme_sd",
      "output_dir",   "regressions"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ConfigError(kModule, "unknown config key '" + key + "'");
  }

  PipelineConfig c;
  try {
    const auto path_of = [&](const char* key) -> std::optional<fs::path> {
      if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
      return resolve(base_dir, doc[key].get<std::string>());
    };
    c.geometry = path_of("geometry").value_or(fs::path());
    c.attributes = path_of("attributes").value_or(fs::path());
    c.places = path_of("places").value_or(fs::path());
    c.place_attributes = path_of("place_attributes");
    c.weights = path_of("weights");
    c.place_summary = path_of("place_summary");

    if (doc.contains("core_places")) {
      for (const auto& [msa, ids] : doc["core_places"].items()) {
        auto& set = c.core_places[msa];
        if (ids.is_string()) {
          set.insert(ids.get<std::string>());
        } else {
          for (const auto& id : ids) set.insert(id.get<std::string>());
        }
        if (set.empty()) throw ConfigError(kModule, "metro '" + msa + "' lists no core place");
      }
    }
    if (doc.contains("exclude_places")) {
      for (const auto& id : doc["exclude_places"]) c.exclude_places.insert(id.get<std::string>());
    }
    c.attribute = AnalysisAttribute::parse(doc.value("attribute", std::string("herfindahl")));
    c.snap_tolerance = doc.value("snap_tolerance", 0.001);
    c.moran = doc.value("moran", false);
    c.permutations = doc.value("permutations", 999);
    c.seed = doc.value("seed", std::uint64_t{42});
    c.ranking_cutoff = doc.value("ranking_cutoff", 0.05);
    c.extreme_k = doc.value("extreme_sd", 2.0);
    c.output_dir = resolve(base_dir, doc.value("output_dir", std::string("out")));

    if (doc.contains("regressions")) {
      for (const auto& r : doc["regressions"]) {
        const std::string name = r.at("name").get<std::string>();
        const std::string dep_name = r.value("dependent", std::string("max_bdi"));
        const auto dep = parse_dependent(dep_name);
        if (!dep) throw ConfigError(kModule, "unknown dependent '" + dep_name + "' in regression '" + name + "'");
        std::vector<Covariate> regs;
        for (const auto& v : r.at("regressors")) {
          const std::string vname = v.get<std::string>();
          const auto cov = parse_covariate(vname);
          if (!cov) throw ConfigError(kModule, "unknown regressor '" + vname + "' in regression '" + name + "'");
          regs.push_back(*cov);
        }
        c.regressions.emplace_back(name, *dep, std::move(regs));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(kModule, std::string("malformed config: ") + e.what());
  }

  c.echo = doc;
  c.echo.erase("output_dir");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError(kModule, "config file not found: " + path.string());
  return parse_config(csv::read_file(path), path.parent_path());
}

void validate(const PipelineConfig& config, Stage stage) {
  if (!(config.snap_tolerance >= 0.0)) throw ConfigError(kModule, "snap_tolerance must be >= 0");
  if (stage == Stage::Regress) {
    const fs::path input = config.place_summary.value_or(config.output_dir / "place_summary.csv");
    require_file(input, "place_summary");
    if (config.regressions.empty()) throw ConfigError(kModule, "no regressions configured");
    return;
  }
  require_file(config.geometry, "geometry");
  if (config.weights) require_file(*config.weights, "weights");
  if (stage == Stage::Contiguity && config.core_places.empty()) return;

  require_file(config.attributes, "attributes");
  require_file(config.places, "places");
  if (config.place_attributes) require_file(*config.place_attributes, "place_attributes");
  if (config.core_places.empty()) throw ConfigError(kModule, "config lacks 'core_places'");
  if (config.moran && config.permutations < 99) throw ConfigError(kModule, "permutations must be >= 99");
  if (!(config.ranking_cutoff > 0.0 && config.ranking_cutoff <= 1.0)) {
    throw ConfigError(kModule, "ranking_cutoff must lie in (0, 1]");
  }
  if (!(config.extreme_k > 0.0)) throw ConfigError(kModule, "extreme_sd must be positive");
}

IngestedData ingest(const PipelineConfig& config) {
  IngestedData d;
  d.units = load_geounits(config.geometry);
  if (!config.attributes.empty() && fs::exists(config.attributes)) {
    JoinResult joined = join_attributes(std::move(d.units), load_attribute_table(config.attributes));
    d.units = std::move(joined.units);
    d.warnings = std::move(joined.warnings);
  }
  if (config.core_places.empty()) return d;

  d.places = load_geounits(config.places);
  if (config.place_attributes) d.place_attributes = load_attribute_table(*config.place_attributes);
  for (const auto& [msa, cores] : config.core_places) {
    d.suburbs[msa] = identify_suburbs(d.places, cores, config.snap_tolerance, config.exclude_places);
  }

  std::map<std::string, std::vector<std::size_t>> by_msa;
  for (std::size_t i = 0; i < d.units.size(); ++i) by_msa[d.units[i].msa_id].push_back(i);
  for (const auto& [msa, idx] : by_msa) {
    const auto cores = config.core_places.find(msa);
    if (cores == config.core_places.end()) {
      for (const auto i : idx) d.units[i].region = Region::Outside;
      continue;
    }
    std::vector<GeoUnit> group;
    group.reserve(idx.size());
    for (const auto i : idx) group.push_back(std::move(d.units[i]));
    group = classify_regions(std::move(group), cores->second, d.suburbs[msa]);
    for (std::size_t k = 0; k < idx.size(); ++k) d.units[idx[k]] = std::move(group[k]);
  }
  return d;
}

WeightsStage build_weights(const PipelineConfig& config, const IngestedData& data) {
  WeightsStage w;
  const bool classified = !config.core_places.empty();
  for (std::size_t i = 0; i < data.units.size(); ++i) {
    const GeoUnit& u = data.units[i];
    if (classified && (u.region == Region::Outside || u.exclusion != Exclusion::None)) continue;
    w.analysis.push_back(i);
    w.ids.push_back(u.id);
  }
  const auto n = static_cast<ContiguityMatrix::Index>(w.analysis.size());

  ContiguityMatrix raw;
  if (config.weights) {
    const WeightsFile file = parse_weights(csv::read_file(*config.weights));
    std::unordered_map<std::string, ContiguityMatrix::Index> pos;
    for (ContiguityMatrix::Index i = 0; i < n; ++i) pos.emplace(w.ids[i], i);
    std::vector<ContiguityMatrix::Index> file_to_analysis(file.ids.size(), -1);
    std::size_t covered = 0;
    for (std::size_t f = 0; f < file.ids.size(); ++f) {
      const auto it = pos.find(file.ids[f]);
      if (it != pos.end()) {
        file_to_analysis[f] = it->second;
        ++covered;
      }
    }
    if (covered != w.ids.size()) {
      throw ConfigError("contiguity", "weights file does not cover every analysis unit");
    }
    std::vector<Eigen::Triplet<double, ContiguityMatrix::Index>> triplets;
    std::vector<double> kept_sum(w.ids.size(), 0.0);
    std::vector<bool> lost(w.ids.size(), false);
    const auto& fw = file.matrix;
    for (ContiguityMatrix::Index f = 0; f < fw.size(); ++f) {
      const auto i = file_to_analysis[f];
      if (i < 0) continue;
      const auto nb = fw.neighbors(f);
      const auto wt = fw.row_weights(f);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const auto j = file_to_analysis[nb[k]];
        if (j < 0 || data.units[w.analysis[i]].msa_id != data.units[w.analysis[j]].msa_id) {
          lost[i] = true;
          continue;
        }
        triplets.emplace_back(i, j, wt[k]);
        kept_sum[i] += wt[k];
      }
    }
    ContiguityMatrix::Storage s(n, n);
    s.setFromTriplets(triplets.begin(), triplets.end());
    // Rows already summing to one are kept verbatim.
    for (ContiguityMatrix::Index i = 0; i < n; ++i) {
      if (!lost[i] && std::abs(kept_sum[i] - 1.0) <= 1e-12) continue;
      for (ContiguityMatrix::Storage::InnerIterator it(s, i); it; ++it) it.valueRef() /= kept_sum[i];
    }
    raw = ContiguityMatrix(std::move(s), true);
  } else {
    std::vector<const MultiPolygon*> geoms;
    geoms.reserve(w.analysis.size());
    for (const auto i : w.analysis) geoms.push_back(&data.units[i].geometry);
    auto adjacency = queen_neighbors(geoms, config.snap_tolerance);
    for (ContiguityMatrix::Index i = 0; i < n; ++i) {
      auto& row = adjacency[i];
      const std::string& msa = data.units[w.analysis[i]].msa_id;
      std::erase_if(row, [&](ContiguityMatrix::Index j) { return data.units[w.analysis[j]].msa_id != msa; });
    }
    raw = ContiguityMatrix::from_neighbors(adjacency);
  }
  w.unadjusted = row_normalize(raw);

  std::vector<Region> labels;
  labels.reserve(w.analysis.size());
  for (const auto i : w.analysis) labels.push_back(data.units[i].region);
  w.adjusted = mask_cross_border(w.unadjusted, labels);
  return w;
}

IndicesStage compute_indices(const PipelineConfig& config, const IngestedData& data, const WeightsStage& weights) {
  const auto n = static_cast<Eigen::Index>(weights.analysis.size());
  Eigen::VectorXd h(n), x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const GeoUnit& u = data.units[weights.analysis[i]];
    const auto comp = EthnicComposition::from_counts(u.counts);
    h[i] = herfindahl(comp);
    x[i] = config.attribute.evaluate(comp);
  }
  const DisparityField field = border_disparity(weights.unadjusted, weights.adjusted.matrix, x);

  IndicesStage out;
  out.records.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const GeoUnit& u = data.units[weights.analysis[i]];
    DisparityRecord r;
    r.id = u.id;
    r.msa_id = u.msa_id;
    r.place_id = u.place_id;
    r.region = u.region;
    r.h = h[i];
    r.attribute = x[i];
    r.ndi_u = field.ndi_u[i];
    r.ndi_a = field.ndi_a[i];
    r.bdi = field.bdi[i];
    r.on_border = field.on_border[i];
    out.records.push_back(std::move(r));
  }
  std::vector<bool> emptied(static_cast<std::size_t>(n), false);
  for (const auto i : weights.adjusted.emptied) emptied[i] = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<ContiguityMatrix::Index>(i);
    if (weights.unadjusted.degree(row) == 0) {
      out.masked_isolates.emplace_back(weights.ids[i], "isolate");
    } else if (emptied[i]) {
      out.masked_isolates.emplace_back(weights.ids[i], "all_neighbors_cross_border");
    }
  }

  if (config.moran) {
    std::map<std::string, std::vector<ContiguityMatrix::Index>> by_msa;
    for (Eigen::Index i = 0; i < n; ++i) by_msa[out.records[i].msa_id].push_back(static_cast<ContiguityMatrix::Index>(i));
    std::vector<std::tuple<std::string, double, double, MoranClass>> rows(
        static_cast<std::size_t>(n), {std::string(), kUndefined, kUndefined, MoranClass::NotSignificant});
    for (const auto& [msa, members] : by_msa) {
      std::unordered_map<ContiguityMatrix::Index, ContiguityMatrix::Index> local;
      for (std::size_t k = 0; k < members.size(); ++k) local.emplace(members[k], static_cast<ContiguityMatrix::Index>(k));
      for (const auto g : members) std::get<0>(rows[g]) = out.records[g].id;
      if (members.size() < 3) continue;
      std::vector<Eigen::Triplet<double, ContiguityMatrix::Index>> triplets;
      Eigen::VectorXd xm(static_cast<Eigen::Index>(members.size()));
      for (std::size_t k = 0; k < members.size(); ++k) {
        const auto g = members[k];
        xm[static_cast<Eigen::Index>(k)] = x[g];
        const auto nb = weights.unadjusted.neighbors(g);
        const auto wt = weights.unadjusted.row_weights(g);
        for (std::size_t t = 0; t < nb.size(); ++t) {
          triplets.emplace_back(static_cast<ContiguityMatrix::Index>(k), local.at(nb[t]), wt[t]);
        }
      }
      const auto m = static_cast<ContiguityMatrix::Index>(members.size());
      ContiguityMatrix::Storage s(m, m);
      s.setFromTriplets(triplets.begin(), triplets.end());
      const ContiguityMatrix wm(std::move(s), true);
      const LocalMoran lm = local_morans_i(wm, xm, MoranOptions{config.permutations, config.seed, 0.05});
      for (std::size_t k = 0; k < members.size(); ++k) {
        const auto g = members[k];
        const auto ki = static_cast<Eigen::Index>(k);
        rows[g] = {out.records[g].id, lm.local_i[ki], lm.pseudo_p[ki], lm.cluster[k]};
      }
    }
    out.moran = std::move(rows);
  }
  return out;
}

std::vector<DisparityRecord> reportable(const IndicesStage& stage) {
  std::set<std::string> dropped;
  for (const auto& [id, reason] : stage.masked_isolates) dropped.insert(id);
  std::vector<DisparityRecord> out;
  out.reserve(stage.records.size());
  for (const auto& r : stage.records) {
    if (!dropped.contains(r.id)) out.push_back(r);
  }
  return out;
}

std::pair<std::map<std::string, PlaceProfile>, std::map<std::string, PlaceProfile>> build_place_profiles(
    const PipelineConfig& config, const IngestedData& data) {
  struct Tally {
    GroupCounts counts{};
    double land = 0.0;
    bool land_complete = true;
  };
  std::map<std::string, Tally> from_units;
  for (const GeoUnit& u : data.units) {
    if (u.place_id.empty() || u.exclusion == Exclusion::MissingAttributes) continue;
    Tally& t = from_units[u.place_id];
    for (std::size_t g = 0; g < kGroupCount; ++g) t.counts[g] += u.counts[g];
    if (u.land_area_m2) {
      t.land += *u.land_area_m2;
    } else {
      t.land_complete = false;
    }
  }
  std::unordered_map<std::string, const GeoUnit*> place_geom;
  for (const GeoUnit& p : data.places) place_geom.emplace(p.id, &p);

  const auto base_profile = [&](const std::string& place, const std::string& msa) {
    PlaceProfile p;
    p.place_id = place;
    p.msa_id = msa;
    const AttributeRow* row = nullptr;
    if (data.place_attributes) {
      const auto it = data.place_attributes->rows.find(place);
      if (it != data.place_attributes->rows.end()) row = &it->second;
    }
    const auto tally = from_units.find(place);
    if (row != nullptr) {
      p.counts = row->counts;
      p.median_income = row->median_income;
      p.land_area_m2 = row->land_area_m2;
    } else if (tally != from_units.end()) {
      p.counts = tally->second.counts;
    }
    if (!p.land_area_m2 && tally != from_units.end() && tally->second.land_complete) {
      p.land_area_m2 = tally->second.land;
    }
    const auto geom = place_geom.find(place);
    if (geom != place_geom.end()) p.perimeter = perimeter(geom->second->geometry);
    return p;
  };

  std::map<std::string, PlaceProfile> suburbs;
  std::map<std::string, PlaceProfile> cores;
  for (const auto& [msa, core_ids] : config.core_places) {
    PlaceProfile core;
    core.msa_id = msa;
    double income_weighted = 0.0;
    std::int64_t income_pop = 0;
    bool income_complete = true;
    bool land_complete = true;
    double land = 0.0;
    for (const auto& id : core_ids) {
      core.place_id += (core.place_id.empty() ? "" : "+") + id;
      const PlaceProfile part = base_profile(id, msa);
      std::int64_t pop = 0;
      for (std::size_t g = 0; g < kGroupCount; ++g) {
        core.counts[g] += part.counts[g];
        pop += part.counts[g];
      }
      if (part.median_income) {
        income_weighted += *part.median_income * static_cast<double>(pop);
        income_pop += pop;
      } else {
        income_complete = false;
      }
      if (part.land_area_m2) {
        land += *part.land_area_m2;
      } else {
        land_complete = false;
      }
      core.perimeter += part.perimeter;
    }
    if (core_ids.size() == 1) {
      core.median_income = base_profile(*core_ids.begin(), msa).median_income;
    } else if (income_complete && income_pop > 0) {
      core.median_income = income_weighted / static_cast<double>(income_pop);
    }
    if (land_complete) core.land_area_m2 = land;

    const auto sub = data.suburbs.find(msa);
    if (sub != data.suburbs.end()) {
      for (const auto& sid : sub->second) {
        PlaceProfile p = base_profile(sid, msa);
        const auto sg = place_geom.find(sid);
        for (const auto& cid : core_ids) {
          const auto cg = place_geom.find(cid);
          if (sg == place_geom.end() || cg == place_geom.end()) continue;
          p.border_length += shared_border_length(sg->second->geometry, cg->second->geometry, config.snap_tolerance);
        }
        core.border_length += p.border_length;
        suburbs.emplace(sid, std::move(p));
      }
    }
    cores.emplace(msa, std::move(core));
  }
  return {std::move(suburbs), std::move(cores)};
}

AggregationStage aggregate(const PipelineConfig& config, const IngestedData& data,
                           std::span<const DisparityRecord> records) {
  AggregationStage out;
  const auto [suburbs, cores] = build_place_profiles(config, data);
  std::map<std::string, std::size_t> suburb_counts;
  for (const auto& [msa, ids] : data.suburbs) suburb_counts[msa] = ids.size();
  out.metros = metro_summaries(records, suburb_counts, config.extreme_k);
  out.places = place_summaries(records, suburbs, cores);
  out.top_max = rank_places(out.places.summaries, RankMetric::Max, config.ranking_cutoff);
  out.top_min = rank_places(out.places.summaries, RankMetric::Min, config.ranking_cutoff);
  for (const auto& s : out.places.summaries) out.ranked_suburbs += s.is_core ? 0 : 1;
  return out;
}

RegressionStage run_regressions(const PipelineConfig& config, std::span<const PlaceSummary> summaries,
                                const std::string& attribute_name) {
  RegressionStage out;
  for (const RegressionSpec& spec : config.regressions) {
    const auto need = required_attribute(spec.dependent());
    if (!need.empty() && need != attribute_name) {
      out.skipped.push_back(spec.name());
      continue;
    }
    out.results.push_back(fit_regression(summaries, spec));
  }
  return out;
}

std::string format_bdi_csv(std::span<const DisparityRecord> records) {
  std::string out = "id,msa,place,region,attribute,ndi_u,ndi_a,bdi,on_border\n";
  for (const auto& r : records) {
    out += csv::join({r.id, r.msa_id, r.place_id, std::string(to_string(r.region)), csv::format_optional(r.attribute),
                      csv::format_optional(r.ndi_u), csv::format_optional(r.ndi_a), csv::format_optional(r.bdi),
                      bool_field(r.on_border)});
  }
  return out;
}

namespace {

void append_distribution(csv::Row& row, const Distribution& d) {
  row.push_back(std::to_string(d.n));
  for (const double v : {d.min, d.q05, d.q25, d.median, d.q75, d.q95, d.max, d.mean, d.sd}) {
    row.push_back(csv::format_optional(v));
  }
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"n", "min", "q05", "q25", "median", "q75", "q95", "max", "mean", "sd"};
  return cols;
}

}  // namespace

std::string format_metro_summary_csv(std::span<const MetroSummary> metros) {
  csv::Row header{"msa_id", "n_suburbs"};
  for (const char* prefix : {"h_", "bdi_"}) {
    for (const auto& c : summary_columns()) header.push_back(prefix + c);
  }
  for (const char* c : {"city_pos", "city_neg", "sub_pos", "sub_neg", "max_in_core", "min_in_core"}) header.push_back(c);
  std::string out = csv::join(header);
  for (const auto& m : metros) {
    csv::Row row{m.msa_id, std::to_string(m.n_suburbs)};
    append_distribution(row, m.h);
    append_distribution(row, m.bdi);
    for (const double v : {m.city_pos, m.city_neg, m.sub_pos, m.sub_neg}) row.push_back(csv::format_optional(v));
    row.push_back(bool_field(m.max_in_core));
    row.push_back(bool_field(m.min_in_core));
    out += csv::join(row);
  }
  return out;
}

std::string format_place_summary_csv(std::span<const PlaceSummary> summaries, const std::string& attribute) {
  csv::Row header{"place_id", "msa_id", "is_core", "attribute", "n_border", "mean", "sum", "max", "min", "range"};
  for (std::size_t c = 0; c < kCovariateCount; ++c) header.emplace_back(to_string(static_cast<Covariate>(c)));
  std::string out = csv::join(header);
  for (const auto& s : summaries) {
    csv::Row row{s.place_id, s.msa_id, bool_field(s.is_core), attribute, std::to_string(s.n_border)};
    for (const double v : {s.mean, s.sum, s.max, s.min, s.range}) row.push_back(csv::format_optional(v));
    for (const auto& cov : s.covariates) row.push_back(csv::format_optional(cov));
    out += csv::join(row);
  }
  return out;
}

PlaceSummaryFile parse_place_summary_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw ParseError("aggregation", "empty place summary");
  const auto& header = rows[0];
  const auto col = [&](std::string_view name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ColumnMappingError("aggregation", "place summary lacks column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_place = col("place_id"), c_msa = col("msa_id"), c_core = col("is_core"),
                    c_attr = col("attribute"), c_n = col("n_border"), c_mean = col("mean"), c_sum = col("sum"),
                    c_max = col("max"), c_min = col("min"), c_range = col("range");
  std::array<std::size_t, kCovariateCount> c_cov{};
  for (std::size_t c = 0; c < kCovariateCount; ++c) c_cov[c] = col(to_string(static_cast<Covariate>(c)));

  PlaceSummaryFile out;
  const auto num = [](const std::string& s) { return csv::parse_optional_double(s).value_or(kUndefined); };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) throw ParseError("aggregation", "ragged place summary row", static_cast<long>(r));
    PlaceSummary s;
    s.place_id = row[c_place];
    s.msa_id = row[c_msa];
    s.is_core = row[c_core] == "1";
    s.n_border = static_cast<std::size_t>(std::stoull(row[c_n]));
    s.mean = num(row[c_mean]);
    s.sum = num(row[c_sum]);
    s.max = num(row[c_max]);
    s.min = num(row[c_min]);
    s.range = num(row[c_range]);
    for (std::size_t c = 0; c < kCovariateCount; ++c) s.covariates[c] = csv::parse_optional_double(row[c_cov[c]]);
    if (out.attribute.empty()) {
      out.attribute = row[c_attr];
    } else if (out.attribute != row[c_attr]) {
      throw ParseError("aggregation", "place summary mixes attributes", static_cast<long>(r));
    }
    out.summaries.push_back(std::move(s));
  }
  return out;
}

std::string format_rankings_csv(std::span<const PlaceSummary> ranked) {
  std::string out = "rank,place_id,msa_id,n_border,mean,sum,max,min,range\n";
  std::size_t rank = 0;
  for (const auto& s : ranked) {
    csv::Row row{std::to_string(++rank), s.place_id, s.msa_id, std::to_string(s.n_border)};
    for (const double v : {s.mean, s.sum, s.max, s.min, s.range}) row.push_back(csv::format_optional(v));
    out += csv::join(row);
  }
  return out;
}

namespace {

std::string format_correlations(std::span<const PlaceSummary> summaries) {
  const std::array<std::string, 5> names{"Mean", "Sum", "Max", "Min", "Range"};
  std::array<std::vector<double>, 5> cols;
  for (const auto& s : summaries) {
    cols[0].push_back(s.mean);
    cols[1].push_back(s.sum);
    cols[2].push_back(s.max);
    cols[3].push_back(s.min);
    cols[4].push_back(s.range);
  }
  std::string out = "metric,Mean,Sum,Max,Min,Range\n";
  for (std::size_t a = 0; a < 5; ++a) {
    csv::Row row{names[a]};
    for (std::size_t b = 0; b < 5; ++b) {
      std::optional<double> rho;
      if (summaries.size() >= 3) rho = spearman(cols[a], cols[b]);
      row.push_back(csv::format_optional(rho));
    }
    out += csv::join(row);
  }
  return out;
}

json regression_metadata(const RegressionStage& stage) {
  json models = json::array();
  for (const auto& r : stage.results) {
    json vars = json::array();
    for (const auto& v : r.variables) vars.push_back(v);
    models.push_back({{"name", r.name},
                      {"dependent", std::string(to_string(r.dependent))},
                      {"variables", vars},
                      {"n", r.n_used},
                      {"n_input", r.n_input},
                      {"dropped", r.dropped},
                      {"clusters", r.n_clusters},
                      {"r2", r.r2},
                      {"adjusted_r2", r.adj_r2}});
  }
  return {{"models", models},
          {"skipped", stage.skipped},
          {"standard_errors", "cluster-robust by msa, CR1 factor G/(G-1)*(n-1)/(n-k)"},
          {"p_values", "two-sided Student t with G-1 degrees of freedom"}};
}

std::string regression_file_name(std::size_t index, const std::string& name) {
  if (index == 0) return "regression.csv";
  std::string safe;
  for (const char c : name) safe.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return "regression_" + safe + ".csv";
}

std::string format_geojson(const fs::path& geometry, std::span<const DisparityRecord> records) {
  json doc = json::parse(csv::read_file(geometry));
  std::unordered_map<std::string, const DisparityRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  const auto number = [](double v) -> json { return std::isnan(v) ? json(nullptr) : json(v); };
  for (auto& f : doc["features"]) {
    auto& props = f["properties"];
    const auto id = props["id"].is_string() ? props["id"].get<std::string>() : props["id"].dump();
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      for (const char* k : {"bdi_region", "bdi_h", "bdi_attribute", "bdi_ndi_u", "bdi_ndi_a", "bdi_bdi", "bdi_on_border"}) {
        props[k] = nullptr;
      }
      continue;
    }
    const DisparityRecord& r = *it->second;
    props["bdi_region"] = std::string(to_string(r.region));
    props["bdi_h"] = number(r.h);
    props["bdi_attribute"] = number(r.attribute);
    props["bdi_ndi_u"] = number(r.ndi_u);
    props["bdi_ndi_a"] = number(r.ndi_a);
    props["bdi_bdi"] = number(r.bdi);
    props["bdi_on_border"] = r.on_border;
  }
  return doc.dump() + "\n";
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Contiguity: return "contiguity";
    case Stage::Indices: return "bdi";
    case Stage::Analyze: return "analyze";
    case Stage::Regress: return "regress";
  }
  return "?";
}

class OutputWriter {
 public:
  explicit OutputWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, std::string_view contents) {
    csv::write_file(dir_ / name, contents);
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::string format_excluded(const IngestedData& data, bool classified) {
  std::string out = "id,reason\n";
  for (const GeoUnit& u : data.units) {
    if (u.exclusion != Exclusion::None) {
      out += csv::join({u.id, std::string(to_string(u.exclusion))});
    } else if (classified && u.region == Region::Outside) {
      out += csv::join({u.id, "outside"});
    }
  }
  return out;
}

std::string format_isolates(const IndicesStage& stage) {
  std::string out = "id,reason\n";
  for (const auto& [id, reason] : stage.masked_isolates) out += csv::join({id, reason});
  return out;
}

std::string format_moran(const std::vector<std::tuple<std::string, double, double, MoranClass>>& rows) {
  std::string out = "id,local_i,pseudo_p,class\n";
  for (const auto& [id, li, p, cls] : rows) {
    out += csv::join({id, csv::format_optional(li), csv::format_optional(p), std::string(to_string(cls))});
  }
  return out;
}

}  // namespace

int run_pipeline(const PipelineConfig& config, Stage stage) {
  validate(config, stage);
  OutputWriter out(config.output_dir);
  json counts = json::object();
  json notes = json::array();

  if (stage == Stage::Regress) {
    const fs::path input = config.place_summary.value_or(config.output_dir / "place_summary.csv");
    const PlaceSummaryFile file = parse_place_summary_csv(csv::read_file(input));
    const RegressionStage reg = run_regressions(config, file.summaries, file.attribute);
    for (std::size_t i = 0; i < reg.results.size(); ++i) {
      out.write(regression_file_name(i, reg.results[i].name), format_regression_csv(reg.results[i]));
    }
    out.write("regression_meta.json", regression_metadata(reg).dump(2) + "\n");
    counts["place_summaries"] = file.summaries.size();
  } else {
    const bool classified = !config.core_places.empty();
    const IngestedData data = ingest(config);
    const WeightsStage weights = build_weights(config, data);
    counts["units_loaded"] = data.units.size();
    counts["analysis_units"] = weights.analysis.size();
    for (const auto& w : data.warnings) notes.push_back(w);
    out.write("excluded_units.csv", format_excluded(data, classified));

    if (stage == Stage::Contiguity) {
      out.write("weights.txt", format_weights(weights.unadjusted, weights.ids));
      if (classified) out.write("weights_adjusted.txt", format_weights(weights.adjusted.matrix, weights.ids));
    } else {
      const IndicesStage indices = compute_indices(config, data, weights);
      const auto records = reportable(indices);
      std::size_t border = 0;
      for (const auto& r : records) border += r.on_border ? 1 : 0;
      counts["border_units"] = border;
      counts["masked_isolates"] = indices.masked_isolates.size();
      out.write("bdi.csv", format_bdi_csv(records));
      out.write("masked_isolates.csv", format_isolates(indices));
      if (indices.moran) out.write("moran.csv", format_moran(*indices.moran));
      out.write("bdi.geojson", format_geojson(config.geometry, records));

      if (stage == Stage::Analyze) {
        const AggregationStage agg = aggregate(config, data, records);
        std::size_t suburbs = 0;
        for (const auto& [msa, ids] : data.suburbs) suburbs += ids.size();
        counts["suburbs_identified"] = suburbs;
        counts["suburbs_summarized"] = agg.ranked_suburbs;
        counts["suburbs_without_border_units"] = agg.places.omitted;
        counts["places_in_correlations"] = agg.places.summaries.size();
        counts["ranking_rows"] = agg.top_max.size();
        out.write("metro_summary.csv", format_metro_summary_csv(agg.metros));
        out.write("place_summary.csv", format_place_summary_csv(agg.places.summaries, config.attribute.name()));
        out.write("rankings_max.csv", format_rankings_csv(agg.top_max));
        out.write("rankings_min.csv", format_rankings_csv(agg.top_min));
        out.write("metric_correlations.csv", format_correlations(agg.places.summaries));
        if (!config.regressions.empty()) {
          const RegressionStage reg = run_regressions(config, agg.places.summaries, config.attribute.name());
          for (std::size_t i = 0; i < reg.results.size(); ++i) {
            out.write(regression_file_name(i, reg.results[i].name), format_regression_csv(reg.results[i]));
          }
          out.write("regression_meta.json", regression_metadata(reg).dump(2) + "\n");
        }
        notes.push_back("rankings cover suburbs only; core cities appear in place_summary.csv with is_core=1");
        notes.push_back("metric correlations include core-city pseudo places");
      }
    }
  }

  json manifest{{"tool", "bdi"},
                {"version", std::string(kVersion)},
                {"subcommand", stage_name(stage)},
                {"config", config.echo},
                {"effective",
                 {{"attribute", config.attribute.name()},
                  {"snap_tolerance", config.snap_tolerance},
                  {"permutations", config.permutations},
                  {"seed", config.seed},
                  {"ranking_cutoff", config.ranking_cutoff},
                  {"extreme_sd", config.extreme_k}}},
                {"libraries",
                 {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"conventions",
                 {{"standard_deviation", "sample (n-1); Moran standardization uses population (n)"},
                  {"quantile", "linear interpolation at q*(n-1)"},
                  {"moran_p", "conditional permutation, folded, (count+1)/(permutations+1)"}}},
                {"counts", counts},
                {"notes", notes},
                {"outputs", out.files()}};
  out.write("run_manifest.json", manifest.dump(2) + "\n");
  return 0;
}

}  // namespace bdi

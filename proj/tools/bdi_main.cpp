#include "bdi/acs_client.hpp"
#include "bdi/errors.hpp"
#include "bdi/parallel.hpp"
#include "bdi/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <set>

namespace {

constexpr const char* kUsage =
    "usage: bdi <fetch|contiguity|bdi|analyze|regress> --config <path> [--threads N] [--seed N]\n"
    "           [--snap-tolerance M] [--attribute NAME] [--out DIR]\n"
    "       bdi fetch --acs-endpoint URL --state SS --county CCC [--county CCC ...]\n"
    "           --out-file PATH [--acs-key-env VAR]\n";

struct CommonOptions {
  std::string config;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> snap_tolerance;
  std::optional<std::string> attribute;
  std::optional<std::string> out;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--config", o.config, "pipeline configuration (JSON)")->required();
  cmd.add_option("--threads", o.threads, "worker threads (default: all cores)");
  cmd.add_option("--seed", o.seed, "permutation seed");
  cmd.add_option("--snap-tolerance", o.snap_tolerance, "vertex snap tolerance in map units");
  cmd.add_option("--attribute", o.attribute, "herfindahl or percent_<group>");
  cmd.add_option("--out", o.out, "output directory");
}

bdi::PipelineConfig configure(const CommonOptions& o) {
  bdi::PipelineConfig c = bdi::load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.echo["seed"] = *o.seed;
  }
  if (o.snap_tolerance) {
    c.snap_tolerance = *o.snap_tolerance;
    c.echo["snap_tolerance"] = *o.snap_tolerance;
  }
  if (o.attribute) {
    c.attribute = bdi::AnalysisAttribute::parse(*o.attribute);
    c.echo["attribute"] = *o.attribute;
  }
  if (o.out) c.output_dir = *o.out;
  bdi::set_thread_count(o.threads.value_or(0));
  return c;
}

void report(const std::exception& e) {
  nlohmann::json err{{"error", e.what()}};
  if (const auto* b = dynamic_cast<const bdi::Error*>(&e)) {
    err["module"] = b->module();
    if (!b->ids().empty()) err["ids"] = b->ids();
    if (const auto* p = dynamic_cast<const bdi::ParseError*>(&e); p != nullptr && p->index() >= 0) {
      err["index"] = p->index();
    }
    if (const auto* t = dynamic_cast<const bdi::TransportError*>(&e)) err["status"] = t->status();
  }
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  static const std::set<std::string> commands{"fetch", "contiguity", "bdi", "analyze", "regress"};
  if (argc < 2 || !commands.contains(argv[1])) {
    std::cerr << kUsage;
    return 2;
  }

  CLI::App app{"Border disparity analytics"};
  app.require_subcommand(1);

  CommonOptions common;
  std::map<std::string, bdi::Stage> stages{{"contiguity", bdi::Stage::Contiguity},
                                           {"bdi", bdi::Stage::Indices},
                                           {"analyze", bdi::Stage::Analyze},
                                           {"regress", bdi::Stage::Regress}};
  for (const auto& [name, stage] : stages) add_common(*app.add_subcommand(name), common);

  bdi::AcsRequest request;
  std::string key_env = "CENSUS_API_KEY";
  std::string out_file;
  auto* fetch = app.add_subcommand("fetch", "download an ACS block-group extract");
  fetch->add_option("--acs-endpoint", request.endpoint, "dataset URL")->required();
  fetch->add_option("--state", request.state, "two-digit state FIPS")->required();
  fetch->add_option("--county", request.counties, "three-digit county FIPS")->required();
  fetch->add_option("--out-file", out_file, "attribute CSV to write")->required();
  fetch->add_option("--acs-key-env", key_env, "environment variable holding the API key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fetch->parsed()) {
      const char* key = std::getenv(key_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw bdi::ConfigError("ingestion", "environment variable " + key_env + " is not set");
      }
      request.api_key = key;
      const auto table = bdi::fetch_acs_extract(request, out_file);
      std::cout << "wrote " << table.rows.size() << " block groups to " << out_file << "\n";
      return 0;
    }
    for (const auto& [name, stage] : stages) {
      if (app.got_subcommand(name)) return bdi::run_pipeline(configure(common), stage);
    }
  } catch (const std::exception& e) {
    report(e);
    return 1;
  }
  std::cerr << kUsage;
  return 2;
}

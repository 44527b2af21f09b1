#include <doctest.h>

#include "bdi/acs_client.hpp"
#include "bdi/errors.hpp"
#include "fixtures.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

using namespace bdi;

namespace {

const char* kHeader =
    R"(["B03002_001E","B03002_003E","B03002_004E","B03002_006E","B03002_012E","B19013_001E","state","county","tract","block group"])";

std::string county_body(const std::string& county) {
  return std::string("[") + kHeader + ",\n" + R"(["100","50","20","10","15","61000","17",")" + county +
         R"(","010100","1"],)" + "\n" + R"(["40","-666666666","5","0","0","-666666666","17",")" + county +
         R"(","010100","2"]])";
}

/// Local stand-in for the census API. Requests without the expected key get
/// a 401.
class FakeCensus {
 public:
  FakeCensus() {
    server_.Get("/data/2016/acs/acs5", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      if (req.get_param_value("key") != "secret") {
        res.status = 401;
        res.set_content("invalid key", "text/plain");
        return;
      }
      std::string county;
      for (std::size_t i = 0; i < req.get_param_value_count("in"); ++i) {
        const auto v = req.get_param_value("in", i);
        if (v.rfind("county:", 0) == 0) county = v.substr(7);
      }
      res.set_content(county_body(county), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeCensus() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/data/2016/acs/acs5"; }
  int hits() const { return hits_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> hits_{0};
};

}  // namespace

TEST_SUITE("acs") {

TEST_CASE("response parsing: GEOID, remainder group and sentinels") {
  const auto t = parse_acs_response(county_body("031"));
  REQUIRE(t.rows.size() == 2);
  const auto& a = t.rows.at("170310101001");
  CHECK(a.counts == GroupCounts{50, 20, 10, 15, 5});
  CHECK(*a.median_income == 61000.0);
  const auto& b = t.rows.at("170310101002");
  CHECK(b.counts == GroupCounts{0, 5, 0, 0, 35});
  CHECK_FALSE(b.median_income.has_value());
}

TEST_CASE("response parsing errors") {
  CHECK_THROWS_AS(parse_acs_response(R"([["NAME","state"],["x","17"]])"), ColumnMappingError);
  CHECK_THROWS_AS(parse_acs_response("<html>"), TransportError);
}

TEST_CASE("fetch merges counties and is idempotent") {
  FakeCensus census;
  const auto dir = bdi::testing::scratch_dir("acs_ok");
  AcsRequest req{census.endpoint(), "secret", "17", {"031", "043"}};
  const auto table = fetch_acs_extract(req, dir / "acs.csv");
  CHECK(table.rows.size() == 4);
  CHECK(census.hits() == 2);
  const std::string first = bdi::testing::read_text(dir / "acs.csv");
  fetch_acs_extract(req, dir / "acs.csv");
  CHECK(bdi::testing::read_text(dir / "acs.csv") == first);
  CHECK(load_attribute_table(dir / "acs.csv").rows.size() == 4);
}

TEST_CASE("authentication failure writes nothing") {
  FakeCensus census;
  const auto dir = bdi::testing::scratch_dir("acs_401");
  AcsRequest req{census.endpoint(), "wrong", "17", {"031"}};
  try {
    fetch_acs_extract(req, dir / "acs.csv");
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.status() == 401);
  }
  CHECK_FALSE(std::filesystem::exists(dir / "acs.csv"));
}

}  // TEST_SUITE

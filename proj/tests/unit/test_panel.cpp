#include <doctest.h>

#include <cmath>
#include <fstream>

#include "eob/error.hpp"
#include "eob/panel.hpp"
#include "oracles.hpp"

using namespace eob;

namespace {

const char* kHeader =
    "household_id,country,year,outcome_value_usd_ha,outcome_yield_kg_ha,fert_kg_ha,labor_days_ha,pesticide,herbicide,"
    "irrigation\n";

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

PanelRow row(std::string hh, std::string country, int year, double value, double yield) {
  PanelRow r;
  r.household_id = std::move(hh);
  r.country_id = std::move(country);
  r.year = year;
  r.outcome_value_usd_ha = value;
  r.outcome_yield_kg_ha = yield;
  r.fert_kg_ha = 10;
  r.labor_days_ha = 40;
  r.pesticide = 0;
  r.herbicide = 1;
  r.irrigation = 0;
  return r;
}

}  // namespace

TEST_CASE("panel round trip keeps missing values") {
  oracle::TempDir dir("panel");
  std::vector<PanelRow> rows{row("a", "Mali", 2014, 100.5, 900), row("b", "Mali", 2015, 0, PanelRow::kMissing)};
  rows[1].fert_kg_ha = PanelRow::kMissing;
  write_panel(dir / "p.csv", rows);
  const auto back = read_panel(dir / "p.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].household_id == "a");
  CHECK(back[0].outcome_value_usd_ha == 100.5);
  CHECK(back[1].year == 2015);
  CHECK(std::isnan(back[1].outcome_yield_kg_ha));
  CHECK(std::isnan(back[1].fert_kg_ha));
  CHECK(back[1].herbicide == 1.0);
}

TEST_CASE("malformed rows are reported together with line numbers") {
  oracle::TempDir dir("panel");
  write_text(dir / "p.csv", std::string(kHeader) +
                                "a,Mali,2014,1,1,1,1,0,0,0\n"
                                "b,Mali,twenty,1,1,1,1,0,0,0\n"
                                "c,Mali,2014,1,1,-3,1,0,0,0\n"
                                "d,Mali,2014,1,1,1,1,2,0,0\n");
  try {
    read_panel(dir / "p.csv");
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    const std::string msg = e.what();
    CHECK(msg.find(":3: bad year") != std::string::npos);
    CHECK(msg.find(":4: fert_kg_ha must be nonnegative") != std::string::npos);
    CHECK(msg.find(":5: pesticide must be 0 or 1") != std::string::npos);
    CHECK(msg.find(":2:") == std::string::npos);
  }
}

TEST_CASE("missing column is rejected") {
  oracle::TempDir dir("panel");
  write_text(dir / "p.csv", "household_id,country,year\na,Mali,2014\n");
  CHECK_THROWS_AS(read_panel(dir / "p.csv"), Error);
}

TEST_CASE("summary has one farm and one crop block per country") {
  std::vector<PanelRow> rows;
  for (int y = 2014; y < 2017; ++y) {
    rows.push_back(row("a", "Mali", y, 50, 700));
    rows.push_back(row("b", "Mali", y, 50, 700));
    rows.push_back(row("c", "Niger", y, 10.0 * y, PanelRow::kMissing));
  }
  const auto s = panel_summary(rows);
  REQUIRE(s.size() == 3);
  CHECK(s[0].country_id == "Mali");
  CHECK(s[0].block == "farm");
  CHECK(s[1].block == "primary_crop");
  CHECK(s[0].n_obs == 6);
  CHECK(s[0].n_households == 2);
  // constant columns have zero spread
  CHECK(s[0].stats[0].mean == doctest::Approx(50));
  CHECK(s[0].stats[0].sd == 0.0);
  for (const auto& st : s[0].stats) CHECK(st.sd == 0.0);

  CHECK(s[2].country_id == "Niger");
  const auto m = oracle::moments({20140, 20150, 20160});
  CHECK(s[2].stats[0].mean == doctest::Approx(m.mean));
  CHECK(s[2].stats[0].sd == doctest::Approx(std::sqrt(m.variance)));
  // no yields recorded for Niger, so no crop block
  CHECK(s[2].block == "farm");
}

TEST_CASE("summary csv is written") {
  oracle::TempDir dir("panel");
  const auto s = panel_summary(std::vector<PanelRow>{row("a", "Mali", 2014, 1, 1), row("a", "Mali", 2015, 3, 2)});
  write_panel_summary(dir / "s.csv", s);
  std::ifstream in(dir / "s.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("country,panel,n_obs,n_households,", 0) == 0);
}

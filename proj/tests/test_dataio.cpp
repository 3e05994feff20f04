#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "metanode/dataio.hpp"
#include "metanode/errors.hpp"
#include "support.hpp"

using namespace metanode;
using namespace metanode::dataio;
using testsupport::uniform_vector;

namespace {

LoadResult parse(const std::string& text, const FeatureSchema& schema) {
  std::istringstream in(text);
  return parse_csv(in, schema, "test.csv");
}

// Two-feature schema keeps hand-written CSVs short.
FeatureSchema tiny() { return {"tiny", {"P"}, {"M"}}; }

StrainSeries series(std::vector<double> t, std::vector<double> y) {
  StrainSeries s;
  s.strain_id = "S";
  s.raw_times = std::move(t);
  s.values = Matrix(y.size(), 1);
  std::copy(y.begin(), y.end(), s.values.data().begin());
  return s;
}

}  // namespace

TEST_CASE("schemas follow the table order") {
  const auto lim = FeatureSchema::limonene();
  CHECK(lim.dim() == 23);
  CHECK(lim.controls.size() == 10);
  CHECK(lim.states.size() == 13);
  CHECK(lim.names().front() == "AtoB");
  CHECK(lim.names()[10] == "Acetyl-CoA");
  CHECK(std::find(lim.states.begin(), lim.states.end(), "Limonene") != lim.states.end());
  CHECK(lim.state_indices().front() == 10);
  CHECK(lim.state_indices().back() == 22);

  const auto iso = FeatureSchema::isopentenol();
  CHECK(iso.dim() == 23);
  CHECK(iso.states.back() == "Isopentenol");
  CHECK(std::find(iso.states.begin(), iso.states.end(), "Limonene") == iso.states.end());
  CHECK_THROWS_AS(FeatureSchema::for_pathway("ethanol"), ConfigError);
}

TEST_CASE("fixture loads as three strains of 14 points") {
  for (const auto& schema : {FeatureSchema::limonene(), FeatureSchema::isopentenol()}) {
    const auto loaded = parse(fixture_csv(schema, 0), schema);
    REQUIRE(loaded.strains.size() == 3);
    for (const auto& s : loaded.strains) {
      CHECK(s.raw_times.size() == 14);
      CHECK(s.values.cols() == 23);
      CHECK(s.raw_times.front() == 0.0);
      CHECK(s.raw_times.back() == 72.0);
    }
    CHECK(loaded.warnings.empty());
    CHECK(loaded.checksum.size() == 16);
  }
  CHECK(fixture_csv(FeatureSchema::limonene(), 3) == fixture_csv(FeatureSchema::limonene(), 3));
  CHECK(fixture_csv(FeatureSchema::limonene(), 3) != fixture_csv(FeatureSchema::limonene(), 4));
}

TEST_CASE("csv errors and warnings") {
  SUBCASE("duplicated time row") {
    CHECK_THROWS_AS(parse("strain,time_h,P,M\nA,0,1,2\nA,1,1,2\nA,1,1,2\n", tiny()), DataError);
  }
  SUBCASE("missing feature column names it") {
    std::string text = fixture_csv(FeatureSchema::limonene(), 0);
    const auto pos = text.find(",Limonene,");
    text.replace(pos, 10, ",Limonene_x,");
    try {
      parse(text, FeatureSchema::limonene());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("'Limonene'") != std::string::npos);
    }
  }
  SUBCASE("unknown column is a warning") {
    const auto r = parse("strain,time_h,P,Extra,M\nA,0,1,9,2\nA,1,1,9,3\n", tiny());
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("Extra") != std::string::npos);
    CHECK(r.strains[0].values(1, 1) == 3.0);
  }
  SUBCASE("bad header, bad number, ragged row") {
    CHECK_THROWS_AS(parse("id,time,P,M\n", tiny()), SchemaError);
    CHECK_THROWS_AS(parse("strain,time_h,P,M\nA,0,1,x\n", tiny()), DataError);
    CHECK_THROWS_AS(parse("strain,time_h,P,M\nA,0,1\n", tiny()), DataError);
    CHECK_THROWS_AS(parse("strain,time_h,P,M\n", tiny()), DataError);
  }
  SUBCASE("BOM, quoting, CRLF and column order") {
    const auto r = parse("\xEF\xBB\xBFstrain,time_h,M,\"P\"\r\n\"A\",0,5,6\r\nA,2.5,7,8\r\n", tiny());
    REQUIRE(r.strains.size() == 1);
    CHECK(r.strains[0].values(0, 0) == 6.0);  // P first, as in the schema
    CHECK(r.strains[0].values(1, 1) == 7.0);
    CHECK(r.strains[0].raw_times[1] == 2.5);
  }
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", tiny()), IoError);
}

TEST_CASE("monotone cubic interpolation") {
  SUBCASE("linear data is reproduced") {
    const auto g = interpolate_to_grid(series({0, 1, 3, 4, 7}, {0, 2, 6, 8, 14}), 50);
    for (std::size_t k = 0; k < 50; ++k) CHECK(std::abs(g(k, 0) - 2.0 * 7.0 * k / 49.0) <= 1e-12);
  }
  SUBCASE("constant data stays constant") {
    const auto g = interpolate_to_grid(series({0, 2, 5}, {4.5, 4.5, 4.5}), 200);
    for (std::size_t k = 0; k < 200; ++k) CHECK(g(k, 0) == 4.5);
  }
  SUBCASE("passes through the samples") {
    std::mt19937_64 rng(41);
    std::vector<double> t{0};
    for (int i = 0; i < 13; ++i) t.push_back(t.back() + 0.2 + rng() % 100 / 50.0);
    const auto y = uniform_vector(rng, t.size(), -3.0, 3.0);
    const MonotoneCubic f(t, y);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(f(t[i]) - y[i]) <= 1e-12);
    // 14 raw samples over 72 h; with 13 * 16 + 1 grid points every 16th
    // grid time is a sample time.
    std::vector<double> tr(14), yr = uniform_vector(rng, 14, 0.0, 10.0);
    for (std::size_t i = 0; i < 14; ++i) tr[i] = 72.0 * static_cast<double>(i) / 13.0;
    const auto g = interpolate_to_grid(series(tr, yr), 13 * 16 + 1);
    for (std::size_t i = 0; i < 14; ++i) CHECK(std::abs(g(16 * i, 0) - yr[i]) <= 1e-12);
  }
  SUBCASE("no overshoot on random monotone and noisy series") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 3 + rng() % 12;
      std::vector<double> t(n), y = uniform_vector(rng, n, -5.0, 5.0);
      for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) + 0.4 * uniform_vector(rng, 1, 0.0, 1.0)[0];
      if (trial % 2 == 0) std::sort(y.begin(), y.end());
      const MonotoneCubic f(t, y);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double lo = std::min(y[i], y[i + 1]), hi = std::max(y[i], y[i + 1]);
        for (int k = 0; k <= 20; ++k) {
          const double v = f(t[i] + (t[i + 1] - t[i]) * k / 20.0);
          CHECK(v >= lo - 1e-12);
          CHECK(v <= hi + 1e-12);
        }
      }
    }
  }
  SUBCASE("linear option") {
    const auto g = interpolate_to_grid(series({0, 1, 2}, {0, 1, 0}), 5, Interpolation::linear);
    CHECK(g(1, 0) == 0.5);
    CHECK(g(2, 0) == 1.0);
    CHECK(g(3, 0) == 0.5);
  }
  CHECK_THROWS_AS(MonotoneCubic({0.0}, {1.0}), DataError);
  CHECK_THROWS_AS(MonotoneCubic({0.0, 0.0}, {1.0, 2.0}), DataError);
}

TEST_CASE("split rules") {
  CHECK(split({"L3", "L1", "L2"}).test == "L2");
  CHECK(split({"L3", "L1", "L2"}).train == std::vector<std::string>{"L1", "L3"});
  CHECK(split({"I1", "I2", "I3"}).test == "I2");
  CHECK(split({"I1", "I2", "I3"}).train == std::vector<std::string>{"I1", "I3"});
  const auto o = split({"L1", "L2", "L3"}, std::string("L1"));
  CHECK(o.test == "L1");
  CHECK(o.train == std::vector<std::string>{"L2", "L3"});
  CHECK_THROWS_AS(split({"L1", "L2"}), ConfigError);
  CHECK_THROWS_AS(split({"L1", "L2", "L3", "L4"}), ConfigError);
  CHECK(split({"L1", "L2", "L3", "L4"}, std::string("L4")).train.size() == 3);
  CHECK_THROWS_AS(split({"L1", "L2", "L3"}, std::string("L9")), ConfigError);
}

TEST_CASE("normalization") {
  const auto schema = FeatureSchema::limonene();
  const auto loaded = parse(fixture_csv(schema, 5), schema);
  const Dataset ds = build_dataset(loaded, schema);
  CHECK(ds.grid().size() == 200);
  CHECK(ds.grid().t.front() == 0.0);
  CHECK(ds.grid().t.back() == 1.0);
  CHECK(ds.grid().span_hours == 72.0);
  CHECK(ds.dim() == 23);

  SUBCASE("training columns are standardized") {
    const Matrix& a = ds.observed("L1");
    const Matrix& b = ds.observed("L3");
    CHECK(a.rows() == 200);
    for (std::size_t c = 0; c < 23; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t r = 0; r < 200; ++r) {
        sum += a(r, c) + b(r, c);
        sq += a(r, c) * a(r, c) + b(r, c) * b(r, c);
      }
      const double mean = sum / 400.0;
      CHECK(std::abs(mean) <= 1e-10);
      CHECK(std::abs(std::sqrt(sq / 400.0 - mean * mean) - 1.0) <= 1e-10);
    }
  }
  SUBCASE("round trip") {
    const Matrix back = ds.norm_stats().denormalize(ds.observed("L2"));
    const Matrix& phys = ds.physical("L2");
    for (std::size_t i = 0; i < back.data().size(); ++i)
      CHECK(std::abs(back.data()[i] - phys.data()[i]) <= 1e-12 * std::max(1.0, std::abs(phys.data()[i])));
  }
  SUBCASE("constant feature is centered and flagged") {
    Matrix a(4, 2), b(4, 2);
    for (std::size_t r = 0; r < 4; ++r) {
      a(r, 0) = b(r, 0) = 5.0;
      a(r, 1) = static_cast<double>(r);
      b(r, 1) = -static_cast<double>(r);
    }
    const NormStats s = compute_norm_stats({&a, &b});
    CHECK(s.zero_variance[0]);
    CHECK_FALSE(s.zero_variance[1]);
    CHECK(s.normalize(a)(2, 0) == 0.0);
    CHECK(s.std[0] == 1.0);
  }
  SUBCASE("no information leak from the test strain") {
    LoadResult mutated = loaded;
    for (auto& s : mutated.strains)
      if (s.strain_id == "L2")
        for (double& v : s.values.data()) v = v * 3.0 + 100.0;
    const Dataset other = build_dataset(mutated, schema);
    CHECK(other.norm_stats().mean == ds.norm_stats().mean);
    CHECK(other.norm_stats().std == ds.norm_stats().std);
  }
  SUBCASE("pipeline is deterministic") {
    const Dataset again = build_dataset(parse(fixture_csv(schema, 5), schema), schema);
    for (const auto& id : ds.strain_ids()) CHECK(again.observed(id) == ds.observed(id));
    CHECK(again.norm_stats().mean == ds.norm_stats().mean);
  }
  SUBCASE("test-strain reads are counted") {
    ds.reset_access_count();
    ds.observed("L1");
    ds.physical("L3");
    CHECK(ds.test_access_count() == 0);
    ds.observed("L2");
    ds.physical("L2");
    CHECK(ds.test_access_count() == 2);
  }
  CHECK_THROWS_AS(ds.observed("L7"), ConfigError);
}

TEST_CASE("processed cache and trajectory csv") {
  testsupport::TempDir dir("dataio");
  const auto schema = FeatureSchema::isopentenol();
  const auto loaded = parse(fixture_csv(schema, 1), schema);
  const Dataset ds = build_dataset(loaded, schema, {200, Interpolation::monotone_cubic, std::string("I3")});
  write_processed(ds, dir.path, loaded.checksum);

  std::ifstream js(dir.path / "dataset.json");
  const auto j = nlohmann::json::parse(js);
  CHECK(j["split"]["test"] == "I3");
  CHECK(j["feature_order"].size() == 23);
  CHECK(j["source_checksum"] == loaded.checksum);
  CHECK(j["norm_stats"]["Isopentenol"]["std"].get<double>() > 0.0);

  std::ifstream csv(dir.path / "I1.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("time_norm,AtoB,", 0) == 0);
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 200);

  Matrix m(2, 2);
  m(1, 1) = 0.25;
  write_trajectory_csv(dir.path / "t.csv", {0.0, 36.0}, {"A", "B,C"}, m);
  std::ifstream t(dir.path / "t.csv");
  std::getline(t, header);
  CHECK(header == "time,A,\"B,C\"");
  const auto reloaded = parse("strain,time_h,P,M\nX,0,1,2\nX,1,3,4\n", tiny());
  CHECK(reloaded.strains.front().values(1, 0) == 3.0);
}

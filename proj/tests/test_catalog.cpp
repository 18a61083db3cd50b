#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "xcorr/catalog.hpp"

using namespace xcorr;
using Catch::Approx;

namespace {

LoadResult parse(const std::string& text, const ColumnSchema& schema = {}, std::string label = "test") {
  std::istringstream in(text);
  return parse_catalog(in, schema, std::move(label));
}

Catalog with_redshifts(std::initializer_list<double> zs) {
  std::vector<GalaxyRecord> rs;
  for (double z : zs) rs.push_back({10.0, 1.0, z, "s", std::nullopt});
  return Catalog("z", rs);
}

Catalog with_masses(std::initializer_list<double> ms) {
  std::vector<GalaxyRecord> rs;
  for (double m : ms) rs.push_back({m, 1.0, std::nullopt, "s", std::nullopt});
  return Catalog("m", rs);
}

// Mimics the layout of a high-redshift compilation: 392 rows, 0.2 <= z <= 2.7.
std::string synthetic_highz_table(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> z(0.2, 2.7), m(8.0, 11.8), re(0.3, 12.0);
  std::ostringstream os;
  os << "ID\tz\tlogM\tRe\tref\n";
  os.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    os << i << '\t' << z(rng) << '\t' << m(rng) << '\t' << re(rng) << "\tsurvey-" << (i % 7) << '\n';
  }
  return os.str();
}

}  // namespace

TEST_CASE("parse three valid rows with renamed columns") {
  const auto r = parse("logM,Re\n10.1,2.5\n9.8,1.1\n11.0,4.0\n", {"logM", "Re"});
  REQUIRE(r.catalog.size() == 3);
  CHECK(r.rejected == 0);
  CHECK(r.catalog[0].mass == 10.1);
  CHECK(r.catalog[2].size == 4.0);
  CHECK(r.catalog[1].source == "test");
  CHECK(r.catalog.axis_meta().mass_min == 9.8);
  CHECK(r.catalog.axis_meta().size_max == 4.0);
}

TEST_CASE("rows breaking an invariant are rejected and reported") {
  const auto r = parse("logM,Re\n10.1,2.5\n9.8,-1\n11.0,4.0\n", {"logM", "Re"});
  CHECK(r.catalog.size() == 2);
  CHECK(r.rejected == 1);
  REQUIRE(r.rejections.size() == 1);
  CHECK(r.rejections[0].starts_with("line 3:"));

  const auto more = parse("mass,size,z\n10,1,0.5\nabc,1,0.5\n10,1,-0.1\n10,0,1\n10,1\n10,1,nan\n",
                          {"mass", "size", "z"});
  CHECK(more.catalog.size() == 1);
  CHECK(more.rejected == 5);
}

TEST_CASE("ingestion errors") {
  CHECK_THROWS_AS(parse("logM,size\n1,2\n", {"mass", "size"}), InvalidArgument);
  CHECK_THROWS_AS(parse("mass,size\n1,-2\n"), InvalidArgument);
  CHECK_THROWS_AS(parse(""), IoError);
  CHECK_THROWS_AS(load_catalog("/nonexistent/catalog.csv", {}, "x"), IoError);
}

TEST_CASE("tab-delimited 392-row compilation") {
  ColumnSchema schema{"logM", "Re", "z", "ref", std::nullopt};
  const auto r = parse(synthetic_highz_table(392, 7), schema, "highz");
  CHECK(r.catalog.size() == 392);
  CHECK(r.rejected == 0);
  for (const auto& rec : r.catalog.records()) {
    REQUIRE(rec.redshift);
    CHECK(*rec.redshift >= 0.2);
    CHECK(*rec.redshift <= 2.7);
    CHECK(rec.source.starts_with("survey-"));
  }
}

TEST_CASE("quoted fields, BOM, components") {
  const auto r = parse("\xEF\xBB\xBFmass,size,src,comp\n10,1,\"Smith, 2010\",inner\n9,2,x,outer\n9,2,x,bulge\n",
                       {"mass", "size", std::nullopt, "src", "comp"});
  REQUIRE(r.catalog.size() == 2);
  CHECK(r.rejected == 1);
  CHECK(r.catalog[0].source == "Smith, 2010");
  CHECK(r.catalog[0].component == Component::inner);
  CHECK(filter_component(r.catalog, Component::outer).size() == 1);
}

TEST_CASE("redshift bins are open on the left and closed on the right") {
  const auto c = with_redshifts({0.5, 0.6, 0.75, 0.76});
  const auto b = select_redshift_bin(c, 0.5, 0.75);
  REQUIRE(b.size() == 2);
  CHECK(*b[0].redshift == 0.6);
  CHECK(*b[1].redshift == 0.75);

  CHECK(select_redshift_bin(with_redshifts({0.5, 1.0, 2.0}), 2.0, 2.7).empty());
  CHECK_THROWS_AS(select_redshift_bin(c, 0.75, 0.5), InvalidArgument);
  CHECK_THROWS_AS(select_redshift_bin(with_masses({10.0}), 0.0, 1.0), InvalidArgument);
}

TEST_CASE("contiguous redshift bins partition the records") {
  ColumnSchema schema{"logM", "Re", "z", "ref", std::nullopt};
  const auto c = parse(synthetic_highz_table(392, 11), schema).catalog;
  const std::pair<double, double> bins[] = {{0.5, 0.75}, {0.75, 1.0}, {1.0, 1.4}, {1.4, 2.0}, {2.0, 2.7}};
  std::size_t total = 0;
  for (auto [lo, hi] : bins) total += select_redshift_bin(c, lo, hi).size();
  std::size_t expected = 0;
  for (const auto& r : c.records()) expected += (*r.redshift > 0.5 && *r.redshift <= 2.7);
  CHECK(total == expected);

  // Each record lands in exactly one bin.
  for (const auto& r : c.records()) {
    int hits = 0;
    for (auto [lo, hi] : bins) hits += (lo < *r.redshift && *r.redshift <= hi);
    CHECK(hits == ((*r.redshift > 0.5 && *r.redshift <= 2.7) ? 1 : 0));
  }
}

TEST_CASE("mass floor is inclusive") {
  const auto f = filter_mass_floor(with_masses({8.5, 8.73, 9.0}), 8.73);
  REQUIRE(f.size() == 2);
  CHECK(f[0].mass == 8.73);
  CHECK(f[1].mass == 9.0);
  const auto all = with_masses({8.5, 8.73, 9.0});
  CHECK(filter_mass_floor(all, -std::numeric_limits<double>::infinity()).size() == 3);

  ColumnSchema schema{"logM", "Re", "z", "ref", std::nullopt};
  const auto hz = parse(synthetic_highz_table(392, 3), schema).catalog;
  const auto kept = filter_mass_floor(hz, 8.73);
  std::size_t expected = 0;
  for (const auto& r : hz.records()) expected += r.mass >= 8.73;
  CHECK(kept.size() == expected);
  for (const auto& r : kept.records()) CHECK(r.mass >= 8.73);
}

TEST_CASE("merge keeps order and relabel keeps records") {
  const Catalog parts[] = {with_masses({1.0, 2.0}), with_masses({3.0})};
  const auto m = merge_catalogs(parts, "all");
  REQUIRE(m.size() == 3);
  CHECK(m.label() == "all");
  CHECK(m[2].mass == 3.0);
  CHECK(relabel(m, "x").label() == "x");
  CHECK(relabel(m, "x").size() == 3);
}

TEST_CASE("feature-space transforms") {
  SECTION("log10 of size 1 is 0") {
    const Catalog c("c", {{10.0, 1.0, std::nullopt, "", std::nullopt}});
    AxisTransformSpec t;
    t.axes[0] = {AxisScale::identity, false};
    t.axes[1] = {AxisScale::log10, false};
    const auto p = to_point_set(c, t);
    CHECK(p[0][0] == 10.0);
    CHECK(p[0][1] == 0.0);
  }
  SECTION("min-max maps {2,4,6} to {0,0.5,1}") {
    const auto c = with_masses({2.0, 4.0, 6.0});
    AxisTransformSpec t;
    t.axes[1].rescale = false;
    const auto p = to_point_set(c, t);
    CHECK(p[0][0] == 0.0);
    CHECK(p[1][0] == 0.5);
    CHECK(p[2][0] == 1.0);
  }
  SECTION("identity without rescale returns raw pairs") {
    const Catalog c("c", {{9.0, 1.5, std::nullopt, "", std::nullopt},
                          {10.0, 2.5, std::nullopt, "", std::nullopt},
                          {11.0, 0.5, std::nullopt, "", std::nullopt}});
    AxisTransformSpec t;
    t.axes[0].rescale = t.axes[1].rescale = false;
    const auto p = to_point_set(c, t);
    REQUIRE(p.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(p[i][0] == c[i].mass);
      CHECK(p[i][1] == c[i].size);
    }
  }
  SECTION("errors") {
    AxisTransformSpec t;
    CHECK_THROWS_AS(to_point_set(with_masses({5.0, 5.0}), t), InvalidArgument);  // degenerate axes
    t.axes[0] = {AxisScale::log10, false};
    t.axes[1].rescale = false;
    CHECK_THROWS_AS(to_point_set(with_masses({-1.0}), t), InvalidArgument);
  }
  SECTION("linear mass undoes the stored log") {
    const Catalog c("c", {{9.0, 1.5, std::nullopt, "", std::nullopt}, {10.0, 2.5, std::nullopt, "", std::nullopt}});
    AxisTransformSpec t;
    t.axes[0] = {AxisScale::pow10, false};
    t.axes[1].rescale = false;
    const auto p = to_point_set(c, t);
    CHECK(p[0][0] == 1e9);
    CHECK(p[1][0] == 1e10);
    CHECK(t.canonical() == "pow10;identity");
    t.axes[0].rescale = true;
    CHECK(to_point_set(c, t)[1][0] == 1.0);
  }
  SECTION("provenance depends on the transform") {
    const Catalog c("c", {{9.0, 1.5, std::nullopt, "", std::nullopt}, {10.0, 2.5, std::nullopt, "", std::nullopt}});
    AxisTransformSpec a, b;
    b.axes[1].scale = AxisScale::log10;
    CHECK(to_point_set(c, a).provenance() != to_point_set(c, b).provenance());
    CHECK(to_point_set(c, a).provenance() == to_point_set(c, a).provenance());
  }
}

TEST_CASE("min-max rescale is exact at the extremes and order preserving") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> m(8.0, 12.0), s(0.2, 15.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GalaxyRecord> rs;
    const std::size_t n = 2 + static_cast<std::size_t>(trial) * 3;
    for (std::size_t i = 0; i < n; ++i) rs.push_back({m(rng), s(rng), std::nullopt, "", std::nullopt});
    const Catalog c("c", rs);
    AxisTransformSpec t;
    t.axes[1].scale = trial % 2 ? AxisScale::log10 : AxisScale::identity;
    const auto p = to_point_set(c, t);
    REQUIRE(p.size() == n);
    for (std::size_t d = 0; d < 2; ++d) {
      double lo = 2.0, hi = -1.0;
      for (const auto& q : p) {
        lo = std::min(lo, q[d]);
        hi = std::max(hi, q[d]);
        CHECK(q[d] >= 0.0);
        CHECK(q[d] <= 1.0);
      }
      CHECK(lo == 0.0);
      CHECK(hi == 1.0);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      // Order preservation along each axis.
      CHECK((c[i].mass < c[i + 1].mass) == (p[i][0] < p[i + 1][0]));
      CHECK((c[i].size < c[i + 1].size) == (p[i][1] < p[i + 1][1]));
    }
  }
}

TEST_CASE("pooled ranges put two catalogs on one scale") {
  const auto a = with_masses({1.0, 2.0});
  const auto b = with_masses({3.0, 5.0});
  const Catalog* both[] = {&a, &b};
  AxisTransformSpec t;
  t.axes[1].rescale = false;
  const auto r = scaled_range(both, t);
  CHECK(r.lo[0] == 1.0);
  CHECK(r.hi[0] == 5.0);
  const auto pa = to_point_set(a, t, r), pb = to_point_set(b, t, r);
  CHECK(pa[0][0] == 0.0);
  CHECK(pa[1][0] == 0.25);
  CHECK(pb[1][0] == 1.0);
}

TEST_CASE("write then load round-trips bit-exactly") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> m(8.0, 12.0), s(1e-3, 50.0), z(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GalaxyRecord> rs;
    for (int i = 0; i < 40; ++i) {
      GalaxyRecord r{m(rng), s(rng), std::nullopt, "src " + std::to_string(i), std::nullopt};
      if (i % 3) r.redshift = z(rng);
      if (i % 4 == 0) r.component = static_cast<Component>(i % 3);
      if (i == 5) r.source = "quoted, \"name\"";
      rs.push_back(r);
    }
    const Catalog c("rt", rs);
    std::ostringstream os;
    write_catalog_csv(os, c);
    std::istringstream in(os.str());
    const auto back = parse_catalog(in, canonical_schema(), "rt");
    REQUIRE(back.rejected == 0);
    REQUIRE(back.catalog.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(back.catalog[i] == c[i]);
  }
}

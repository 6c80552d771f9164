#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "tscp/logits.hpp"
#include "tscp/synthetic.hpp"

using namespace tscp;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path("tscp_test_" + name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("minimal well-formed CSV") {
  TempFile f("min.csv", "z0,z1,label\n0.0,0.0,1\n");
  const LogitsTable table = load_logits(f.path, FileFormat::kCsv);
  CHECK(table.num_samples() == 1);
  CHECK(table.num_classes() == 2);
  CHECK(table.label(0) == 1);
}

TEST_CASE("CSV rows keep file order") {
  TempFile f("order.csv",
             "z0,z1,z2,label\n"
             "1.5,-0.25,3.0,2\n"
             "0.0,1.0,2.0,0\n"
             "-1.0,-2.0,-3.0,1\n");
  const LogitsTable table = load_logits(f.path, FileFormat::kCsv);
  REQUIRE(table.num_samples() == 3);
  // Hand-parsed fixture, row by row.
  CHECK(table.row(0)[0] == 1.5);
  CHECK(table.row(0)[1] == -0.25);
  CHECK(table.row(0)[2] == 3.0);
  CHECK(table.label(0) == 2);
  CHECK(table.row(1)[2] == 2.0);
  CHECK(table.label(1) == 0);
  CHECK(table.row(2)[0] == -1.0);
  CHECK(table.label(2) == 1);
}

TEST_CASE("CSV validation failures") {
  SUBCASE("label out of range") {
    TempFile f("badlabel.csv", "z0,z1,label\n0.0,0.0,5\n");
    CHECK_THROWS_AS(load_logits(f.path, FileFormat::kCsv), ValidationError);
  }
  SUBCASE("negative label") {
    TempFile f("neglabel.csv", "z0,z1,label\n0.0,0.0,-1\n");
    CHECK_THROWS_AS(load_logits(f.path, FileFormat::kCsv), ValidationError);
  }
  SUBCASE("non-finite logit") {
    TempFile f("nan.csv", "z0,z1,label\nnan,0.0,0\n");
    CHECK_THROWS(load_logits(f.path, FileFormat::kCsv));
  }
  SUBCASE("wrong field count reports the line") {
    TempFile f("short.csv", "z0,z1,label\n0.0,0.0,0\n1.0,1\n");
    try {
      load_logits(f.path, FileFormat::kCsv);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("garbage numeric field") {
    TempFile f("garbage.csv", "z0,z1,label\nhello,0.0,0\n");
    CHECK_THROWS_AS(load_logits(f.path, FileFormat::kCsv), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_logits("does_not_exist.csv", FileFormat::kCsv), FormatError);
  }
}

TEST_CASE("JSONL round trip") {
  TempFile f("rows.jsonl",
             "{\"logits\": [0.5, -1.0, 2.0], \"label\": 2}\n"
             "{\"logits\": [1.0, 1.0, 1.0], \"label\": 0}\n");
  const LogitsTable table = load_logits(f.path, FileFormat::kJsonl);
  REQUIRE(table.num_samples() == 2);
  CHECK(table.num_classes() == 3);
  CHECK(table.row(0)[2] == 2.0);
  CHECK(table.label(1) == 0);

  SUBCASE("label out of range") {
    TempFile g("badjson.jsonl", "{\"logits\": [0.0, 0.0], \"label\": 7}\n");
    CHECK_THROWS_AS(load_logits(g.path, FileFormat::kJsonl), ValidationError);
  }
  SUBCASE("malformed line carries its number") {
    TempFile g("broke.jsonl",
               "{\"logits\": [0.0, 0.0], \"label\": 0}\n"
               "{not json}\n");
    try {
      load_logits(g.path, FileFormat::kJsonl);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("csv save/load round trip preserves values") {
  const LogitsTable table = make_synthetic_table({.num_samples = 20,
                                                  .num_classes = 4,
                                                  .scale = 2.0,
                                                  .seed = 5});
  TempFile f("roundtrip.csv", "");
  save_logits_csv(table, f.path);
  const LogitsTable loaded = load_logits(f.path, FileFormat::kCsv);
  REQUIRE(loaded.num_samples() == table.num_samples());
  REQUIRE(loaded.num_classes() == table.num_classes());
  for (std::size_t i = 0; i < table.num_samples(); ++i) {
    CHECK(loaded.label(i) == table.label(i));
    for (std::size_t c = 0; c < table.num_classes(); ++c) {
      CHECK(loaded.row(i)[c] == table.row(i)[c]);
    }
  }
}

TEST_CASE("split sizes follow floor arithmetic") {
  const LogitsTable table = make_synthetic_table({.num_samples = 10, .seed = 1});
  const SplitPlan plan = make_split(table, 0.1, 0.1, 0);
  CHECK(plan.calib_indices.size() == 1);
  CHECK(plan.cp_indices.size() == 1);
  CHECK(plan.eval_indices.size() == 8);
}

TEST_CASE("split is deterministic in the seed") {
  const LogitsTable table = make_synthetic_table({.num_samples = 100, .seed = 2});
  const SplitPlan a = make_split(table, 0.2, 0.2, 42);
  const SplitPlan b = make_split(table, 0.2, 0.2, 42);
  CHECK(a.calib_indices == b.calib_indices);
  CHECK(a.cp_indices == b.cp_indices);
  CHECK(a.eval_indices == b.eval_indices);

  const SplitPlan c = make_split(table, 0.2, 0.2, 43);
  CHECK(a.cp_indices != c.cp_indices);
}

TEST_CASE("split partitions the index range") {
  const LogitsTable table = make_synthetic_table({.num_samples = 237, .seed = 3});
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const SplitPlan plan = make_split(table, 0.13, 0.27, seed);
    std::vector<std::size_t> all;
    all.insert(all.end(), plan.calib_indices.begin(), plan.calib_indices.end());
    all.insert(all.end(), plan.cp_indices.begin(), plan.cp_indices.end());
    all.insert(all.end(), plan.eval_indices.begin(), plan.eval_indices.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(table.num_samples());
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    CHECK(all == expected);
  }
}

TEST_CASE("split rejects bad fractions") {
  const LogitsTable table = make_synthetic_table({.num_samples = 50, .seed = 4});
  CHECK_THROWS_AS(make_split(table, 0.6, 0.5, 0), ArgumentError);
  CHECK_THROWS_AS(make_split(table, 0.0, 0.1, 0), ArgumentError);
  CHECK_THROWS_AS(make_split(table, 0.1, 1.0, 0), ArgumentError);
  // floor(N * fraction) must stay >= 1
  CHECK_THROWS_AS(make_split(table, 0.001, 0.1, 0), ArgumentError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "adaprl/data.hpp"
#include "adaprl/rng.hpp"

using namespace adaprl;

namespace {

template <typename Fn>
bool throws_mentioning(Fn&& fn, std::initializer_list<const char*> fragments) {
  try {
    fn();
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (const char* f : fragments)
      if (msg.find(f) == std::string::npos) {
        MESSAGE("message lacked fragment '", f, "': ", msg);
        return false;
      }
    return true;
  }
  MESSAGE("no exception thrown");
  return false;
}

std::string write_file(const std::string& name, const std::string& content) {
  std::string path = "/tmp/adaprl_data_" + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

Dataset tiny_dataset() {
  Dataset ds;
  ds.rows = 3;
  ds.columns.resize(4);
  ds.columns[0] = {"x1", ColumnKind::Numeric, {1, 2, 3}, {}, {}};
  ds.columns[1] = {"c", ColumnKind::Categorical, {}, {0, 1, 0}, {"a", "b"}};
  ds.columns[2] = {"y", ColumnKind::Target, {10, 20, 30}, {}, {}};
  ds.columns[3] = {"w", ColumnKind::Weight, {1, 0.5, 2}, {}, {}};
  ds.validate();
  return ds;
}

double pop_variance(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("load_csv reads numeric, categorical, target, and weight columns") {
  std::string path = write_file("ok.csv", "x,c,y\n1.5,red,10\n-2,blue,20\n3e-1,red,30\n");
  Schema schema{{"x", ColumnKind::Numeric}, {"c", ColumnKind::Categorical}, {"y", ColumnKind::Target}};
  Dataset ds = load_csv(path, schema);
  CHECK(ds.rows == 3);
  CHECK(ds.columns.size() == 3);
  CHECK(ds.column("x").reals == std::vector<double>{1.5, -2.0, 0.3});
  CHECK(ds.column("c").vocab == std::vector<std::string>{"red", "blue"});
  CHECK(ds.column("c").codes == std::vector<std::uint32_t>{0, 1, 0});
  CHECK(ds.column("y").reals == std::vector<double>{10, 20, 30});
  CHECK(ds.target_indices() == std::vector<std::size_t>{2});
  // Loading the same file twice gives an identical dataset.
  CHECK(ds == load_csv(path, schema));
}

TEST_CASE("load_csv tolerates CRLF line endings") {
  std::string path = write_file("crlf.csv", "x,y\r\n1,2\r\n3,4\r\n");
  Dataset ds = load_csv(path, {{"x", ColumnKind::Numeric}, {"y", ColumnKind::Target}});
  CHECK(ds.rows == 2);
  CHECK(ds.column("y").reals == std::vector<double>{2, 4});
}

TEST_CASE("load_csv rejects malformed input with coordinates") {
  Schema xy{{"x", ColumnKind::Numeric}, {"y", ColumnKind::Target}};
  CHECK(throws_mentioning([&] { load_csv("/tmp/adaprl_data_nope.csv", xy); }, {"cannot open"}));
  std::string empty = write_file("empty.csv", "");
  CHECK(throws_mentioning([&] { load_csv(empty, xy); }, {"empty"}));
  std::string header_only = write_file("header_only.csv", "x,y\n");
  CHECK(throws_mentioning([&] { load_csv(header_only, xy); }, {"no data rows"}));
  std::string bad_header = write_file("bad_header.csv", "a,b\n1,2\n");
  CHECK(throws_mentioning([&] { load_csv(bad_header, xy); }, {"header mismatch", "x,y", "a,b"}));
  std::string bad_cell = write_file("bad_cell.csv", "x,y\n1,2\nabc,4\n");
  CHECK(throws_mentioning([&] { load_csv(bad_cell, xy); }, {"abc", "row 2", "column x"}));
  std::string short_row = write_file("short_row.csv", "x,y\n1,2\n3\n");
  CHECK(throws_mentioning([&] { load_csv(short_row, xy); }, {"row 2", "1 cells", "expected 2"}));
  std::string no_target = write_file("no_target.csv", "x,y\n1,2\n");
  CHECK(throws_mentioning([&] { load_csv(no_target, {{"x", ColumnKind::Numeric}, {"y", ColumnKind::Numeric}}); },
                          {"no target"}));
}

TEST_CASE("load_csv with pinned vocabularies rejects unknown categories") {
  std::string path = write_file("pinned.csv", "c,y\nblue,1\nred,2\n");
  Schema schema{{"c", ColumnKind::Categorical}, {"y", ColumnKind::Target}};
  Dataset ds = load_csv(path, schema, {{"c", {"red", "green", "blue"}}});
  // Codes follow the pinned vocabulary, not first-appearance order.
  CHECK(ds.column("c").codes == std::vector<std::uint32_t>{2, 0});
  CHECK(ds.column("c").vocab == std::vector<std::string>{"red", "green", "blue"});
  std::string oov = write_file("oov.csv", "c,y\nblue,1\nmauve,2\n");
  CHECK(throws_mentioning([&] { load_csv(oov, schema, {{"c", {"red", "green", "blue"}}}); },
                          {"unknown category", "mauve", "row 2", "column c"}));
}

TEST_CASE("dataset validation catches structural damage") {
  Dataset ds = tiny_dataset();
  ds.columns[1].codes[0] = 9;
  CHECK(throws_mentioning([&] { ds.validate(); }, {"code 9", "vocabulary", "column 'c'"}));
  Dataset no_target = tiny_dataset();
  no_target.columns[2].kind = ColumnKind::Numeric;
  CHECK(throws_mentioning([&] { no_target.validate(); }, {"no target"}));
  Dataset ragged = tiny_dataset();
  ragged.columns[0].reals.pop_back();
  CHECK(throws_mentioning([&] { ragged.validate(); }, {"column 'x1'", "2 values", "expected 3"}));
}

TEST_CASE("gather_rows lays out batches in model order") {
  Dataset ds = tiny_dataset();
  Batch b = gather_rows(ds, {2, 0});
  CHECK(b.numeric.shape == std::vector<std::size_t>{2, 1});
  CHECK(b.numeric.values == std::vector<double>{3, 1});
  REQUIRE(b.categorical.size() == 1);
  CHECK(b.categorical[0] == std::vector<std::uint32_t>{0, 0});
  CHECK(b.targets.shape == std::vector<std::size_t>{2, 1});
  CHECK(b.targets.values == std::vector<double>{30, 10});
  CHECK(b.weights == std::vector<double>{2, 1});
  CHECK(throws_mentioning([&] { gather_rows(ds, {3}); }, {"row index 3", "out of range"}));

  Dataset no_w = ds;
  no_w.columns.pop_back();
  CHECK(gather_rows(no_w, {0}).weights.empty());
}

TEST_CASE("split_random cuts floor-sized valid and test splits, remainder to train") {
  SynthData s = synth_heteroscedastic(10, 2, 7);
  Splits sp = split_random(s.data, 0.8, 0.1, 0.1, 99);
  CHECK(sp.train.rows == 8);
  CHECK(sp.valid.rows == 1);
  CHECK(sp.test.rows == 1);

  Splits again = split_random(s.data, 0.8, 0.1, 0.1, 99);
  CHECK(sp.train == again.train);
  CHECK(sp.valid == again.valid);
  CHECK(sp.test == again.test);

  // Union of the three splits is the original multiset of rows.
  auto row_key = [](const Dataset& ds, std::size_t r) {
    std::string k;
    for (const Column& c : ds.columns) k += std::to_string(c.reals[r]) + "|";
    return k;
  };
  std::vector<std::string> orig, merged;
  for (std::size_t r = 0; r < s.data.rows; ++r) orig.push_back(row_key(s.data, r));
  for (const Dataset* part : {&sp.train, &sp.valid, &sp.test})
    for (std::size_t r = 0; r < part->rows; ++r) merged.push_back(row_key(*part, r));
  std::sort(orig.begin(), orig.end());
  std::sort(merged.begin(), merged.end());
  CHECK(orig == merged);
}

TEST_CASE("split_random rejects bad fractions and tiny datasets") {
  SynthData s = synth_heteroscedastic(10, 1, 7);
  CHECK(throws_mentioning([&] { split_random(s.data, 0.9, 0.2, 0.1, 1); }, {"sum to 1"}));
  CHECK(throws_mentioning([&] { split_random(s.data, 1.1, -0.2, 0.1, 1); }, {"positive"}));
  SynthData tiny = synth_heteroscedastic(2, 1, 7);
  CHECK(throws_mentioning([&] { split_random(tiny.data, 0.8, 0.1, 0.1, 1); }, {"at least 3 rows", "got 2"}));
}

TEST_CASE("inject_label_noise is the identity at level 0 and seeded otherwise") {
  Dataset ds = tiny_dataset();
  CHECK(inject_label_noise(ds, {0, 123}) == ds);
  Dataset n1 = inject_label_noise(ds, {2, 123});
  CHECK(n1 == inject_label_noise(ds, {2, 123}));
  CHECK(n1 != ds);
  // Only targets move; features and weights stay bit-identical.
  CHECK(n1.column("x1") == ds.column("x1"));
  CHECK(n1.column("c") == ds.column("c"));
  CHECK(n1.column("w") == ds.column("w"));
  CHECK(n1.column("y").reals != ds.column("y").reals);
  // Purity: the input is untouched.
  CHECK(ds == tiny_dataset());
}

TEST_CASE("injected noise follows the 0.2k sized law") {
  const std::size_t n = 100000;
  Dataset ds;
  ds.rows = n;
  ds.columns.resize(1);
  ds.columns[0].name = "y";
  ds.columns[0].kind = ColumnKind::Target;
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < n; ++i) ds.columns[0].reals.push_back(uniform(rng, -3.0, 5.0));
  const double sd_y = std::sqrt(pop_variance(ds.columns[0].reals));

  for (unsigned k : {1u, 5u}) {
    Dataset noisy = inject_label_noise(ds, {k, 42});
    std::vector<double> eps(n);
    for (std::size_t i = 0; i < n; ++i) eps[i] = noisy.columns[0].reals[i] - ds.columns[0].reals[i];
    const double sd_eps = std::sqrt(pop_variance(eps));
    const double expected = 0.2 * k * sd_y;
    CHECK(std::fabs(sd_eps - expected) <= 0.02 * expected);
  }
}

TEST_CASE("corrupt_columns shuffles a fixed column choice within seeded row subsets") {
  const std::size_t n = 200;
  SynthData v = synth_heteroscedastic(n, 4, 11);
  SynthData t = synth_heteroscedastic(n, 4, 12);

  auto [v0, t0] = corrupt_columns(v.data, t.data, {0.2, 0, 9});
  CHECK(v0 == v.data);
  CHECK(t0 == t.data);

  auto changed_features = [](const Dataset& before, const Dataset& after) {
    std::vector<std::size_t> out;
    for (std::size_t i : before.feature_indices())
      if (!(before.columns[i] == after.columns[i])) out.push_back(i);
    return out;
  };

  auto [v5, t5] = corrupt_columns(v.data, t.data, {0.25, 5, 9});
  // ceil(0.25 * 4) = 1 corrupted feature column; targets untouched.
  std::vector<std::size_t> cv = changed_features(v.data, v5);
  REQUIRE(cv.size() == 1);
  CHECK(v5.column("y") == v.data.column("y"));
  CHECK(t5.column("y") == t.data.column("y"));

  // Shuffling preserves the column's multiset of values.
  std::vector<double> before = v.data.columns[cv[0]].reals;
  std::vector<double> after = v5.columns[cv[0]].reals;
  std::size_t moved = 0;
  for (std::size_t r = 0; r < n; ++r) moved += before[r] != after[r];
  CHECK(moved <= n / 2);  // at most the 10k% = 50% selected rows can move
  CHECK(moved > 0);
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  CHECK(before == after);

  // The column choice does not depend on the level.
  auto [v8, t8] = corrupt_columns(v.data, t.data, {0.25, 8, 9});
  CHECK(changed_features(v.data, v8) == cv);
  CHECK(changed_features(t.data, t5) == changed_features(t.data, t8));

  // Valid and test use different row subsets (independent streams).
  auto [v5b, t5b] = corrupt_columns(v.data, t.data, {0.25, 5, 9});
  CHECK(v5 == v5b);
  CHECK(t5 == t5b);
}

TEST_CASE("corrupt_columns validates its spec") {
  SynthData a = synth_heteroscedastic(5, 2, 1);
  SynthData b = synth_heteroscedastic(5, 2, 2);
  CHECK(throws_mentioning([&] { corrupt_columns(a.data, b.data, {0.2, 11, 0}); }, {"at most 10", "got 11"}));
  CHECK(throws_mentioning([&] { corrupt_columns(a.data, b.data, {1.5, 1, 0}); }, {"column_fraction"}));
  SynthData c = synth_heteroscedastic(5, 3, 3);
  CHECK(throws_mentioning([&] { corrupt_columns(a.data, c.data, {0.2, 1, 0}); }, {"schemas differ"}));
}

TEST_CASE("subsample keeps a seeded fraction of rows in original order") {
  SynthData s = synth_heteroscedastic(100, 1, 3);
  CHECK(subsample(s.data, 1.0, 5) == s.data);
  Dataset half = subsample(s.data, 0.5, 5);
  CHECK(half.rows == 50);
  CHECK(half == subsample(s.data, 0.5, 5));
  CHECK(subsample(s.data, 0.33, 5).rows == 33);

  // Rows survive in original order: x1 values must appear as a subsequence.
  const std::vector<double>& all = s.data.column("x1").reals;
  const std::vector<double>& kept = half.column("x1").reals;
  std::size_t cursor = 0;
  for (double v : kept) {
    while (cursor < all.size() && all[cursor] != v) ++cursor;
    REQUIRE(cursor < all.size());
    ++cursor;
  }
  CHECK(throws_mentioning([&] { subsample(s.data, 0.0, 1); }, {"fraction", "(0,1]"}));
  CHECK(throws_mentioning([&] { subsample(s.data, 1.5, 1); }, {"fraction", "(0,1]"}));
}

TEST_CASE("synthetic generator is seeded and exposes its ground truth") {
  SynthData a = synth_heteroscedastic(50, 3, 21);
  SynthData b = synth_heteroscedastic(50, 3, 21);
  CHECK(a.data == b.data);
  CHECK(a.f_star == b.f_star);
  CHECK(a.sigma_star == b.sigma_star);
  CHECK(a.data != synth_heteroscedastic(50, 3, 22).data);

  CHECK(a.data.rows == 50);
  CHECK(a.data.columns.size() == 4);
  CHECK(a.data.columns[0].name == "x1");
  CHECK(a.data.columns[3].kind == ColumnKind::Target);
  for (std::size_t j = 0; j < 3; ++j)
    for (double x : a.data.columns[j].reals) CHECK(std::fabs(x) < 1.0);

  // Noise suppression pins y to f* exactly, with identical features.
  SynthData clean = synth_heteroscedastic(50, 3, 21, true);
  CHECK(clean.data.column("x1") == a.data.column("x1"));
  CHECK(clean.data.column("y").reals == clean.f_star);
  CHECK(a.data.column("y").reals != a.f_star);
}

TEST_CASE("synthetic noise scale spans a 10x range tied to x1") {
  SynthData s = synth_heteroscedastic(10000, 2, 31);
  auto [lo, hi] = std::minmax_element(s.sigma_star.begin(), s.sigma_star.end());
  CHECK(*lo > 0.1);
  CHECK(*hi < 1.0);
  CHECK(*hi / *lo > 9.0);
  CHECK(*hi / *lo < 10.0);
  for (std::size_t i = 0; i < s.data.rows; ++i) {
    double expect = 0.1 * std::pow(10.0, (s.data.columns[0].reals[i] + 1.0) / 2.0);
    CHECK(s.sigma_star[i] == expect);
  }
}

TEST_CASE("high and low noise deciles differ by roughly two orders of variance") {
  const std::size_t n = 100000;
  SynthData s = synth_heteroscedastic(n, 3, 77);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return s.sigma_star[a] < s.sigma_star[b]; });
  const std::size_t decile = n / 10;
  std::vector<double> low, high;
  const std::vector<double>& y = s.data.column("y").reals;
  for (std::size_t i = 0; i < decile; ++i) {
    low.push_back(y[order[i]] - s.f_star[order[i]]);
    high.push_back(y[order[n - 1 - i]] - s.f_star[order[n - 1 - i]]);
  }
  const double ratio = pop_variance(high) / pop_variance(low);
  CHECK(ratio > 100.0 / 3.0);
  CHECK(ratio < 300.0);
}

TEST_CASE("quantile binning splits distinct training values evenly") {
  std::vector<double> values;
  for (int i = 159; i >= 0; --i) values.push_back(static_cast<double>(i));
  QuantileBinner qb = QuantileBinner::fit(values, 16);
  CHECK(qb.edges.size() == 15);
  CHECK(qb.bins() == 16);
  std::vector<std::size_t> counts(16, 0);
  for (double v : values) ++counts[qb.bin(v)];
  for (std::size_t c : counts) CHECK(c == 10);

  // Out-of-range values clamp to the outer bins; bin() is monotone.
  CHECK(qb.bin(-100.0) == 0);
  CHECK(qb.bin(1e9) == 15);
  std::uint32_t prev = 0;
  for (double v = -5; v <= 165; v += 0.5) {
    std::uint32_t b = qb.bin(v);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK(throws_mentioning([] { QuantileBinner::fit({}, 16); }, {"empty"}));
  CHECK(throws_mentioning([] { QuantileBinner::fit({1.0, 2.0}, 1); }, {"at least 2 bins"}));
}

TEST_CASE("bin_column swaps a numeric column for its binned categorical form") {
  SynthData s = synth_heteroscedastic(64, 2, 13);
  QuantileBinner qb = QuantileBinner::fit(s.data.column("x1").reals, 4);
  Dataset binned = bin_column(s.data, "x1", qb);
  const Column& c = binned.column("x1");
  CHECK(c.kind == ColumnKind::Categorical);
  CHECK(c.vocab == std::vector<std::string>{"bin0", "bin1", "bin2", "bin3"});
  REQUIRE(c.codes.size() == 64);
  for (std::size_t i = 0; i < 64; ++i) CHECK(c.codes[i] == qb.bin(s.data.column("x1").reals[i]));
  CHECK(binned.column("x2") == s.data.column("x2"));
  CHECK(throws_mentioning([&] { bin_column(binned, "x1", qb); }, {"categorical", "expected numeric"}));
  binned.validate();
}

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "ecnu/data.hpp"
#include "ecnu/error.hpp"

namespace ecnu {
namespace {

RawSeries series_of(std::vector<std::vector<double>> rows_by_sensor) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows_by_sensor.size(); ++i) names.push_back("s" + std::to_string(i));
  RawSeries s = RawSeries::with_shape(names, rows_by_sensor.front().size());
  for (std::size_t i = 0; i < rows_by_sensor.size(); ++i) {
    for (std::size_t t = 0; t < s.length; ++t) s.value(i, t) = rows_by_sensor[i][t];
  }
  return s;
}

RawSeries random_series(std::size_t n, std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i));
  RawSeries s = RawSeries::with_shape(names, length);
  for (double& v : s.values) v = normal(rng);
  return s;
}

RawSeries parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

TEST(Csv, RoundTripIsBitIdentical) {
  RawSeries s = series_of({{0.1, 1.0 / 3.0, -2.5e-17}, {1e300, 7.0, -0.0}});
  std::ostringstream out;
  write_csv(out, s);
  const RawSeries back = parse(out.str());
  EXPECT_EQ(back.sensor_names, s.sensor_names);
  ASSERT_EQ(back.values.size(), s.values.size());
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[k]), std::bit_cast<std::uint64_t>(s.values[k]));
  }
  std::ostringstream again;
  write_csv(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Csv, LabelColumnIsSeparated) {
  const RawSeries s = parse("a,b,label\n1,2,0\n3,4,1\n");
  EXPECT_EQ(s.n_sensors(), 2u);
  ASSERT_TRUE(s.labels.has_value());
  EXPECT_EQ(*s.labels, (std::vector<int>{0, 1}));
  EXPECT_DOUBLE_EQ(s.value(1, 1), 4.0);
}

TEST(Csv, EmptyCellIsMissing) {
  const RawSeries s = parse("a,b\n1,\n,4\n");
  EXPECT_TRUE(s.is_missing(1, 0));
  EXPECT_TRUE(s.is_missing(0, 1));
  EXPECT_FALSE(s.is_missing(0, 0));
  EXPECT_TRUE(s.has_missing());
}

TEST(Csv, ErrorsCarryLineNumbers) {
  try {
    parse("a,b\n1,2\n3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse("a,b\n1,2\n3,x\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("a,label\n1,2\n"), ParseError);
}

TEST(Csv, MissingFileIsIoError) {
  EXPECT_THROW(load_csv("/nonexistent/dir/file.csv"), IoError);
}

TEST(Csv, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Downsample, FactorOneIsIdentity) {
  const RawSeries s = random_series(3, 11, 1);
  const RawSeries d = downsample_median(s, 1);
  EXPECT_EQ(d.values, s.values);
  EXPECT_EQ(d.length, s.length);
}

TEST(Downsample, MedianSuppressesSpike) {
  const RawSeries d = downsample_median(series_of({{1.0, 100.0, 2.0}}), 3);
  ASSERT_EQ(d.length, 1u);
  EXPECT_DOUBLE_EQ(d.value(0, 0), 2.0);
}

TEST(Downsample, MajorityLabelWithTiesAnomalous) {
  RawSeries s = series_of({{0, 0, 0, 0, 0, 0, 0, 0}});
  s.labels = std::vector<int>{1, 1, 0, 0, 0, 1, 1, 0};
  const RawSeries d = downsample_median(s, 3);
  ASSERT_EQ(d.length, 3u);
  // Blocks [1,1,0], [0,0,1], trailing partial [1,0].
  EXPECT_EQ(*d.labels, (std::vector<int>{1, 0, 1}));
}

TEST(Downsample, TrailingPartialBlock) {
  const RawSeries d = downsample_median(series_of({{1, 2, 3, 4, 10}}), 2);
  ASSERT_EQ(d.length, 3u);
  EXPECT_DOUBLE_EQ(d.value(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(d.value(0, 1), 3.5);
  EXPECT_DOUBLE_EQ(d.value(0, 2), 10.0);
}

TEST(Downsample, ZeroFactorIsContractError) {
  EXPECT_THROW(downsample_median(series_of({{1.0}}), 0), ContractError);
}

TEST(Impute, MeanOfObserved) {
  RawSeries s = series_of({{1, 0, 3}});
  s.missing[1] = 1;
  const RawSeries r = impute_mean(s);
  EXPECT_DOUBLE_EQ(r.value(0, 1), 2.0);
  EXPECT_FALSE(r.has_missing());
}

TEST(Impute, NoMissingIsIdentity) {
  const RawSeries s = random_series(2, 7, 5);
  EXPECT_EQ(impute_mean(s).values, s.values);
}

TEST(Impute, AllMissingSensorNamesIt) {
  RawSeries s = series_of({{1, 2}, {0, 0}});
  s.missing[2] = s.missing[3] = 1;
  try {
    impute_mean(s);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
  }
}

TEST(Trim, DropsHeadKeepsLabelsAligned) {
  RawSeries s = series_of({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}});
  s.labels = std::vector<int>{0, 0, 0, 1, 0, 0, 0, 0, 0, 1};
  const RawSeries t = trim_head(s, 3);
  EXPECT_EQ(t.length, 7u);
  EXPECT_DOUBLE_EQ(t.value(0, 0), 3.0);
  EXPECT_EQ((*t.labels)[0], 1);
  EXPECT_EQ((*t.labels)[6], 1);
  EXPECT_EQ(trim_head(s, 0).values, s.values);
  EXPECT_THROW(trim_head(s, 10), ContractError);
}

TEST(MinMax, ScalesWithoutClipping) {
  const RawSeries train = series_of({{2, 10}, {5, 5}});
  const NormStats stats = fit_minmax(train);
  const RawSeries test = apply_minmax(series_of({{6, 18}, {5, 9}}), stats);
  EXPECT_DOUBLE_EQ(test.value(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(test.value(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(test.value(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(test.value(1, 1), 0.0);
}

TEST(Preprocess, CleanDataIsIdempotent) {
  const RawSeries s = random_series(3, 20, 9);
  std::optional<NormStats> none;
  const RawSeries once = preprocess(s, {}, none);
  const RawSeries twice = preprocess(once, {}, none);
  EXPECT_EQ(once.values, s.values);
  EXPECT_EQ(twice.values, once.values);
}

TEST(Preprocess, FitsStatsOnlyWhenAbsent) {
  const RawSeries s = random_series(2, 30, 4);
  PreprocessOptions opt;
  opt.normalize = true;
  std::optional<NormStats> stats;
  preprocess(s, opt, stats);
  ASSERT_TRUE(stats.has_value());
  const NormStats fitted = *stats;
  preprocess(random_series(2, 30, 8), opt, stats);
  EXPECT_EQ(stats->min, fitted.min);
  EXPECT_EQ(stats->max, fitted.max);
}

TEST(Preprocess, MetadataCarriesStats) {
  const auto dir = std::filesystem::temp_directory_path() / "ecnu_data_test";
  std::filesystem::create_directories(dir);
  const NormStats stats{{0.25, -1.0 / 3.0}, {2.0, 7.5}};
  write_preprocess_metadata(dir / "meta.json", {}, stats, "raw.csv");
  const auto back = read_stats_from_metadata(dir / "meta.json");
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->min, stats.min);
  EXPECT_EQ(back->max, stats.max);
  write_preprocess_metadata(dir / "none.json", {}, std::nullopt, "raw.csv");
  EXPECT_FALSE(read_stats_from_metadata(dir / "none.json").has_value());
  std::filesystem::remove_all(dir);
}

TEST(Windows, Boundaries) {
  const RawSeries s6 = random_series(2, 6, 1);
  const WindowedDataset one = make_windows(s6, 5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.target_time(0), 5u);
  EXPECT_EQ(make_windows(random_series(1, 10, 2), 3).size(), 7u);
  EXPECT_THROW(make_windows(s6, 6), ContractError);
  EXPECT_THROW(make_windows(s6, 0), ContractError);
}

TEST(Windows, ColumnsMatchSeriesByDirectIndexing) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RawSeries s = random_series(4, 40, seed);
    const std::size_t w = 1 + seed;
    const WindowedDataset windows = make_windows(s, w);
    ASSERT_EQ(windows.size(), s.length - w);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const std::size_t t = windows.target_time(i);
      const auto x = windows.input(i);
      const auto y = windows.target(i);
      for (std::size_t n = 0; n < 4; ++n) {
        for (std::size_t j = 0; j < w; ++j) EXPECT_EQ(x[n * w + j], s.value(n, t - w + j));
        EXPECT_EQ(y[n], s.value(n, t));
      }
    }
  }
}

TEST(Windows, LabelsFollowTargets) {
  RawSeries s = random_series(1, 8, 3);
  s.labels = std::vector<int>{0, 0, 0, 1, 0, 1, 0, 0};
  const WindowedDataset w = make_windows(s, 3);
  EXPECT_EQ(w.label(0), 1);
  EXPECT_EQ(w.label(1), 0);
  EXPECT_EQ(w.label(2), 1);
  EXPECT_THROW(make_windows(random_series(1, 8, 3), 3).label(0), ContractError);
}

TEST(Windows, MissingValuesRejected) {
  RawSeries s = random_series(1, 8, 3);
  s.missing[2] = 1;
  EXPECT_THROW(make_windows(s, 3), DataError);
}

TEST(Split, ChronologicalWithCeiling) {
  const WindowedDataset w = make_windows(random_series(1, 105, 1), 5);
  const auto [train, val] = split_train_val(w, 0.1);
  EXPECT_EQ(train.size(), 90u);
  EXPECT_EQ(val.size(), 10u);
  EXPECT_LT(train.target_times().back(), val.target_times().front());

  const WindowedDataset three = make_windows(random_series(1, 4, 1), 1);
  const auto [t3, v3] = split_train_val(three, 0.5);
  EXPECT_EQ(t3.size(), 1u);
  EXPECT_EQ(v3.size(), 2u);

  std::vector<std::size_t> joined = train.target_times();
  joined.insert(joined.end(), val.target_times().begin(), val.target_times().end());
  EXPECT_EQ(joined, w.target_times());

  EXPECT_THROW(split_train_val(w, 0.0), ContractError);
  EXPECT_THROW(split_train_val(w, 1.0), ContractError);
}

}  // namespace
}  // namespace ecnu

#include "../scratch.hpp"
#include "cvarnet/data_panel.hpp"
#include "cvarnet/rng.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>

#include <cmath>

using namespace cvarnet;
using namespace cvarnet::data;

namespace {

PricePanel panel(std::vector<Date> dates, std::vector<std::string> assets,
                 const std::vector<std::vector<std::optional<double>>>& rows) {
  PricePanel p;
  p.dates = std::move(dates);
  p.assets = std::move(assets);
  p.prices = OptionalGrid(p.dates.size(), p.assets.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) p.prices(r, c) = rows[r][c];
  return p;
}

std::vector<Date> fridays(std::size_t n, Date first = Date::from_ymd(2020, 1, 3)) {
  std::vector<Date> d;
  for (std::size_t i = 0; i < n; ++i) d.push_back(first.plus_days(static_cast<int>(7 * i)));
  return d;
}

ReturnPanel returns_on(const std::vector<Date>& dates) {
  Matrix m = Matrix::Constant(static_cast<Eigen::Index>(dates.size()), 2, 0.01);
  return ReturnPanel::from_simple(dates, {"A", "B"}, m, Vector::Zero(static_cast<Eigen::Index>(dates.size())));
}

FactorPanel factors_on(const std::vector<Date>& dates) {
  FactorPanel f;
  f.dates = dates;
  f.factors = Matrix::Zero(static_cast<Eigen::Index>(dates.size()), kFactorCount);
  f.rf = Vector::Constant(static_cast<Eigen::Index>(dates.size()), 0.0005);
  return f;
}

}  // namespace

TEST(ConvertToBase, DividesForeignColumns) {
  auto p = panel(fridays(1), {"NIFTY", "SPX"}, {{8300.0, 50.0}});
  p.currency_tags = {"INR", "USD"};
  const auto out = convert_to_base(p, {{p.dates[0], 83.0}});
  EXPECT_DOUBLE_EQ(*out.prices(0, 0), 100.0);
  EXPECT_DOUBLE_EQ(*out.prices(0, 1), 50.0);
}

TEST(ConvertToBase, MissingFxNamesTheWeek) {
  auto p = panel(fridays(2), {"NIFTY"}, {{8300.0}, {8400.0}});
  p.currency_tags = {"INR"};
  try {
    convert_to_base(p, {{p.dates[0], 83.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(p.dates[1].iso()), std::string::npos);
  }
}

TEST(ResampleWeekly, KeepsLastObservation) {
  const Date mon = Date::from_ymd(2024, 1, 1);
  auto daily = panel({mon, mon.plus_days(1), mon.plus_days(3), mon.plus_days(7)}, {"A", "B"},
                     {{1.0, 5.0}, {2.0, std::nullopt}, {4.0, std::nullopt}, {6.0, std::nullopt}});
  const auto w = resample_weekly(daily);
  ASSERT_EQ(w.dates.size(), 2u);
  EXPECT_EQ(w.dates[0], Date::from_ymd(2024, 1, 5));
  EXPECT_EQ(w.dates[1], Date::from_ymd(2024, 1, 12));
  EXPECT_DOUBLE_EQ(*w.prices(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(*w.prices(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(*w.prices(1, 0), 6.0);
  EXPECT_FALSE(w.prices(1, 1).has_value());
}

TEST(ComputeReturns, SimpleAndLog) {
  const auto r = compute_returns(panel(fridays(3), {"A"}, {{100.0}, {110.0}, {110.0}}));
  ASSERT_EQ(r.dates.size(), 2u);
  EXPECT_NEAR(*r.simple(0, 0), 0.10, 1e-15);
  EXPECT_EQ(*r.simple(1, 0), 0.0);
  const auto clean = clean_panel(r);
  EXPECT_NEAR(clean.log(0, 0), std::log1p(0.1), 1e-15);
  EXPECT_NEAR(clean.log(0, 0), 0.0953102, 1e-7);
  EXPECT_EQ(clean.log(1, 0), 0.0);
}

TEST(CleanPanel, DropsSparseAssetsThenGappyWeeks) {
  RawReturns raw;
  raw.dates = fridays(20);
  raw.assets = {"DENSE", "SPARSE", "HOLEY"};
  raw.simple = OptionalGrid(20, 3);
  for (std::size_t t = 0; t < 20; ++t) {
    raw.simple(t, 0) = 0.01;
    if (t >= 3) raw.simple(t, 1) = 0.02;  // 85%
    if (t != 7) raw.simple(t, 2) = 0.03;  // 95%
  }
  const auto p = clean_panel(raw, 0.90);
  EXPECT_EQ(p.assets, (std::vector<std::string>{"DENSE", "HOLEY"}));
  EXPECT_EQ(p.weeks(), 19u);
  for (const auto& d : p.dates) EXPECT_NE(d, raw.dates[7]);
}

TEST(CleanPanel, DensePanelUnchanged) {
  RawReturns raw;
  raw.dates = fridays(5);
  raw.assets = {"A", "B"};
  raw.simple = OptionalGrid(5, 2);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 2; ++c) raw.simple(t, c) = 0.001 * static_cast<double>(t + c);
  const auto p = clean_panel(raw);
  EXPECT_EQ(p.weeks(), 5u);
  EXPECT_EQ(p.asset_count(), 2u);
  EXPECT_EQ(p.simple(4, 1), 0.005);
}

TEST(AlignCalendar, Intersection) {
  const auto all = fridays(15);
  const std::vector<Date> rd(all.begin(), all.begin() + 10);
  const std::vector<Date> fd(all.begin() + 4, all.end());
  const auto [r, f] = align_calendar(returns_on(rd), factors_on(fd));
  ASSERT_EQ(r.weeks(), 6u);
  ASSERT_EQ(f.weeks(), 6u);
  EXPECT_EQ(r.dates.front(), all[4]);
  EXPECT_EQ(r.dates.back(), all[9]);
  EXPECT_EQ(r.dates, f.dates);
  EXPECT_EQ(r.rf(0), 0.0005);
}

TEST(AlignCalendar, DisjointIsAnError) {
  EXPECT_THROW(align_calendar(returns_on(fridays(5)), factors_on(fridays(5, Date::from_ymd(2021, 1, 1)))), Error);
}

TEST(JarqueBera, TwoPointSeries) {
  std::vector<double> x;
  for (int i = 0; i < 60; ++i) x.push_back(i % 2 ? 1.0 : -1.0);
  const auto jb = jarque_bera(x);
  EXPECT_NEAR(jb.skewness, 0.0, 1e-12);
  EXPECT_NEAR(jb.kurtosis, 1.0, 1e-12);
  EXPECT_NEAR(jb.statistic, 60.0 / 6.0, 1e-9);
  EXPECT_TRUE(jb.reject_at_5pct);
}

TEST(JarqueBera, RejectionRates) {
  Rng rng(99, "jb");
  int normal_rejects = 0, t_rejects = 0;
  const int runs = 1000;
  boost::math::students_t t3(3.0);
  for (int k = 0; k < runs; ++k) {
    std::vector<double> z(2000), t(500);
    for (auto& v : z) v = rng.normal();
    for (auto& v : t) v = boost::math::quantile(t3, rng.uniform());
    normal_rejects += jarque_bera(z).reject_at_5pct;
    t_rejects += jarque_bera(t).reject_at_5pct;
  }
  EXPECT_NEAR(normal_rejects / double(runs), 0.05, 0.02);
  EXPECT_GT(t_rejects / double(runs), 0.9);
}

TEST(PriceCsv, RoundTripWithCurrencyRow) {
  auto p = panel(fridays(2), {"A", "B"}, {{1.0, 2.0}, {std::nullopt, 3.0}});
  p.currency_tags = {"USD", "EUR"};
  const auto path = scratch_dir() / "cvarnet_prices.csv";
  write_price_csv(path, p);
  const auto back = read_price_csv(path);
  EXPECT_EQ(back.currency_tags, p.currency_tags);
  EXPECT_FALSE(back.prices(1, 0).has_value());
  EXPECT_EQ(*back.prices(1, 1), 3.0);
  std::filesystem::remove(path);
}

TEST(PricePanel, RejectsNonPositivePrice) {
  auto p = panel(fridays(1), {"A"}, {{-1.0}});
  EXPECT_THROW(p.validate(), Error);
}

#include "cvarnet/data_panel.hpp"

#include "cvarnet/csv.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cvarnet::data {

namespace {

std::string cell_name(const std::vector<Date>& dates, const std::vector<std::string>& assets,
                      std::size_t r, std::size_t c) {
  return "(" + dates[r].iso() + ", " + assets[c] + ")";
}

void require_increasing(const std::vector<Date>& dates, const char* what) {
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (!(dates[i - 1] < dates[i])) {
      fail(ErrorKind::data, std::string(what) + ": dates not strictly increasing at " +
                                dates[i].iso());
    }
  }
}

}  // namespace

void PricePanel::validate() const {
  require_increasing(dates, "price panel");
  if (prices.rows() != dates.size() || prices.cols() != assets.size()) {
    fail(ErrorKind::data, "price panel shape does not match its index");
  }
  if (!currency_tags.empty() && currency_tags.size() != assets.size()) {
    fail(ErrorKind::data, "price panel currency tags do not match assets");
  }
  for (std::size_t r = 0; r < prices.rows(); ++r) {
    for (std::size_t c = 0; c < prices.cols(); ++c) {
      if (prices(r, c) && !(*prices(r, c) > 0.0)) {
        fail(ErrorKind::domain, "non-positive price at " + cell_name(dates, assets, r, c));
      }
    }
  }
}

ReturnPanel ReturnPanel::from_simple(std::vector<Date> dates, std::vector<std::string> assets,
                                     Matrix simple, Vector rf) {
  ReturnPanel p;
  p.dates = std::move(dates);
  p.assets = std::move(assets);
  p.simple = std::move(simple);
  p.log = p.simple.unaryExpr([](double r) { return std::log1p(r); });
  p.rf = std::move(rf);
  return p;
}

ReturnPanel ReturnPanel::head(std::size_t end) const {
  end = std::min(end, weeks());
  ReturnPanel p;
  p.dates.assign(dates.begin(), dates.begin() + static_cast<std::ptrdiff_t>(end));
  p.assets = assets;
  p.simple = simple.topRows(static_cast<Eigen::Index>(end));
  p.log = log.topRows(static_cast<Eigen::Index>(end));
  p.rf = rf.head(static_cast<Eigen::Index>(end));
  return p;
}

FactorPanel FactorPanel::head(std::size_t end) const {
  end = std::min(end, weeks());
  FactorPanel p;
  p.dates.assign(dates.begin(), dates.begin() + static_cast<std::ptrdiff_t>(end));
  p.factors = factors.topRows(static_cast<Eigen::Index>(end));
  p.rf = rf.head(static_cast<Eigen::Index>(end));
  return p;
}

PricePanel convert_to_base(const PricePanel& prices, const FxSeries& fx, const std::string& base) {
  PricePanel out = prices;
  if (out.currency_tags.empty()) out.currency_tags.assign(out.assets.size(), base);
  for (std::size_t c = 0; c < out.assets.size(); ++c) {
    if (out.currency_tags[c] == base) continue;
    for (std::size_t r = 0; r < out.dates.size(); ++r) {
      auto& cell = out.prices(r, c);
      if (!cell) continue;
      auto it = fx.find(out.dates[r]);
      if (it == fx.end()) {
        fail(ErrorKind::data, "fx rate missing for " + out.dates[r].iso() + " (needed by " +
                                  out.assets[c] + ")");
      }
      if (!(it->second > 0.0)) {
        fail(ErrorKind::domain, "non-positive fx rate on " + out.dates[r].iso());
      }
      *cell /= it->second;
    }
    out.currency_tags[c] = base;
  }
  return out;
}

PricePanel resample_weekly(const PricePanel& daily, unsigned anchor) {
  PricePanel out;
  out.assets = daily.assets;
  out.currency_tags = daily.currency_tags;
  if (daily.dates.empty()) {
    out.prices = OptionalGrid(0, daily.assets.size());
    return out;
  }
  require_increasing(daily.dates, "daily panel");

  std::vector<std::size_t> week_of(daily.dates.size());
  for (std::size_t r = 0; r < daily.dates.size(); ++r) {
    const Date end = week_ending(daily.dates[r], anchor);
    if (out.dates.empty() || out.dates.back() != end) out.dates.push_back(end);
    week_of[r] = out.dates.size() - 1;
  }
  out.prices = OptionalGrid(out.dates.size(), daily.assets.size());
  for (std::size_t r = 0; r < daily.dates.size(); ++r) {
    for (std::size_t c = 0; c < daily.assets.size(); ++c) {
      if (daily.prices(r, c)) out.prices(week_of[r], c) = daily.prices(r, c);
    }
  }
  return out;
}

PricePanel fill_price_gaps(const PricePanel& prices, std::size_t max_run) {
  PricePanel out = prices;
  const std::size_t T = prices.dates.size();
  for (std::size_t c = 0; c < prices.assets.size(); ++c) {
    std::size_t r = 0;
    while (r < T) {
      if (prices.prices(r, c)) {
        ++r;
        continue;
      }
      const std::size_t start = r;
      while (r < T && !prices.prices(r, c)) ++r;
      const std::size_t run = r - start;
      if (run > max_run) continue;
      std::optional<double> fill;
      if (start > 0) {
        fill = prices.prices(start - 1, c);
      } else if (r < T) {
        fill = prices.prices(r, c);
      }
      if (!fill) continue;
      for (std::size_t k = start; k < r; ++k) out.prices(k, c) = fill;
    }
  }
  return out;
}

RawReturns compute_returns(const PricePanel& prices) {
  prices.validate();
  RawReturns out;
  out.assets = prices.assets;
  const std::size_t T = prices.dates.size();
  if (T < 2) {
    out.simple = OptionalGrid(0, prices.assets.size());
    return out;
  }
  out.dates.assign(prices.dates.begin() + 1, prices.dates.end());
  out.simple = OptionalGrid(T - 1, prices.assets.size());
  for (std::size_t r = 1; r < T; ++r) {
    for (std::size_t c = 0; c < prices.assets.size(); ++c) {
      const auto& prev = prices.prices(r - 1, c);
      const auto& cur = prices.prices(r, c);
      if (prev && cur) out.simple(r - 1, c) = *cur / *prev - 1.0;
    }
  }
  return out;
}

ReturnPanel clean_panel(const RawReturns& returns, double min_coverage) {
  if (!(min_coverage > 0.0 && min_coverage <= 1.0)) {
    fail(ErrorKind::config, "min_coverage must lie in (0, 1]");
  }
  require_increasing(returns.dates, "return panel");
  const std::size_t T = returns.dates.size();
  const std::size_t N = returns.assets.size();

  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < N; ++c) {
    std::size_t present = 0;
    for (std::size_t r = 0; r < T; ++r) present += returns.simple(r, c).has_value();
    const double coverage = T ? static_cast<double>(present) / static_cast<double>(T) : 0.0;
    if (coverage >= min_coverage) kept.push_back(c);
  }
  if (kept.empty()) fail(ErrorKind::data, "every asset fell below the coverage threshold");

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < T; ++r) {
    bool complete = true;
    for (std::size_t c : kept) complete = complete && returns.simple(r, c).has_value();
    if (complete) rows.push_back(r);
  }
  if (rows.empty()) fail(ErrorKind::data, "no complete weeks remain after cleaning");

  Matrix simple(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kept.size()));
  std::vector<Date> dates;
  std::vector<std::string> assets;
  for (std::size_t c : kept) assets.push_back(returns.assets[c]);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dates.push_back(returns.dates[rows[i]]);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      simple(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          *returns.simple(rows[i], kept[j]);
    }
  }
  return ReturnPanel::from_simple(std::move(dates), std::move(assets), std::move(simple),
                                  Vector::Zero(static_cast<Eigen::Index>(rows.size())));
}

std::pair<ReturnPanel, FactorPanel> align_calendar(const ReturnPanel& returns,
                                                   const FactorPanel& factors) {
  std::vector<std::size_t> ri, fi;
  std::size_t a = 0, b = 0;
  while (a < returns.dates.size() && b < factors.dates.size()) {
    if (returns.dates[a] < factors.dates[b]) {
      ++a;
    } else if (factors.dates[b] < returns.dates[a]) {
      ++b;
    } else {
      ri.push_back(a++);
      fi.push_back(b++);
    }
  }
  if (ri.empty()) fail(ErrorKind::data, "return and factor calendars do not intersect");

  const auto n = static_cast<Eigen::Index>(ri.size());
  ReturnPanel r;
  r.assets = returns.assets;
  r.simple.resize(n, returns.simple.cols());
  r.log.resize(n, returns.log.cols());
  r.rf.resize(n);
  FactorPanel f;
  f.factors.resize(n, factors.factors.cols());
  f.rf.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ra = static_cast<Eigen::Index>(ri[static_cast<std::size_t>(i)]);
    const auto fb = static_cast<Eigen::Index>(fi[static_cast<std::size_t>(i)]);
    r.dates.push_back(returns.dates[static_cast<std::size_t>(ra)]);
    f.dates.push_back(factors.dates[static_cast<std::size_t>(fb)]);
    r.simple.row(i) = returns.simple.row(ra);
    r.log.row(i) = returns.log.row(ra);
    f.factors.row(i) = factors.factors.row(fb);
    f.rf(i) = factors.rf(fb);
    r.rf(i) = factors.rf(fb);
  }
  return {std::move(r), std::move(f)};
}

JarqueBera jarque_bera(std::span<const double> series) {
  if (series.size() < 8) fail(ErrorKind::data, "Jarque-Bera needs at least 8 observations");
  const double n = static_cast<double>(series.size());
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : series) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) fail(ErrorKind::numerical, "Jarque-Bera undefined for zero variance");
  JarqueBera jb;
  jb.skewness = m3 / std::pow(m2, 1.5);
  jb.kurtosis = m4 / (m2 * m2);
  const double excess = jb.kurtosis - 3.0;
  jb.statistic = n / 6.0 * (jb.skewness * jb.skewness + excess * excess / 4.0);
  jb.reject_at_5pct = jb.statistic > 5.99;
  return jb;
}

// ---------------------------------------------------------------------------
// CSV

PricePanel read_price_csv(const std::filesystem::path& path, const std::string& base) {
  const auto t = csv::read(path);
  const std::size_t dc = t.column("date");
  PricePanel p;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i == dc) continue;
    cols.push_back(i);
    p.assets.push_back(t.header[i]);
  }
  p.currency_tags.assign(p.assets.size(), base);
  std::vector<const std::vector<std::string>*> data_rows;
  for (const auto& row : t.rows) {
    if (row[dc] == "currency") {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (!row[cols[j]].empty()) p.currency_tags[j] = row[cols[j]];
      }
      continue;
    }
    data_rows.push_back(&row);
  }
  p.prices = OptionalGrid(data_rows.size(), cols.size());
  for (std::size_t r = 0; r < data_rows.size(); ++r) {
    const auto& row = *data_rows[r];
    p.dates.push_back(Date::parse(row[dc]));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      p.prices(r, j) = csv::parse_cell(row[cols[j]], path.string() + " " + row[dc]);
    }
  }
  p.validate();
  return p;
}

void write_price_csv(const std::filesystem::path& path, const PricePanel& panel) {
  csv::Table t;
  t.header.push_back("date");
  for (const auto& a : panel.assets) t.header.push_back(a);
  bool foreign = false;
  for (const auto& c : panel.currency_tags) foreign = foreign || c != panel.currency_tags.front();
  if (foreign) {
    std::vector<std::string> row{"currency"};
    for (const auto& c : panel.currency_tags) row.push_back(c);
    t.rows.push_back(std::move(row));
  }
  for (std::size_t r = 0; r < panel.dates.size(); ++r) {
    std::vector<std::string> row{panel.dates[r].iso()};
    for (std::size_t c = 0; c < panel.assets.size(); ++c) {
      const auto& v = panel.prices(r, c);
      row.push_back(v ? csv::format(*v) : std::string());
    }
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

ReturnPanel read_return_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const std::size_t dc = t.column("date");
  const auto rfc = t.find_column("RF");
  std::vector<std::size_t> cols;
  std::vector<std::string> assets;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i == dc || (rfc && i == *rfc)) continue;
    cols.push_back(i);
    assets.push_back(t.header[i]);
  }
  const auto T = static_cast<Eigen::Index>(t.rows.size());
  Matrix simple(T, static_cast<Eigen::Index>(cols.size()));
  Vector rf = Vector::Zero(T);
  std::vector<Date> dates;
  for (Eigen::Index r = 0; r < T; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    dates.push_back(Date::parse(row[dc]));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      auto v = csv::parse_cell(row[cols[j]], path.string() + " " + row[dc]);
      if (!v) {
        fail(ErrorKind::data, path.string() + ": return panel must be rectangular; missing " +
                                  assets[j] + " on " + row[dc]);
      }
      simple(r, static_cast<Eigen::Index>(j)) = *v;
    }
    if (rfc) rf(r) = csv::parse_cell(row[*rfc], path.string()).value_or(0.0);
  }
  require_increasing(dates, path.string().c_str());
  return ReturnPanel::from_simple(std::move(dates), std::move(assets), std::move(simple),
                                  std::move(rf));
}

void write_return_csv(const std::filesystem::path& path, const ReturnPanel& panel) {
  csv::Table t;
  t.header.push_back("date");
  for (const auto& a : panel.assets) t.header.push_back(a);
  t.header.push_back("RF");
  for (std::size_t r = 0; r < panel.dates.size(); ++r) {
    std::vector<std::string> row{panel.dates[r].iso()};
    const auto ri = static_cast<Eigen::Index>(r);
    for (Eigen::Index c = 0; c < panel.simple.cols(); ++c) {
      row.push_back(csv::format(panel.simple(ri, c)));
    }
    row.push_back(csv::format(panel.rf(ri)));
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

FactorPanel read_factor_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  double scale = 1.0;
  for (const auto& c : t.comments) {
    if (c == "units=percent") scale = 0.01;
  }
  const std::size_t dc = t.column("date");
  std::array<std::size_t, kFactorCount> cols{};
  for (std::size_t k = 0; k < kFactorCount; ++k) cols[k] = t.column(std::string(kFactorNames[k]));
  const auto rfc = t.find_column("RF");

  FactorPanel f;
  const auto T = static_cast<Eigen::Index>(t.rows.size());
  f.factors.resize(T, static_cast<Eigen::Index>(kFactorCount));
  f.rf = Vector::Zero(T);
  for (Eigen::Index r = 0; r < T; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    f.dates.push_back(Date::parse(row[dc]));
    for (std::size_t k = 0; k < kFactorCount; ++k) {
      auto v = csv::parse_cell(row[cols[k]], path.string() + " " + row[dc]);
      if (!v) fail(ErrorKind::data, path.string() + ": missing factor value on " + row[dc]);
      const double x = *v * scale;
      if (std::abs(x) >= 1.0) {
        fail(ErrorKind::data, path.string() + ": factor " + std::string(kFactorNames[k]) +
                                  " on " + row[dc] +
                                  " is not a weekly decimal; mark percent files with "
                                  "'#units=percent'");
      }
      f.factors(r, static_cast<Eigen::Index>(k)) = x;
    }
    if (rfc) f.rf(r) = csv::parse_cell(row[*rfc], path.string()).value_or(0.0) * scale;
  }
  require_increasing(f.dates, path.string().c_str());
  return f;
}

void write_factor_csv(const std::filesystem::path& path, const FactorPanel& panel) {
  csv::Table t;
  t.comments.push_back("units=decimal");
  t.header.push_back("date");
  for (auto n : kFactorNames) t.header.emplace_back(n);
  t.header.push_back("RF");
  for (std::size_t r = 0; r < panel.dates.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    std::vector<std::string> row{panel.dates[r].iso()};
    for (Eigen::Index k = 0; k < panel.factors.cols(); ++k) {
      row.push_back(csv::format(panel.factors(ri, k)));
    }
    row.push_back(csv::format(panel.rf(ri)));
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

FxSeries read_fx_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const std::size_t dc = t.column("date");
  const std::size_t rc = t.header.size() == 2 ? 1 - dc : t.column("rate");
  FxSeries fx;
  for (const auto& row : t.rows) {
    auto v = csv::parse_cell(row[rc], path.string() + " " + row[dc]);
    if (v) fx[Date::parse(row[dc])] = *v;
  }
  return fx;
}

nlohmann::json to_json(const PanelManifest& m) {
  return {{"source", m.source},         {"anchor", m.anchor}, {"min_coverage", m.min_coverage},
          {"fill_limit", m.fill_limit}, {"weeks", m.weeks},   {"assets", m.assets}};
}

}  // namespace cvarnet::data

#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/date.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cvarnet::data {

inline constexpr std::size_t kFactorCount = 6;
inline constexpr std::array<std::string_view, kFactorCount> kFactorNames{
    "Mkt-RF", "SMB", "HML", "RMW", "CMA", "Mom"};
inline constexpr unsigned kFriday = 5;

/// Row-major T x N grid whose cells may be absent. Absence is explicit so that
/// a zero is always a real observation.
class OptionalGrid {
 public:
  OptionalGrid() = default;
  OptionalGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols) {}

  std::optional<double>& operator()(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }
  const std::optional<double>& operator()(std::size_t r, std::size_t c) const {
    return cells_[r * cols_ + c];
  }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::optional<double>> cells_;
};

struct PricePanel {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  OptionalGrid prices;
  std::vector<std::string> currency_tags;

  /// Checks date ordering, shape and price positivity; throws Error.
  void validate() const;
};

/// Weekly returns before cleaning; cells are missing where either price is.
struct RawReturns {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  OptionalGrid simple;
};

/// Rectangular weekly return panel.
struct ReturnPanel {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  Matrix simple;  // T x N, weekly decimal
  Matrix log;     // ln(1 + simple)
  Vector rf;      // length T, weekly decimal

  std::size_t weeks() const { return dates.size(); }
  std::size_t asset_count() const { return assets.size(); }

  /// Builds a panel from simple returns, deriving the log matrix.
  static ReturnPanel from_simple(std::vector<Date> dates, std::vector<std::string> assets,
                                 Matrix simple, Vector rf);
  /// Rows [0, end).
  ReturnPanel head(std::size_t end) const;
};

struct FactorPanel {
  std::vector<Date> dates;
  Matrix factors;  // T x 6 in kFactorNames order, weekly decimal
  Vector rf;       // risk-free series shipped with the factor file (zeros if absent)

  std::size_t weeks() const { return dates.size(); }
  FactorPanel head(std::size_t end) const;
};

using FxSeries = std::map<Date, double>;

/// Divides every non-base column by the fx rate of its date.
PricePanel convert_to_base(const PricePanel& prices, const FxSeries& fx,
                           const std::string& base = "USD");

/// Last available observation per calendar week ending on `anchor`.
PricePanel resample_weekly(const PricePanel& daily, unsigned anchor = kFriday);

/// Forward-then-backward fill of price gaps no longer than `max_run` rows.
PricePanel fill_price_gaps(const PricePanel& prices, std::size_t max_run = 3);

RawReturns compute_returns(const PricePanel& prices);

/// Drops assets under `min_coverage`, then every week that still has a gap.
ReturnPanel clean_panel(const RawReturns& returns, double min_coverage = 0.90);

/// Restricts both panels to their common dates and attaches the factor file's
/// risk-free series to the returns.
std::pair<ReturnPanel, FactorPanel> align_calendar(const ReturnPanel& returns,
                                                   const FactorPanel& factors);

struct JarqueBera {
  double statistic = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
  bool reject_at_5pct = false;
};

/// Normality diagnostic using population moments; rejects when JB > 5.99.
JarqueBera jarque_bera(std::span<const double> series);

// ---------------------------------------------------------------------------
// CSV ingestion / emission. Dates are ISO-8601 in a `date` column; missing
// cells are empty strings.

/// An optional row whose date cell reads `currency` carries per-asset tags.
PricePanel read_price_csv(const std::filesystem::path& path, const std::string& base = "USD");
void write_price_csv(const std::filesystem::path& path, const PricePanel& panel);

/// Simple returns, one column per asset, plus an optional `RF` column.
ReturnPanel read_return_csv(const std::filesystem::path& path);
void write_return_csv(const std::filesystem::path& path, const ReturnPanel& panel);

/// Factor columns by name (any order) plus optional `RF`. A `#units=percent`
/// comment line marks percent files, which are divided by 100 on load.
FactorPanel read_factor_csv(const std::filesystem::path& path);
void write_factor_csv(const std::filesystem::path& path, const FactorPanel& panel);

FxSeries read_fx_csv(const std::filesystem::path& path);

struct PanelManifest {
  std::string source;
  std::string anchor = "FRI";
  double min_coverage = 0.90;
  std::size_t fill_limit = 3;
  std::size_t weeks = 0;
  std::size_t assets = 0;
};

nlohmann::json to_json(const PanelManifest& m);

}  // namespace cvarnet::data

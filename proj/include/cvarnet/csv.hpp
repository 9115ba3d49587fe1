#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::csv {

/// A parsed CSV file. Lines starting with '#' are collected as comments.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;

  /// Index of a header column; throws Error(data) when absent.
  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
};

Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);

std::vector<std::string> split_line(const std::string& line);

/// Shortest text that round-trips the double exactly.
std::string format(double x);
/// Parses a numeric cell; an empty cell yields nullopt.
std::optional<double> parse_cell(const std::string& cell, const std::string& context);

}  // namespace cvarnet::csv

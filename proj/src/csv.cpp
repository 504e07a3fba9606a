// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/csv.hpp"

#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "moerob/errors.hpp"

namespace moerob {

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw NumericalFailure("format_number: conversion failed");
  return std::string(buf.data(), ptr);
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw ContractError("csv row has " + std::to_string(row.size()) + " fields, header has " +
                        std::to_string(header.size()));
  }
  rows.push_back(std::move(row));
}

namespace {

void write_line(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << fields[i];
  }
  os << '\n';
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv(std::ostream& os, const CsvTable& table) {
  write_line(os, table.header);
  for (const auto& row : table.rows) write_line(os, row);
}

CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw ParseError(1, "csv: missing header");
  table.header = split_line(line);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) throw ParseError(lineno, "csv: wrong field count");
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace moerob

// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace dmrom::io {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

// Header row plus numeric body. Errors name the 1-based data row and column.
CsvTable read_csv(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

nlohmann::json read_json(const std::filesystem::path& path);

// Two-space indented, keys sorted, trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// Matrices serialize as arrays of rows.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);

}  // namespace dmrom::io

#pragma once

#include "dvc/benchgen.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dvc {

/// Plain CSV table; cells are already formatted.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Round-trip formatting (%.17g); NaN is written as "nan".
std::string format_double(double x);

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// One CSV per window (window_000.csv, ...) plus manifest.json.
/// `with_oracle` adds population oracle curves where they exist.
void write_dataset(const std::filesystem::path& dir, const Scenario& s, bool with_oracle = true);
/// Reads back what write_dataset wrote.
Scenario read_dataset(const std::filesystem::path& dir);

}  // namespace dvc

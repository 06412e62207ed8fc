#include "dvc/io.hpp"

#include "dvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dvc {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    return f;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string window_file(std::size_t t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "window_%03zu.csv", t);
    return buf;
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_csv(const fs::path& path, const CsvTable& table) {
    auto f = open_out(path);
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) f << (i ? "," : "") << cells[i];
        f << '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DegenerateDataError("cannot read " + path.string());
    CsvTable t;
    std::string line;
    if (std::getline(f, line)) t.header = split_line(line);
    while (std::getline(f, line))
        if (!line.empty()) t.rows.push_back(split_line(line));
    return t;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
    CsvTable t{header, {}};
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<std::string> row;
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_double(m(r, c)));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path, std::vector<std::string>* header) {
    const CsvTable t = read_csv(path);
    const auto cols = static_cast<Eigen::Index>(t.header.size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), cols);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (static_cast<Eigen::Index>(t.rows[r].size()) != cols)
            throw DegenerateDataError(path.string() + ": ragged row " + std::to_string(r + 2));
        for (Eigen::Index c = 0; c < cols; ++c) {
            try {
                m(static_cast<Eigen::Index>(r), c) = std::stod(t.rows[r][static_cast<std::size_t>(c)]);
            } catch (const std::exception&) {
                throw DegenerateDataError(path.string() + ": non-numeric cell at row " + std::to_string(r + 2));
            }
        }
    }
    if (header) *header = t.header;
    return m;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    auto f = open_out(path);
    f << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_dataset(const fs::path& dir, const Scenario& s, bool with_oracle) {
    fs::create_directories(dir);
    const auto& d = s.data;
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t t = 0; t < d.windows.size(); ++t) {
        write_matrix_csv(dir / window_file(t), d.windows[t], d.var_names);
        files.push_back(window_file(t));
    }
    nlohmann::json m = {{"format", "dvc-dataset/1"},
                        {"scenario", d.scenario},
                        {"seed", d.seed},
                        {"d", d.var_names.size()},
                        {"T", d.windows.size()},
                        {"N_t", d.windows.empty() ? 0 : d.windows.front().rows()},
                        {"var_names", d.var_names},
                        {"split", d.split == SplitMode::Chronological ? "chronological" : "random"},
                        {"train_frac", d.train_frac},
                        {"files", files},
                        {"labels", s.truth.labels},
                        {"schedule", s.truth.schedule},
                        {"oracle", s.truth.oracle}};
    if (with_oracle && s.truth.oracle.empty()) {
        static const std::vector<std::string> supported = {"showcase", "tail_df", "mult_triplet"};
        if (std::find(supported.begin(), supported.end(), d.scenario) != supported.end())
            m["oracle"] = oracle_information(d.scenario, 1000000, d.seed);
    }
    write_json(dir / "manifest.json", m);
}

Scenario read_dataset(const fs::path& dir) {
    const auto m = read_json(dir / "manifest.json");
    Scenario s;
    try {
        s.data.scenario = m.at("scenario").get<std::string>();
        s.data.seed = m.at("seed").get<std::uint64_t>();
        s.data.var_names = m.at("var_names").get<std::vector<std::string>>();
        s.data.split = m.at("split").get<std::string>() == "chronological" ? SplitMode::Chronological
                                                                           : SplitMode::Random;
        s.data.train_frac = m.at("train_frac").get<double>();
        for (const auto& f : m.at("files")) s.data.windows.push_back(read_matrix_csv(dir / f.get<std::string>()));
        s.truth.labels = m.at("labels").get<std::vector<std::string>>();
        s.truth.schedule = m.at("schedule");
        s.truth.oracle = m.value("oracle", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError((dir / "manifest.json").string() + ": " + e.what());
    }
    return s;
}

}  // namespace dvc

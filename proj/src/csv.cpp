#include "kcobra/csv.hpp"

#include <fstream>
#include <string_view>
#include <vector>

#include "kcobra/common.hpp"

namespace kcobra {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw DataError("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.empty()) throw DataError("'" + path + "' is empty");
    return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    while (true) {
        const auto pos = line.find(',');
        if (pos == std::string_view::npos) {
            fields.push_back(line);
            return fields;
        }
        fields.push_back(line.substr(0, pos));
        line.remove_prefix(pos + 1);
    }
}

double parse_field(std::string_view field, const std::string& path,
                   std::size_t line_no) {
    try {
        return parse_double(field);
    } catch (const DataError& err) {
        throw DataError(std::string(err.what()) + " ('" + path + "' line " +
                        std::to_string(line_no + 1) + ")");
    }
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream file(path);
    if (!file) throw DataError("cannot write '" + path + "'");
    return file;
}

void finish_write(std::ofstream& file, const std::string& path) {
    file.flush();
    if (!file) throw DataError("write to '" + path + "' failed");
}

// Numeric body shared by every tabular reader: all rows after the header,
// rectangular, all fields finite numbers.
Eigen::MatrixXd read_numeric_rows(const std::vector<std::string>& lines,
                                  const std::string& path,
                                  std::size_t columns) {
    if (lines.size() < 2) throw DataError("'" + path + "' has no data rows");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(lines.size() - 1),
                        static_cast<Eigen::Index>(columns));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        if (fields.size() != columns) {
            throw DataError("'" + path + "' line " + std::to_string(r + 1) +
                            " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(columns));
        }
        for (std::size_t c = 0; c < columns; ++c) {
            out(static_cast<Eigen::Index>(r - 1),
                static_cast<Eigen::Index>(c)) = parse_field(fields[c], path, r);
        }
    }
    return out;
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& data) {
    if (data.x.rows() != data.y.size()) {
        throw DataError("response length does not match input rows");
    }
    auto file = open_for_write(path);
    file << 'y';
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
        file << ",x" << j + 1;
    }
    file << '\n';
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        file << format_double(data.y[i]);
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
            file << ',' << format_double(data.x(i, j));
        }
        file << '\n';
    }
    finish_write(file, path);
}

Dataset read_dataset_csv(const std::string& path) {
    const auto lines = read_lines(path);
    const auto header = split_fields(lines[0]);
    if (header.size() < 2 || header[0] != "y") {
        throw DataError("'" + path + "' must start with header y,x1,...");
    }
    const Eigen::MatrixXd table =
        read_numeric_rows(lines, path, header.size());
    Dataset data;
    data.y = table.col(0);
    data.x = table.rightCols(table.cols() - 1);
    return data;
}

Dataset read_query_csv(const std::string& path) {
    const auto lines = read_lines(path);
    const auto header = split_fields(lines[0]);
    if (header.empty() || header[0].empty()) {
        throw DataError("'" + path + "' has a malformed header");
    }
    const bool has_y = header[0] == "y";
    if (has_y && header.size() < 2) {
        throw DataError("'" + path + "' has no feature columns");
    }
    const Eigen::MatrixXd table =
        read_numeric_rows(lines, path, header.size());
    Dataset data;
    if (has_y) {
        data.y = table.col(0);
        data.x = table.rightCols(table.cols() - 1);
    } else {
        data.x = table;
    }
    return data;
}

void write_prediction_matrix_csv(const std::string& path,
                                 const PredictionMatrix& pm) {
    validate(pm);
    auto file = open_for_write(path);
    file << 'y';
    for (Eigen::Index m = 0; m < pm.rows.cols(); ++m) {
        file << ',';
        if (pm.learner_names.empty()) {
            file << 'p' << m + 1;
        } else {
            file << pm.learner_names[static_cast<std::size_t>(m)];
        }
    }
    file << '\n';
    for (Eigen::Index i = 0; i < pm.rows.rows(); ++i) {
        file << format_double(pm.responses[i]);
        for (Eigen::Index m = 0; m < pm.rows.cols(); ++m) {
            file << ',' << format_double(pm.rows(i, m));
        }
        file << '\n';
    }
    finish_write(file, path);
}

PredictionMatrix read_prediction_matrix_csv(const std::string& path) {
    const auto lines = read_lines(path);
    const auto header = split_fields(lines[0]);
    if (header.size() < 2 || header[0] != "y") {
        throw DataError("'" + path +
                        "' must start with header y,<learner>,...");
    }
    const Eigen::MatrixXd table =
        read_numeric_rows(lines, path, header.size());
    PredictionMatrix pm;
    pm.responses = table.col(0);
    pm.rows = table.rightCols(table.cols() - 1);
    pm.learner_names.assign(header.begin() + 1, header.end());
    validate(pm);
    return pm;
}

void write_predictions_csv(const std::string& path,
                           const PredictResult& result) {
    if (result.zero_mass.size() !=
        static_cast<std::size_t>(result.predictions.size())) {
        throw DataError("prediction and zero-mass lengths differ");
    }
    auto file = open_for_write(path);
    file << "prediction,zero_mass\n";
    for (Eigen::Index i = 0; i < result.predictions.size(); ++i) {
        file << format_double(result.predictions[i]) << ','
             << (result.zero_mass[static_cast<std::size_t>(i)] ? '1' : '0')
             << '\n';
    }
    finish_write(file, path);
}

void write_grid_trace_csv(const std::string& path, const GridResult& result) {
    auto file = open_for_write(path);
    file << "iter,h,loss\n";
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        file << i << ',' << format_double(result.trace[i].h) << ','
             << format_double(result.trace[i].loss) << '\n';
    }
    finish_write(file, path);
}

void write_gd_trace_csv(const std::string& path, const GDResult& result) {
    auto file = open_for_write(path);
    file << "iter,h,loss,grad\n";
    for (const GDTracePoint& point : result.trace) {
        file << point.iter << ',' << format_double(point.h) << ','
             << format_double(point.loss) << ',' << format_double(point.grad)
             << '\n';
    }
    finish_write(file, path);
}

}  // namespace kcobra

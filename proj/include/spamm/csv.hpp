#pragma once

#include "spamm/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace spamm {

/// A numeric table read from CSV; one column per entry of `names`.
struct Table {
    std::vector<std::string> names;
    Eigen::MatrixXd data;  // rows x columns, NaN for missing cells
    bool had_header = false;
};

struct CsvReadOptions {
    /// When false, a non-numeric cell is an error naming its row and column.
    /// When true it becomes NaN, and columns without any numeric cell are dropped.
    bool lenient = false;
};

/// Comma separated, '.' decimal. The first row is a header when any of its
/// cells is not a number.
Table read_table(const std::filesystem::path& path, const CsvReadOptions& opt = {});
Table parse_table(const std::string& text, const CsvReadOptions& opt = {});

/// Turn a table into torus samples. A column named "weight" becomes the
/// weight vector. Values outside [0,1) are rejected unless `wrap` is set.
WeightedSampleSet table_to_samples(const Table& table, bool wrap);

WeightedSampleSet read_samples_csv(const std::filesystem::path& path, bool wrap);

/// Header x0..x{d-1} (plus "weight" when requested), values printed with
/// 17 significant digits so parsing recovers them exactly.
std::string samples_to_csv(const WeightedSampleSet& samples, bool with_weights = false);

std::string format_double(double v);

}  // namespace spamm

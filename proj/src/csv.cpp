#include "spamm/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace spamm {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '"')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return cells;
}

std::optional<double> to_number(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    const char* b = cell.data();
    const char* e = b + cell.size();
    if (*b == '+') ++b;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) {
        if (cell == "nan" || cell == "NaN" || cell == "NA") return std::numeric_limits<double>::quiet_NaN();
        return std::nullopt;
    }
    return v;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA";
}

}  // namespace

Table parse_table(const std::string& text, const CsvReadOptions& opt) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_no;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (trim(line).empty()) continue;
        rows.push_back(split(line));
        line_no.push_back(ln);
    }
    Table t;
    if (rows.empty()) return t;

    const std::size_t ncol = rows.front().size();
    for (const auto& c : rows.front())
        if (!to_number(c)) t.had_header = true;
    if (t.had_header) {
        t.names = rows.front();
    } else {
        for (std::size_t j = 0; j < ncol; ++j) t.names.push_back("x" + std::to_string(j));
    }
    const std::size_t first = t.had_header ? 1 : 0;
    const std::size_t nrow = rows.size() - first;
    t.data.resize(static_cast<Eigen::Index>(nrow), static_cast<Eigen::Index>(ncol));
    std::vector<bool> numeric_seen(ncol, false);
    for (std::size_t r = 0; r < nrow; ++r) {
        const auto& cells = rows[first + r];
        if (cells.size() != ncol) {
            std::ostringstream msg;
            msg << "line " << line_no[first + r] << ": expected " << ncol << " columns, found " << cells.size();
            throw ContractError(msg.str());
        }
        for (std::size_t j = 0; j < ncol; ++j) {
            const auto v = to_number(cells[j]);
            double x = std::numeric_limits<double>::quiet_NaN();
            if (v) {
                x = *v;
                if (!std::isnan(x)) numeric_seen[j] = true;
            } else if (!opt.lenient && !is_missing(cells[j])) {
                std::ostringstream msg;
                msg << "line " << line_no[first + r] << ", column " << j + 1 << " ('" << t.names[j]
                    << "'): cannot parse '" << cells[j] << "' as a number";
                throw ContractError(msg.str());
            } else if (!opt.lenient) {
                std::ostringstream msg;
                msg << "line " << line_no[first + r] << ", column " << j + 1 << " ('" << t.names[j]
                    << "'): missing value";
                throw ContractError(msg.str());
            }
            t.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = x;
        }
    }
    if (opt.lenient && nrow > 0) {
        std::vector<int> keep;
        for (std::size_t j = 0; j < ncol; ++j)
            if (numeric_seen[j]) keep.push_back(static_cast<int>(j));
        if (keep.size() != ncol) {
            Table k;
            k.had_header = t.had_header;
            k.data.resize(t.data.rows(), static_cast<Eigen::Index>(keep.size()));
            for (std::size_t j = 0; j < keep.size(); ++j) {
                k.names.push_back(t.names[static_cast<std::size_t>(keep[j])]);
                k.data.col(static_cast<Eigen::Index>(j)) = t.data.col(keep[j]);
            }
            return k;
        }
    }
    return t;
}

Table read_table(const std::filesystem::path& path, const CsvReadOptions& opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_table(ss.str(), opt);
    } catch (const ContractError& e) {
        throw ContractError(path.string() + ": " + e.what());
    }
}

WeightedSampleSet table_to_samples(const Table& table, bool wrap) {
    int weight_col = -1;
    for (std::size_t j = 0; j < table.names.size(); ++j)
        if (table.names[j] == "weight") weight_col = static_cast<int>(j);
    const auto rows = table.data.rows();
    const auto d = table.data.cols() - (weight_col >= 0 ? 1 : 0);
    Eigen::MatrixXd pts(d, rows);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index j = 0, i = 0; j < table.data.cols(); ++j) {
            const double v = table.data(r, j);
            if (j == weight_col) {
                w[r] = v;
                continue;
            }
            if (!wrap && !(v >= 0.0 && v < 1.0)) {
                std::ostringstream msg;
                msg << "row " << r + 1 << ", column " << j + 1 << " ('" << table.names[static_cast<std::size_t>(j)]
                    << "'): value " << v << " outside [0,1); pass --wrap to reduce mod 1";
                throw ContractError(msg.str());
            }
            pts(i++, r) = v;
        }
    }
    if (rows == 0) return WeightedSampleSet(pts, w);
    return WeightedSampleSet(std::move(pts), std::move(w), wrap);
}

WeightedSampleSet read_samples_csv(const std::filesystem::path& path, bool wrap) {
    try {
        return table_to_samples(read_table(path), wrap);
    } catch (const ContractError& e) {
        const std::string what = e.what();
        if (what.rfind(path.string(), 0) == 0) throw;
        throw ContractError(path.string() + ": " + what);
    }
}

std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

std::string samples_to_csv(const WeightedSampleSet& samples, bool with_weights) {
    std::string out;
    const auto d = samples.dim();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (i) out += ',';
        out += 'x' + std::to_string(i);
    }
    if (with_weights) out += d ? ",weight" : "weight";
    out += '\n';
    for (Eigen::Index n = 0; n < samples.size(); ++n) {
        for (Eigen::Index i = 0; i < d; ++i) {
            if (i) out += ',';
            out += format_double(samples.points()(i, n));
        }
        if (with_weights) {
            out += ',';
            out += format_double(samples.weights()[n]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace spamm

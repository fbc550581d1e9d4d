#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "hmc.hpp"

/*
 * CSV formats.
 *
 *   dataset      header row; one observation per row; an empty field marks a
 *                missing entry; a column named `label` holds the labels.
 *   chain block  iteration,B[0,0],B[1,0],...   one row per iteration, entries
 *                flattened column-major, 0-based indices.
 *   diagnostics  iteration,log_density,energy_error,accepted
 *
 * Numbers are written with 17 significant digits so that a write/read cycle
 * reproduces doubles exactly.
 */

namespace ghmc {

class CsvError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Splits one line into fields. Double-quoted fields may contain commas,
/// with "" standing for a literal quote.
inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) throw CsvError("unterminated quoted field");
    out.push_back(field);
    return out;
}

inline std::string quote_csv_field(const std::string &f) {
    if (f.find_first_of(",\"") == std::string::npos) return f;
    std::string q = "\"";
    for (char c : f) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    q.push_back('"');
    return q;
}

inline std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string &s, const std::string &where) {
    const std::string t = trim(s);
    if (t.empty()) throw CsvError(where + ": empty numeric field");
    char *end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) throw CsvError(where + ": cannot parse '" + t + "' as a number");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv_table(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path + ": missing header row");
    auto split = [&](const std::string &l, std::size_t n) {
        try {
            return split_csv_line(l);
        } catch (const CsvError &e) {
            throw CsvError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    };
    t.header = split(line, 1);
    for (auto &h : t.header) h = trim(h);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, lineno);
        if (fields.size() != t.header.size())
            throw CsvError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                           " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

class CsvWriter {
  public:
    explicit CsvWriter(const std::string &path) : out_(path), path_(path) {
        if (!out_) throw CsvError("cannot write '" + path + "'");
    }
    void row(const std::vector<std::string> &fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << quote_csv_field(fields[i]);
        }
        out_ << '\n';
        if (!out_) throw CsvError("write failed for '" + path_ + "'");
    }

  private:
    std::ofstream out_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// datasets

struct Dataset {
    std::vector<std::string> columns; ///< feature names, label column excluded
    MaskedDataMatrix data;
};

inline Dataset read_dataset_csv(const std::string &path, DataKind kind) {
    const CsvTable t = read_csv_table(path);
    std::optional<std::size_t> label_col;
    Dataset ds;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (t.header[c] == "label") {
            if (label_col) throw CsvError(path + ": more than one label column");
            label_col = c;
        } else {
            ds.columns.push_back(t.header[c]);
        }
    }
    const auto n = static_cast<Eigen::Index>(t.rows.size());
    const auto d = static_cast<Eigen::Index>(ds.columns.size());
    if (n == 0 || d == 0) throw CsvError(path + ": no data");
    Matrix values = Matrix::Zero(n, d);
    Mask mask = Mask::Constant(n, d, true);
    std::optional<Vector> labels;
    if (label_col) labels = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index j = 0;
        const auto &row = t.rows[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < row.size(); ++c) {
            const std::string where = path + ":" + std::to_string(i + 2);
            if (label_col && c == *label_col) {
                (*labels)(i) = parse_double(row[c], where);
                continue;
            }
            if (trim(row[c]).empty())
                mask(i, j) = false;
            else
                values(i, j) = parse_double(row[c], where);
            ++j;
        }
    }
    try {
        ds.data = MaskedDataMatrix(std::move(values), std::move(mask), kind, std::move(labels));
    } catch (const std::invalid_argument &e) {
        throw CsvError(path + ": " + e.what());
    }
    return ds;
}

inline void write_dataset_csv(const std::string &path, const MaskedDataMatrix &data,
                              std::vector<std::string> columns = {}) {
    if (columns.empty())
        for (Eigen::Index j = 0; j < data.cols(); ++j) columns.push_back("x" + std::to_string(j));
    require(static_cast<Eigen::Index>(columns.size()) == data.cols(), "write_dataset_csv: column name count");
    CsvWriter w(path);
    std::vector<std::string> header = columns;
    if (data.labels) header.push_back("label");
    w.row(header);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        std::vector<std::string> f;
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            f.push_back(data.mask(i, j) ? format_double(data.values(i, j)) : std::string());
        if (data.labels) f.push_back(format_double((*data.labels)(i)));
        w.row(f);
    }
}

inline void write_matrix_csv(const std::string &path, const Matrix &m, std::vector<std::string> columns = {}) {
    if (columns.empty())
        for (Eigen::Index j = 0; j < m.cols(); ++j) columns.push_back("x" + std::to_string(j));
    CsvWriter w(path);
    w.row(columns);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> f;
        for (Eigen::Index j = 0; j < m.cols(); ++j) f.push_back(format_double(m(i, j)));
        w.row(f);
    }
}

inline Matrix read_matrix_csv(const std::string &path) {
    const CsvTable t = read_csv_table(path);
    Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < t.header.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                parse_double(t.rows[i][j], path + ":" + std::to_string(i + 2));
    return m;
}

/// Mean vector and covariance: first data row μ, following d rows Σ.
struct GaussianMoments {
    Vector mean;
    Matrix covariance;
};

inline GaussianMoments read_moments_csv(const std::string &path) {
    const Matrix m = read_matrix_csv(path);
    if (m.rows() != m.cols() + 1) throw CsvError(path + ": expected d+1 rows (mean, then covariance) of d columns");
    return {m.row(0).transpose(), m.bottomRows(m.cols())};
}

inline void write_moments_csv(const std::string &path, const GaussianMoments &g) {
    Matrix m(g.covariance.rows() + 1, g.covariance.cols());
    m.row(0) = g.mean.transpose();
    m.bottomRows(g.covariance.rows()) = g.covariance;
    write_matrix_csv(path, m);
}

// ---------------------------------------------------------------------------
// chains

struct BlockTrace {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::vector<long> iterations;
    std::vector<Matrix> values;
};

inline std::vector<std::string> block_header(const std::string &name, Eigen::Index rows, Eigen::Index cols) {
    std::vector<std::string> h{"iteration"};
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            h.push_back(name + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
    return h;
}

inline void write_block_csv(const std::string &path, const std::string &name, const std::vector<long> &iterations,
                            const std::vector<Matrix> &values) {
    require(!values.empty() && iterations.size() == values.size(), "write_block_csv: need one value per iteration");
    CsvWriter w(path);
    w.row(block_header(name, values.front().rows(), values.front().cols()));
    for (std::size_t t = 0; t < values.size(); ++t) {
        std::vector<std::string> f{std::to_string(iterations[t])};
        const Matrix &m = values[t];
        for (Eigen::Index i = 0; i < m.size(); ++i) f.push_back(format_double(m.data()[i]));
        w.row(f);
    }
}

inline BlockTrace read_block_csv(const std::string &path) {
    const CsvTable t = read_csv_table(path);
    if (t.header.size() < 2 || t.header[0] != "iteration") throw CsvError(path + ": not a chain block file");
    BlockTrace b;
    // dimensions come from the last header entry, name[i,j]
    const std::string &last = t.header.back();
    const auto open = last.rfind('[');
    const auto comma = last.rfind(',');
    if (open == std::string::npos || comma == std::string::npos || last.back() != ']')
        throw CsvError(path + ": malformed column name '" + last + "'");
    b.name = last.substr(0, open);
    try {
        b.rows = std::stol(last.substr(open + 1, comma - open - 1)) + 1;
        b.cols = std::stol(last.substr(comma + 1, last.size() - comma - 2)) + 1;
    } catch (const std::exception &) {
        throw CsvError(path + ": malformed column name '" + last + "'");
    }
    if (static_cast<Eigen::Index>(t.header.size()) != b.rows * b.cols + 1)
        throw CsvError(path + ": column count does not match block dimensions");
    const auto expected = block_header(b.name, b.rows, b.cols);
    if (expected != t.header) throw CsvError(path + ": unexpected column order");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path + ":" + std::to_string(r + 2);
        b.iterations.push_back(static_cast<long>(parse_double(t.rows[r][0], where)));
        Matrix m(b.rows, b.cols);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = parse_double(t.rows[r][static_cast<std::size_t>(i + 1)], where);
        b.values.push_back(std::move(m));
    }
    if (b.values.empty()) throw CsvError(path + ": no samples");
    return b;
}

inline void write_diagnostics_csv(const std::string &path, const std::vector<IterationRecord> &records) {
    CsvWriter w(path);
    w.row({"iteration", "log_density", "energy_error", "accepted"});
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto &r = records[i];
        w.row({std::to_string(i), format_double(r.log_density), format_double(r.energy_error),
               r.accepted ? "1" : "0"});
    }
}

inline std::vector<IterationRecord> read_diagnostics_csv(const std::string &path) {
    const CsvTable t = read_csv_table(path);
    const std::vector<std::string> expected{"iteration", "log_density", "energy_error", "accepted"};
    if (t.header != expected) throw CsvError(path + ": not a diagnostics file");
    std::vector<IterationRecord> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path + ":" + std::to_string(r + 2);
        IterationRecord rec{};
        rec.log_density = parse_double(t.rows[r][1], where);
        rec.energy_error = parse_double(t.rows[r][2], where);
        rec.accepted = parse_double(t.rows[r][3], where) != 0.0;
        rec.accept_prob = std::isfinite(rec.energy_error) ? std::min(1.0, std::exp(rec.energy_error)) : 0.0;
        out.push_back(rec);
    }
    return out;
}

/// Writes <prefix>_<block>.csv for every block and <prefix>_diagnostics.csv.
inline std::vector<std::string> write_chain_csv(const std::string &prefix, const Chain &chain) {
    std::vector<std::string> files;
    if (!chain.samples.empty()) {
        std::vector<long> iters(chain.samples.size());
        for (std::size_t i = 0; i < iters.size(); ++i) iters[i] = static_cast<long>(i);
        for (std::size_t b = 0; b < chain.samples.front().size(); ++b) {
            const std::string &name = chain.samples.front()[b].name;
            std::vector<Matrix> vals;
            vals.reserve(chain.samples.size());
            for (const auto &s : chain.samples) vals.push_back(s[b].value);
            const std::string path = prefix + "_" + name + ".csv";
            write_block_csv(path, name, iters, vals);
            files.push_back(path);
        }
    }
    const std::string diag = prefix + "_diagnostics.csv";
    write_diagnostics_csv(diag, chain.records);
    files.push_back(diag);
    return files;
}

/// Two columns: iteration, distance.
inline void write_trace_csv(const std::string &path, const std::vector<long> &iterations,
                            const std::vector<double> &distances) {
    require(iterations.size() == distances.size(), "write_trace_csv: length mismatch");
    CsvWriter w(path);
    w.row({"iteration", "distance"});
    for (std::size_t i = 0; i < distances.size(); ++i) w.row({std::to_string(iterations[i]), format_double(distances[i])});
}

} // namespace ghmc

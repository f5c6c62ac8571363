#include "ptshadow/matrix_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <vector>

#include "ptshadow/errors.hpp"

namespace ptshadow {
namespace {

constexpr Eigen::Index kMaxTextEntries = 1 << 26; // refuse absurd allocations

void write_pair(std::ostream& os, cplx z)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", z.real(), z.imag());
    os << buf;
}

void write_dims(std::ostream& os, const std::vector<int>& dims)
{
    os << "dims: ";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i > 0)
            os << ',';
        os << dims[i];
    }
    os << '\n';
}

[[noreturn]] void fail(int line_no, const std::string& what)
{
    throw DataError("line " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& text, int line_no)
{
    const char* begin = text.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        fail(line_no, "expected a number, got '" + text + "'");
    if (!std::isfinite(value))
        fail(line_no, "non-finite value '" + text + "'");
    return value;
}

cplx parse_pair(const std::string& token, int line_no)
{
    const auto comma = token.find(',');
    if (comma == std::string::npos || token.find(',', comma + 1) != std::string::npos)
        fail(line_no, "expected re,im pair, got '" + token + "'");
    const double re = parse_double(token.substr(0, comma), line_no);
    const double im = parse_double(token.substr(comma + 1), line_no);
    return {re, im};
}

std::vector<int> parse_dims_header(const std::string& line, int line_no)
{
    std::istringstream iss(line);
    std::string tag;
    iss >> tag;
    if (tag != "dims:")
        fail(line_no, "expected 'dims:' header, got '" + line + "'");
    std::string rest;
    std::getline(iss, rest);

    std::vector<int> dims;
    std::string item;
    std::istringstream items(rest);
    while (std::getline(items, item, ',')) {
        // tolerate surrounding spaces
        std::istringstream one(item);
        long d = 0;
        if (!(one >> d) || d < 1)
            fail(line_no, "bad dimension '" + item + "'");
        std::string trail;
        if (one >> trail)
            fail(line_no, "bad dimension '" + item + "'");
        dims.push_back(static_cast<int>(d));
    }
    if (dims.empty())
        fail(line_no, "empty dims header");
    return dims;
}

Eigen::Index total_dim(const std::vector<int>& dims, int line_no)
{
    Eigen::Index total = 1;
    for (int d : dims) {
        if (total > kMaxTextEntries / d)
            fail(line_no, "dims product too large");
        total *= d;
    }
    return total;
}

struct TextTable {
    std::vector<int> dims;
    std::vector<std::vector<cplx>> rows; // one entry per non-empty data line
    std::vector<int> row_lines;          // source line numbers
};

TextTable read_table(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");

    TextTable table;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        if (!have_header) {
            table.dims = parse_dims_header(line, line_no);
            have_header = true;
            continue;
        }
        std::vector<cplx> row;
        std::istringstream iss(line);
        std::string token;
        while (iss >> token)
            row.push_back(parse_pair(token, line_no));
        table.rows.push_back(std::move(row));
        table.row_lines.push_back(line_no);
    }
    if (!have_header)
        throw DataError("line 1: missing 'dims:' header in '" + path + "'");
    return table;
}

} // namespace

void write_density_matrix_text(std::ostream& os, const DensityMatrix& rho)
{
    write_dims(os, rho.dims);
    const Eigen::Index n = rho.matrix.rows();
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            if (c > 0)
                os << ' ';
            write_pair(os, rho.matrix(r, c));
        }
        os << '\n';
    }
}

void write_pure_state_text(std::ostream& os, const PureState& state)
{
    write_dims(os, std::vector<int>(static_cast<std::size_t>(state.n_qubits), 2));
    for (Eigen::Index i = 0; i < state.amplitudes.size(); ++i) {
        write_pair(os, state.amplitudes(i));
        os << '\n';
    }
}

void save_density_matrix(const std::string& path, const DensityMatrix& rho)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot open '" + path + "' for writing");
    write_density_matrix_text(out, rho);
    out.flush();
    if (!out)
        throw DataError("write to '" + path + "' failed");
}

void save_pure_state(const std::string& path, const PureState& state)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot open '" + path + "' for writing");
    write_pure_state_text(out, state);
    out.flush();
    if (!out)
        throw DataError("write to '" + path + "' failed");
}

DensityMatrix load_density_matrix(const std::string& path)
{
    TextTable table = read_table(path);
    const Eigen::Index dim = total_dim(table.dims, 1);
    if (dim > (1 << 13))
        throw ResourceLimitError("'" + path + "': matrix dimension exceeds dense cap");
    if (static_cast<Eigen::Index>(table.rows.size()) != dim)
        throw DataError("'" + path + "': expected " + std::to_string(dim) + " matrix rows, found " +
                        std::to_string(table.rows.size()));

    DensityMatrix rho;
    rho.dims = table.dims;
    rho.matrix = Mat::Zero(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        const auto& row = table.rows[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != dim)
            fail(table.row_lines[static_cast<std::size_t>(r)],
                 "expected " + std::to_string(dim) + " entries, found " + std::to_string(row.size()));
        for (Eigen::Index c = 0; c < dim; ++c)
            rho.matrix(r, c) = row[static_cast<std::size_t>(c)];
    }
    try {
        check_density_matrix(rho, /*require_psd=*/false);
    } catch (const InvalidArgumentError& e) {
        throw DataError("'" + path + "': " + e.what());
    }
    return rho;
}

PureState load_pure_state(const std::string& path)
{
    TextTable table = read_table(path);
    for (int d : table.dims)
        if (d != 2)
            fail(1, "pure states require all dims = 2");
    if (static_cast<int>(table.dims.size()) > kMaxQubits)
        throw ResourceLimitError("'" + path + "': more than " + std::to_string(kMaxQubits) +
                                 " qubits");
    const Eigen::Index dim = total_dim(table.dims, 1);
    if (static_cast<Eigen::Index>(table.rows.size()) != dim)
        throw DataError("'" + path + "': expected " + std::to_string(dim) +
                        " amplitudes, found " + std::to_string(table.rows.size()));

    Vec amplitudes(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        if (row.size() != 1)
            fail(table.row_lines[static_cast<std::size_t>(i)], "expected one re,im pair per row");
        amplitudes(i) = row[0];
    }
    try {
        return state_from_amplitudes(std::move(amplitudes));
    } catch (const InvalidArgumentError& e) {
        throw DataError("'" + path + "': " + e.what());
    }
}

} // namespace ptshadow

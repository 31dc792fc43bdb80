#include "branchsim/csvio.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace branchsim {

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return {buf, p};
}

void write_csv(const std::filesystem::path& path, const CsvTable& t) {
    std::ofstream out(path, std::ios::binary); // binary keeps LF on every platform
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (i) out << ',';
        out << t.header[i];
    }
    out << '\n';
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size())
            throw std::runtime_error("csv row width mismatch in " + t.name);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

} // namespace branchsim

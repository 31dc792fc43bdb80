#pragma once
#include <filesystem>
#include <string>
#include <vector>

namespace branchsim {

struct CsvTable {
    std::string name; // file stem, ".csv" appended by the writer
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// Shortest round-trip decimal form, dot separator, locale independent.
std::string format_double(double v);

// Comma separator, mandatory header row, LF line endings.
void write_csv(const std::filesystem::path& path, const CsvTable& t);

} // namespace branchsim

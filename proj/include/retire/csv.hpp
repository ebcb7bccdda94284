#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace retire {

/// Fixed 10-significant-digit rendering used in every artifact.
std::string format_number(double v);

/// CSV file with a block of `# ` comment lines ahead of the column header.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& comments,
              const std::vector<std::string>& columns);

    void row(const std::vector<double>& values);
    void row(const std::vector<std::string>& cells);
    void comment(const std::string& text);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_ = 0;
};

}  // namespace retire

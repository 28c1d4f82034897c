#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace acceptance {

std::string num(double v, int digits = 3);

/// Runs `ktrace args...` in process; throws with the diagnostic on a nonzero exit.
/// Returns the command's log output.
std::string cli(std::vector<std::string> args);

/// A tab-separated table as written by the CLI.
struct Tsv {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
    const std::string& text(std::size_t row, const std::string& name) const;
    /// NaN for empty, "nan" or "null" cells.
    double number(std::size_t row, const std::string& name) const;
    /// First row whose `key` column equals `value`; throws if absent.
    std::size_t find(const std::string& key, const std::string& value) const;
};

Tsv read_tsv(const std::filesystem::path& path);

}  // namespace acceptance

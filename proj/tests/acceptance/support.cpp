#include "support.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ktrace/commands.hpp"

namespace acceptance {

std::string num(double v, int digits) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

std::string cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ktrace");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream log, err;
    const int code = ktrace::run(int(argv.size()), argv.data(), log, err);
    if (code != 0) throw std::runtime_error("ktrace " + args[1] + " failed: " + err.str());
    return log.str();
}

std::size_t Tsv::column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (columns[c] == name) return c;
    throw std::out_of_range("no column '" + name + "'");
}

const std::string& Tsv::text(std::size_t row, const std::string& name) const {
    return rows.at(row).at(column(name));
}

double Tsv::number(std::size_t row, const std::string& name) const {
    const std::string& t = text(row, name);
    if (t.empty() || t == "nan" || t == "null") return std::nan("");
    return std::stod(t);
}

std::size_t Tsv::find(const std::string& key, const std::string& value) const {
    const std::size_t c = column(key);
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].at(c) == value) return r;
    throw std::out_of_range("no row with " + key + " = " + value);
}

Tsv read_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cells.push_back(cell);
        if (!line.empty() && line.back() == '\t') cells.emplace_back();
        return cells;
    };
    Tsv t;
    std::string line;
    if (std::getline(in, line)) t.columns = split(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

}  // namespace acceptance

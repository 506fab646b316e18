#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rcq/common.hpp"

namespace rcq {

// Shortest-round-trip-ish formatting; fixed precision keeps CSV bodies
// byte-identical across reruns with the same seed.
inline std::string fmt_g(double x, int digits = 12) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
    return std::string(buf);
}

class CsvBuilder {
public:
    explicit CsvBuilder(std::string header) { body_ = std::move(header) + "\n"; }

    void raw_row(const std::string& row) { body_ += row + "\n"; }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) body_ += ',';
            body_ += fields[i];
        }
        body_ += '\n';
    }

    const std::string& str() const { return body_; }

private:
    std::string body_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw numeric_error("cannot open for writing: " + path.string());
    out << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw numeric_error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace rcq

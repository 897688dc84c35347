// Copyright 2026, lbmpcc contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lbmpcc/io.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lbmpcc::io {

std::string format_double(double v) {
    char buf[64];
    // %.17g always round-trips; prefer the shorter %.15g when it does too.
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& text, const std::string& context) {
    const std::string t = trim(text);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || (end && *end != '\0') || errno == ERANGE)
        throw std::runtime_error(context + ": cannot parse number '" + text + "'");
    return v;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::pair<std::string, std::string>> load_key_values(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 'name = value', got '" + line + "'");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

std::vector<std::vector<double>> load_csv(const std::string& path,
                                          std::vector<std::string>* header) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    bool first_data_line = true;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::vector<double> row;
        bool numeric = true;
        for (const auto& cell : split(line, ',')) {
            errno = 0;
            char* end = nullptr;
            const std::string c = trim(cell);
            const double v = std::strtod(c.c_str(), &end);
            if (end == c.c_str() || (end && *end != '\0')) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (first_data_line) {
                if (header) {
                    for (auto& cell : split(line, ',')) header->push_back(trim(cell));
                }
                first_data_line = false;
                continue;
            }
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed numeric row '" + line + "'");
        }
        first_data_line = false;
        rows.push_back(std::move(row));
    }
    return rows;
}

void create_directories(const std::string& path) {
    std::filesystem::create_directories(path);
}

}  // namespace lbmpcc::io

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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lbmpcc::io {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

double parse_double(const std::string& text, const std::string& context);

/// Writes via a temporary file in the same directory plus rename, so a
/// crash mid-write never leaves a truncated file behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// Ordered (key, value) pairs from a flat "name = value" file.
/// Blank lines and '#' comments are skipped.
std::vector<std::pair<std::string, std::string>> load_key_values(const std::string& path);

/// Numeric CSV rows. '#' comments are skipped; a non-numeric first row is
/// treated as a header and dropped.
std::vector<std::vector<double>> load_csv(const std::string& path,
                                          std::vector<std::string>* header = nullptr);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

void create_directories(const std::string& path);

}  // namespace lbmpcc::io

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace acq::io {

// Shortest decimal text that parses back to the same double.
std::string FormatDouble(double value);
double ParseDouble(std::string_view text);
std::int64_t ParseInt(std::string_view text);

// Whitespace-separated fields; runs of spaces or tabs count as one separator.
std::vector<std::string_view> SplitFields(std::string_view line);
std::vector<std::string_view> SplitLines(std::string_view text);

std::string ReadFile(const std::string& path);
std::vector<std::uint8_t> ReadBinaryFile(const std::string& path);
void WriteFile(const std::string& path, std::string_view contents);
void WriteBinaryFile(const std::string& path, const std::vector<std::uint8_t>& bytes);

std::uint64_t Fnv1a64(std::string_view bytes);

}  // namespace acq::io

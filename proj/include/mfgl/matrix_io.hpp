#pragma once

#include "mfgl/core_types.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mfgl::io {

enum class MatrixFormat { Csv, Binary };

inline constexpr std::array<char, 4> kBinaryMagic{'M', 'F', 'G', 'L'};
inline constexpr std::uint8_t kBinaryVersion = 0x01;

inline MatrixFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".bin" || ext == ".mfgl") ? MatrixFormat::Binary : MatrixFormat::Csv;
}

inline std::string_view extension(MatrixFormat format) {
  return format == MatrixFormat::Binary ? ".bin" : ".csv";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw Error(ErrorCode::FileFormat,
                "cannot parse '" + std::string(field) + "' on line " + std::to_string(line));
  return value;
}

inline void append_double(std::string& out, double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  out.append(buf.data(), ptr);
}

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error(ErrorCode::FileFormat, "truncated binary matrix");
  return value;
}

}  // namespace detail

/// Parses CSV text: one point per row, comma separated, '.' decimal.
inline Matrix parse_csv(std::string_view text, bool has_header = false) {
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::size_t line_no = 0;
  bool skipped_header = !has_header;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    Index count = 0;
    while (true) {
      const auto comma = line.find(',');
      values.push_back(detail::parse_double(line.substr(0, comma), line_no));
      ++count;
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    if (cols < 0) cols = count;
    if (count != cols)
      throw Error(ErrorCode::FileFormat, "ragged CSV row on line " + std::to_string(line_no));
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::FileFormat, "CSV contains no data rows");
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return out;
}

/// Shortest round-trip representation of every entry.
inline std::string format_csv(const Matrix& m, const std::vector<std::string>& header = {}) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 12 + 16);
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) out += ',';
      out += header[j];
    }
    out += '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      detail::append_double(out, m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileOpen, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileOpen, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::FileOpen, "write failed for " + path.string());
}

inline void write_binary(std::ostream& os, const Matrix& m) {
  os.write(kBinaryMagic.data(), kBinaryMagic.size());
  os.put(static_cast<char>(kBinaryVersion));
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) detail::put_le<double>(os, m(i, j));
}

inline Matrix read_binary(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kBinaryMagic) throw Error(ErrorCode::FileFormat, "bad magic bytes");
  const int version = is.get();
  if (version != kBinaryVersion)
    throw Error(ErrorCode::FileFormat, "unsupported binary version " + std::to_string(version));
  const auto rows = detail::get_le<std::uint64_t>(is);
  const auto cols = detail::get_le<std::uint64_t>(is);
  if (rows > (1ull << 40) || cols > (1ull << 40) || (cols && rows > (1ull << 40) / cols))
    throw Error(ErrorCode::FileFormat, "implausible binary matrix shape");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = detail::get_le<double>(is);
  return m;
}

inline Matrix read_matrix(const std::filesystem::path& path, MatrixFormat format,
                          bool csv_header = false) {
  if (format == MatrixFormat::Csv) return parse_csv(read_text(path), csv_header);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileOpen, "cannot open " + path.string());
  return read_binary(in);
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  return read_matrix(path, format_from_path(path));
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format,
                         const std::vector<std::string>& csv_header = {}) {
  if (format == MatrixFormat::Csv) {
    write_text(path, format_csv(m, csv_header));
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileOpen, "cannot write " + path.string());
  write_binary(out, m);
  if (!out) throw Error(ErrorCode::FileOpen, "write failed for " + path.string());
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  write_matrix(path, m, format_from_path(path));
}

/// One identifier per non-empty line.
inline std::vector<std::string> read_ids(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<std::string> ids;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto eol = rest.find('\n');
    const auto line = detail::trim(rest.substr(0, eol));
    if (!line.empty()) ids.emplace_back(line);
    rest = eol == std::string_view::npos ? std::string_view{} : rest.substr(eol + 1);
  }
  return ids;
}

}  // namespace mfgl::io

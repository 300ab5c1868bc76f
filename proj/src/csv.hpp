#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "satinfra/raster.hpp"

namespace satinfra::csv {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// Shortest representation that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw raster::IoError("bad number '" + s + "' in " + context);
  return v;
}

inline std::optional<double> parse_optional(const std::string& s, const std::string& context) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, context);
}

// Data rows of a CSV file with `header`, skipping blank and `#` lines.
// Every row must have as many fields as the header.
inline std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path,
                                                        const std::string& header) {
  std::ifstream in(path);
  if (!in) throw raster::IoError("cannot read " + path.string());
  const std::size_t width = split(header).size();
  std::vector<std::vector<std::string>> rows;
  bool seen_header = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) {
        const auto want = split(header), got = split(line);
        std::string msg = path.string() + ": schema mismatch";
        for (std::size_t i = 0; i < std::max(want.size(), got.size()); ++i) {
          const std::string w = i < want.size() ? want[i] : "<none>";
          const std::string g = i < got.size() ? got[i] : "<none>";
          if (w != g) {
            msg += " at column " + std::to_string(i + 1) + ": expected '" + w + "', found '" + g + "'";
            break;
          }
        }
        throw raster::IoError(msg);
      }
      seen_header = true;
      continue;
    }
    auto f = split(line);
    if (f.size() != width)
      throw raster::IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields");
    rows.push_back(std::move(f));
  }
  if (!seen_header) throw raster::IoError(path.string() + ": missing header");
  return rows;
}

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::string& preamble, const std::string& header)
      : path_(path), out_(path) {
    if (!out_) throw raster::IoError("cannot write " + path.string());
    if (!preamble.empty()) out_ << preamble << '\n';
    out_ << header << '\n';
  }
  template <class... Fields>
  void row(const Fields&... fields) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << fields), ...);
    out_ << '\n';
  }
  std::ostream& stream() { return out_; }
  ~Writer() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw raster::IoError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace satinfra::csv

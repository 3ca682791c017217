#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "entlab/errors.hpp"

// Plot-ready CSV output: one header row, '\n' line endings, and numbers
// rendered with std::to_chars (shortest round-trip form, locale-independent,
// always a '.' decimal point) so reruns produce byte-identical files.

namespace entlab::csv {

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::int64_t v) { return std::to_string(v); }
inline std::string format_number(int v) { return std::to_string(v); }
inline std::string format_number(std::uint64_t v) { return std::to_string(v); }

class Writer {
 public:
  explicit Writer(std::string header) : header_(std::move(header)) {}

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::string line;
    bool first = true;
    ((line += (first ? (first = false, std::string()) : std::string(",")) +
              format_number(cells)),
     ...);
    rows_.push_back(std::move(line));
  }

  void raw_row(std::string line) { rows_.push_back(std::move(line)); }

  std::string str() const {
    std::string out = header_;
    out += '\n';
    for (const std::string& r : rows_) {
      out += r;
      out += '\n';
    }
    return out;
  }

  void write(const std::filesystem::path& path) const {
    write_file_atomically(path, str());
  }

  // Write via a temp file + rename so readers never observe a torn file.
  static void write_file_atomically(const std::filesystem::path& path,
                                    const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw ConfigError("cannot open for writing: " + tmp.string());
      }
      out << content;
      if (!out.flush()) {
        throw ConfigError("write failed: " + tmp.string());
      }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      throw ConfigError("cannot move " + tmp.string() + " to " +
                        path.string() + ": " + ec.message());
    }
  }

 private:
  std::string header_;
  std::vector<std::string> rows_;
};

}  // namespace entlab::csv

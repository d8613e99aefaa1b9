#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tubewave {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  using Cell = std::variant<double, long, std::string>;

  CsvWriter(const std::string& path, const std::vector<std::string>& header) : os_(path) {
    if (!os_) throw std::runtime_error("cannot open " + path + " for writing");
    width_ = header.size();
    write_cells(header);
  }

  void comment(const std::string& line) { os_ << "# " << line << '\n'; }

  void row(const std::vector<double>& values) {
    check(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << format_double(values[i]);
    os_ << '\n';
  }

  void row(std::initializer_list<Cell> cells) {
    check(cells.size());
    std::size_t i = 0;
    for (const auto& c : cells) {
      if (i++) os_ << ',';
      if (auto d = std::get_if<double>(&c)) os_ << format_double(*d);
      else if (auto l = std::get_if<long>(&c)) os_ << *l;
      else os_ << quote(std::get<std::string>(c));
    }
    os_ << '\n';
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  void write_cells(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << quote(cells[i]);
    os_ << '\n';
  }
  void check(std::size_t n) const {
    if (n != width_) throw std::logic_error("csv row width does not match the header");
  }

  std::ofstream os_;
  std::size_t width_ = 0;
};

}  // namespace tubewave

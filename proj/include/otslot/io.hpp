#pragma once

#include <charconv>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "otslot/error.hpp"
#include "otslot/sinkhorn.hpp"
#include "otslot/tensor.hpp"

// Plain text matrices: a first line "m n", then m lines of n reals. A cost
// file may carry two further lines with the row and column marginals.

namespace otslot {

namespace detail {

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t begin = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > begin) out.push_back({line.substr(begin, i - begin), begin + 1});
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-blank line, or nullopt at end of input.
  std::optional<std::vector<Token>> next() {
    while (std::getline(in_, buffer_)) {
      ++line_;
      std::vector<Token> tokens = tokenize(buffer_);
      if (!tokens.empty()) return tokens;
    }
    return std::nullopt;
  }

  std::size_t line() const { return line_; }
  std::size_t end_column() const { return buffer_.size() + 1; }

 private:
  std::istream& in_;
  std::string buffer_;
  std::size_t line_ = 0;
};

inline double parse_real(const Token& tok, std::size_t line) {
  double value = 0.0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("expected a real number, found '" + std::string(tok.text) + "'", line, tok.column);
  }
  return value;
}

inline std::size_t parse_count(const Token& tok, std::size_t line) {
  std::size_t value = 0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || value == 0) {
    throw ParseError("expected a positive integer, found '" + std::string(tok.text) + "'", line, tok.column);
  }
  return value;
}

inline std::vector<double> read_row(LineReader& reader, std::size_t expected, const char* what) {
  auto tokens = reader.next();
  if (!tokens) throw ParseError(std::string("missing ") + what, reader.line() + 1, 1);
  if (tokens->size() != expected) {
    const std::size_t column = tokens->size() > expected ? (*tokens)[expected].column : reader.end_column();
    throw ParseError(std::string(what) + " has " + std::to_string(tokens->size()) + " values, expected " +
                         std::to_string(expected),
                     reader.line(), column);
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const Token& t : *tokens) out.push_back(parse_real(t, reader.line()));
  return out;
}

inline Tensor read_matrix_body(LineReader& reader) {
  auto header = reader.next();
  if (!header) throw ParseError("empty input, expected 'm n'", 1, 1);
  if (header->size() != 2) throw ParseError("header must be 'm n'", reader.line(), 1);
  const std::size_t line = reader.line();
  const std::size_t m = parse_count((*header)[0], line);
  const std::size_t n = parse_count((*header)[1], line);
  std::vector<double> data;
  data.reserve(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row = read_row(reader, n, ("matrix row " + std::to_string(i + 1)).c_str());
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor::matrix(m, n, std::move(data));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace detail

struct TransportProblem {
  Tensor cost;
  /// Absent when the file has no marginal lines.
  std::optional<Marginals> marginals;
};

inline TransportProblem read_problem(std::istream& in) {
  detail::LineReader reader(in);
  TransportProblem p;
  p.cost = detail::read_matrix_body(reader);
  const std::size_t m = p.cost.rows();
  const std::size_t n = p.cost.cols();
  auto a_line = reader.next();
  if (!a_line) return p;
  if (a_line->size() != m) {
    throw ParseError("row marginals have " + std::to_string(a_line->size()) + " values, expected " + std::to_string(m),
                     reader.line(), 1);
  }
  std::vector<double> a;
  for (const auto& t : *a_line) a.push_back(detail::parse_real(t, reader.line()));
  std::vector<double> b = detail::read_row(reader, n, "column marginals");
  if (auto extra = reader.next()) throw ParseError("unexpected trailing content", reader.line(), (*extra)[0].column);
  p.marginals = Marginals{Tensor::vector(std::move(a)), Tensor::vector(std::move(b))};
  return p;
}

inline TransportProblem read_problem_file(const std::string& path) {
  std::ifstream in = detail::open_input(path);
  return read_problem(in);
}

inline Tensor read_matrix(std::istream& in) {
  detail::LineReader reader(in);
  Tensor out = detail::read_matrix_body(reader);
  if (auto extra = reader.next()) throw ParseError("unexpected trailing content", reader.line(), (*extra)[0].column);
  return out;
}

inline Tensor read_matrix_file(const std::string& path) {
  std::ifstream in = detail::open_input(path);
  return read_matrix(in);
}

/// Shortest decimal form that reads back to the same double.
inline std::string format_real(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline void write_matrix(std::ostream& out, const Tensor& m) {
  m.require_rank(2);
  out << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_real(m(i, j));
    out << '\n';
  }
}

inline void write_matrix_file(const std::string& path, const Tensor& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_matrix(out, m);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace otslot

#include "lab/tensor_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

#include "lab/errors.hpp"

namespace lab {

namespace {

std::string next_line(std::istream& in, const char* what) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return line;
  }
  throw ParseError(std::string("unexpected end of input while reading ") + what);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("invalid number '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_tensor(std::ostream& out, const Matrix& m) {
  out << "TENSOR v1 " << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << format_double(row[c]);
    }
    out << '\n';
  }
}

Matrix read_tensor(std::istream& in) {
  std::istringstream header(next_line(in, "TENSOR header"));
  std::string tag, version;
  std::size_t rows = 0, cols = 0;
  if (!(header >> tag >> version >> rows >> cols) || tag != "TENSOR" || version != "v1") {
    throw ParseError("expected 'TENSOR v1 <rows> <cols>'");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::istringstream line(next_line(in, "TENSOR row"));
    std::string token;
    std::size_t c = 0;
    while (line >> token) {
      if (c >= cols) throw ParseError("TENSOR row " + std::to_string(r) + " has too many values");
      m(r, c++) = parse_double(token);
    }
    if (c != cols) throw ParseError("TENSOR row " + std::to_string(r) + " has too few values");
  }
  return m;
}

void write_ragged(std::ostream& out, const RaggedBatch& batch) {
  out << "RAGGED v1 " << to_string(batch.modality()) << ' ' << batch.size() << ' ' << batch.dim()
      << '\n';
  for (const auto& s : batch) write_tensor(out, s);
}

RaggedBatch read_ragged(std::istream& in) {
  std::istringstream header(next_line(in, "RAGGED header"));
  std::string tag, version, modality;
  std::size_t n = 0, d = 0;
  if (!(header >> tag >> version >> modality >> n >> d) || tag != "RAGGED" || version != "v1") {
    throw ParseError("expected 'RAGGED v1 <modality> <N> <D>'");
  }
  std::vector<Matrix> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples.push_back(read_tensor(in));
    if (samples.back().cols() != d) throw ParseError("RAGGED sample width does not match header");
  }
  return RaggedBatch(modality_from_string(modality), std::move(samples));
}

void write_params(std::ostream& out, const NamedTensors& params) {
  out << "PARAMS v1 " << params.size() << '\n';
  for (const auto& [name, m] : params) {
    out << "NAME " << name << '\n';
    write_tensor(out, m);
  }
}

NamedTensors read_params(std::istream& in) {
  std::istringstream header(next_line(in, "PARAMS header"));
  std::string tag, version;
  std::size_t count = 0;
  if (!(header >> tag >> version >> count) || tag != "PARAMS" || version != "v1") {
    throw ParseError("expected 'PARAMS v1 <count>'");
  }
  NamedTensors params;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream name_line(next_line(in, "NAME line"));
    std::string name_tag, name;
    if (!(name_line >> name_tag >> name) || name_tag != "NAME") throw ParseError("expected 'NAME <name>'");
    if (!params.emplace(name, read_tensor(in)).second) throw ParseError("duplicate tensor '" + name + "'");
  }
  return params;
}

}  // namespace lab

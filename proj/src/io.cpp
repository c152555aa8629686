#include "mll/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mll::io {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'L', '1'};

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::filesystem::path& path, std::size_t line, std::string_view tok) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(path, "line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out = open_out(path, std::ios::out);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) fail(path, "write failed");
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in);
  std::vector<double> data;
  std::size_t rows = 0, cols = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto toks = split_csv(line);
    if (rows == 0) {
      cols = toks.size();
    } else if (toks.size() != cols) {
      fail(path, "line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                     " columns, got " + std::to_string(toks.size()));
    }
    for (const auto& t : toks) data.push_back(parse_double(path, lineno, t));
    ++rows;
  }
  if (rows == 0) fail(path, "no data rows");
  Matrix m(rows, cols);
  m.data() = std::move(data);
  return m;
}

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out.write(kMagic, 4);
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) fail(path, "write failed");
}

Matrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    fail(path, "missing MLL1 magic");
  }
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (!in) fail(path, "truncated header");
  if (rows == 0 || cols == 0 || rows > (1ull << 32) || cols > (1ull << 32) ||
      rows * cols > (1ull << 34)) {
    fail(path, "implausible shape " + std::to_string(rows) + " x " + std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (double& v : m.data()) {
    v = std::bit_cast<double>(get_u64(in));
    if (!in) fail(path, "truncated data");
  }
  return m;
}

Matrix read_matrix_auto(const std::filesystem::path& path) {
  {
    std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    if (in && std::string_view(magic, 4) == std::string_view(kMagic, 4)) {
      return read_matrix_binary(path);
    }
  }
  return read_matrix_csv(path);
}

void write_labels(const std::filesystem::path& path, const LabelVector& y) {
  std::ofstream out = open_out(path, std::ios::out);
  for (int label : y.labels) out << label << '\n';
  if (!out) fail(path, "write failed");
}

LabelVector read_labels(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in);
  std::vector<int> labels;
  int max_label = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      fail(path, "line " + std::to_string(lineno) + ": bad label '" + line + "'");
    }
    if (v < 0) fail(path, "line " + std::to_string(lineno) + ": negative label");
    labels.push_back(v);
    max_label = std::max(max_label, v);
  }
  if (labels.empty()) fail(path, "no labels");
  return LabelVector(std::move(labels), max_label + 1);
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& t) {
  std::ofstream out = open_out(path, std::ios::out);
  out << "epoch,loss_total,loss_tight,loss_contrast,companion_loss,recall_at_1\n";
  for (const TraceRow& r : t.rows) {
    out << r.epoch << ',' << format_double(r.loss_total) << ',' << format_double(r.loss_tight)
        << ',' << format_double(r.loss_contrast) << ',';
    if (r.companion) out << format_double(*r.companion);
    out << ',' << format_double(r.recall_at_1) << '\n';
  }
  if (!out) fail(path, "write failed");
}

TrainTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in);
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty trace");
  strip_cr(line);
  if (line != "epoch,loss_total,loss_tight,loss_contrast,companion_loss,recall_at_1") {
    fail(path, "unexpected trace header '" + line + "'");
  }
  TrainTrace t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto toks = split_csv(line);
    if (toks.size() != 6) {
      fail(path, "line " + std::to_string(lineno) + ": expected 6 columns");
    }
    TraceRow r;
    r.epoch = static_cast<std::size_t>(parse_double(path, lineno, toks[0]));
    r.loss_total = parse_double(path, lineno, toks[1]);
    r.loss_tight = parse_double(path, lineno, toks[2]);
    r.loss_contrast = parse_double(path, lineno, toks[3]);
    if (!toks[4].empty()) r.companion = parse_double(path, lineno, toks[4]);
    r.recall_at_1 = parse_double(path, lineno, toks[5]);
    t.rows.push_back(r);
  }
  t.validate();
  return t;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out << text;
  if (!out) fail(path, "write failed");
}

}  // namespace mll::io

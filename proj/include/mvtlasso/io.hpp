#pragma once

#include "mvtlasso/core.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mvtlasso::io {

// Plain-text formats:
//   expression CSV  first column `gene_id`, header row of sample ids, one row per gene
//   edge TSV        header `gene_i  gene_j  weight`, gene_i < gene_j lexicographically
// Doubles are written with 17 significant digits so reading back is exact.

/// Raised when a file cannot be opened or written.
struct IoError : Error {
  using Error::Error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  out.close();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

inline std::string to_csv(const ExpressionView& v) {
  std::string out = "gene_id";
  for (const auto& s : v.sample_ids()) out += "," + s;
  out += "\n";
  for (Index i = 0; i < v.genes(); ++i) {
    out += v.gene_ids()[static_cast<std::size_t>(i)];
    for (Index j = 0; j < v.samples(); ++j) out += "," + format_double(v.data()(i, j));
    out += "\n";
  }
  return out;
}

inline ExpressionView parse_csv(const std::string& text, const std::string& view_id, const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ValidationError(source + ": empty file");
  const auto header = split(lines[0], ',');
  if (header.empty() || header[0] != "gene_id") throw ValidationError(source + ":1: first header cell must be 'gene_id'");
  std::vector<std::string> samples(header.begin() + 1, header.end());
  std::vector<std::string> genes;
  std::vector<std::vector<double>> rows;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto cells = split(lines[ln], ',');
    const std::string where = source + ":" + std::to_string(ln + 1);
    if (cells.size() != header.size())
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    genes.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c], where));
    rows.push_back(std::move(row));
  }
  Matrix data(static_cast<Index>(rows.size()), static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < samples.size(); ++j) data(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  std::map<std::string, int> seen;
  for (const auto& g : genes)
    if (seen[g]++) throw ValidationError(source + ": duplicate gene_id '" + g + "'");
  return ExpressionView(view_id, std::move(genes), std::move(samples), std::move(data));
}

inline ExpressionView load_csv(const std::string& path, const std::string& view_id) {
  return parse_csv(read_file(path), view_id, path);
}

/// Square matrix with gene ids on both axes.
inline std::string matrix_csv(const Matrix& m, const std::vector<std::string>& ids) {
  std::string out = "gene_id";
  for (const auto& g : ids) out += "," + g;
  out += "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    out += ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out += "," + format_double(m(i, j));
    out += "\n";
  }
  return out;
}

/// Reorders the genes of every view to the first view's order. The gene sets
/// must agree exactly.
inline std::vector<ExpressionView> align_genes(std::vector<ExpressionView> views) {
  if (views.empty()) throw ValidationError("no input views");
  const auto& ref = views.front().gene_ids();
  std::map<std::string, Index> pos;
  for (std::size_t i = 0; i < ref.size(); ++i) pos[ref[i]] = static_cast<Index>(i);
  for (auto& v : views) {
    if (v.gene_ids() == ref) continue;
    if (v.gene_ids().size() != ref.size())
      throw ShapeError("view '" + v.view_id() + "' has " + std::to_string(v.gene_ids().size()) + " genes, expected " +
                       std::to_string(ref.size()));
    Matrix data(v.genes(), v.samples());
    for (std::size_t i = 0; i < v.gene_ids().size(); ++i) {
      const auto it = pos.find(v.gene_ids()[i]);
      if (it == pos.end())
        throw ShapeError("gene '" + v.gene_ids()[i] + "' of view '" + v.view_id() + "' is missing from view '" +
                         views.front().view_id() + "'");
      data.row(it->second) = v.data().row(static_cast<Index>(i));
    }
    v = ExpressionView(v.view_id(), ref, v.sample_ids(), std::move(data));
  }
  return views;
}

struct NamedEdge {
  std::string a;
  std::string b;
  double weight = 0.0;
  friend bool operator<(const NamedEdge& x, const NamedEdge& y) { return x.a < y.a || (x.a == y.a && x.b < y.b); }
};

inline std::vector<NamedEdge> name_edges(const EdgeSet& edges, const Matrix& weights, const std::vector<std::string>& ids) {
  std::vector<NamedEdge> out;
  for (const auto& e : edges) {
    std::string a = ids[static_cast<std::size_t>(e.i)];
    std::string b = ids[static_cast<std::size_t>(e.j)];
    if (b < a) std::swap(a, b);
    out.push_back({a, b, weights(e.i, e.j)});
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string edges_tsv(const std::vector<NamedEdge>& edges) {
  std::string out = "gene_i\tgene_j\tweight\n";
  for (const auto& e : edges) out += e.a + "\t" + e.b + "\t" + format_double(e.weight) + "\n";
  return out;
}

inline std::vector<NamedEdge> parse_edges(const std::string& text, const std::string& source) {
  std::vector<NamedEdge> out;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    if (ln == 0 && lines[ln].rfind("gene_i\t", 0) == 0) continue;
    const std::string where = source + ":" + std::to_string(ln + 1);
    const auto cells = split(lines[ln], '\t');
    if (cells.size() != 2 && cells.size() != 3)
      throw ValidationError(where + ": expected 'gene_i<TAB>gene_j[<TAB>weight]'");
    if (cells[0].empty() || cells[1].empty()) throw ValidationError(where + ": empty gene id");
    if (cells[0] == cells[1]) throw ValidationError(where + ": self-loop");
    NamedEdge e{cells[0], cells[1], cells.size() == 3 ? parse_double(cells[2], where) : 1.0};
    if (e.b < e.a) std::swap(e.a, e.b);
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end());
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i - 1] < out[i])) throw ValidationError(source + ": duplicate edge " + out[i].a + "-" + out[i].b);
  return out;
}

inline std::vector<NamedEdge> load_edges(const std::string& path) { return parse_edges(read_file(path), path); }

}  // namespace mvtlasso::io

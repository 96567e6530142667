#pragma once

// Text container of named matrices plus string metadata.
//
//   prereq-checkpoint 1
//   meta <key> <value>
//   matrix <name> <rows> <cols>
//   <row 0 values, space separated>
//   ...
//
// Values are written in shortest round-trip form, so save/load is lossless.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prereq/error.hpp"
#include "prereq/io.hpp"
#include "prereq/tensor.hpp"

namespace prereq {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> matrices;

  const Matrix& matrix(const std::string& name) const {
    for (const auto& [n, m] : matrices)
      if (n == name) return m;
    throw ValidationError("checkpoint: no matrix named '" + name + "'");
  }
  bool has_matrix(const std::string& name) const {
    for (const auto& entry : matrices)
      if (entry.first == name) return true;
    return false;
  }
  const std::string& meta_value(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("checkpoint: missing meta '" + key + "'");
    return it->second;
  }
};

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out = "prereq-checkpoint 1\n";
  for (const auto& [k, v] : ck.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ValidationError("checkpoint: meta key/value contains whitespace: " + k);
    out += "meta " + k + " " + v + "\n";
  }
  for (const auto& [name, m] : ck.matrices) {
    if (name.find_first_of(" \t\n") != std::string::npos)
      throw ValidationError("checkpoint: matrix name contains whitespace: " + name);
    out += "matrix " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) out += ' ';
        out += io::format_double(m(i, j));
      }
      out += '\n';
    }
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& source = "<checkpoint>") {
  Checkpoint ck;
  const auto lines = io::split(text, '\n');
  std::size_t ln = 0;
  auto fail = [&](const std::string& what) { throw ParseError(source, ln + 1, what); };
  if (lines.empty() || io::trim(lines[0]) != "prereq-checkpoint 1") fail("missing 'prereq-checkpoint 1' header");
  for (ln = 1; ln < lines.size(); ++ln) {
    const auto line = io::trim(lines[ln]);
    if (line.empty()) continue;
    const auto f = io::split_ws(line);
    if (f[0] == "meta") {
      if (f.size() < 3) fail("meta line needs key and value");
      const auto key_end = line.find(f[1], 4) + f[1].size();
      ck.meta[std::string(f[1])] = std::string(io::trim(line.substr(key_end)));
    } else if (f[0] == "matrix") {
      long long r = 0, c = 0;
      if (f.size() != 4 || !io::parse_long(f[2], r) || !io::parse_long(f[3], c) || r < 0 || c < 0)
        fail("malformed matrix header");
      Matrix m(r, c);
      for (long long i = 0; i < r; ++i) {
        ++ln;
        if (ln >= lines.size()) fail("truncated matrix '" + std::string(f[1]) + "'");
        const auto vals = io::split_ws(lines[ln]);
        if (static_cast<long long>(vals.size()) != c) fail("expected " + std::to_string(c) + " values");
        for (long long j = 0; j < c; ++j)
          if (!io::parse_double(vals[static_cast<std::size_t>(j)], m(i, j))) fail("bad number");
      }
      ck.matrices.emplace_back(std::string(f[1]), std::move(m));
    } else {
      fail("unknown record '" + std::string(f[0]) + "'");
    }
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path), path.string());
}

}  // namespace prereq

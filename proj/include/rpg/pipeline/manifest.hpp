#pragma once

// Dataset manifests: CSV rows of (relative image path, identity index,
// sample index, split tag, global identity key). Paths are relative to the
// directory holding the manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/eval/metrics.hpp"

namespace rpg::pipeline {

struct ManifestRow {
  std::string path;
  std::size_t identity = 0;
  std::size_t sample = 0;
  std::string split;
  std::uint64_t key = 0;
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

inline constexpr const char* kManifestHeader = "path,identity,sample,split,key";

inline std::string format_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : rows)
    out += r.path + "," + std::to_string(r.identity) + "," + std::to_string(r.sample) + "," + r.split + "," +
           std::to_string(r.key) + "\n";
  return out;
}

/// Rejects duplicate paths and identity indices that are not contiguous from 0 within a split.
inline void validate_manifest(const std::vector<ManifestRow>& rows) {
  std::set<std::string> paths;
  std::map<std::string, std::set<std::size_t>> ids;
  for (const auto& r : rows) {
    if (!paths.insert(r.path).second) throw ConfigError("manifest: duplicate path " + r.path);
    ids[r.split].insert(r.identity);
  }
  for (const auto& [split, set] : ids)
    if (*set.rbegin() + 1 != set.size())
      throw ConfigError("manifest: identity indices of split '" + split + "' are not contiguous from 0");
}

inline std::vector<ManifestRow> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) throw ConfigError("manifest: bad or missing header");
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string item;
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 5) throw ConfigError("manifest line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      rows.push_back({f[0], std::stoull(f[1]), std::stoull(f[2]), f[3], std::stoull(f[4])});
    } catch (const std::exception&) {
      throw ConfigError("manifest line " + std::to_string(lineno) + ": bad number");
    }
  }
  validate_manifest(rows);
  return rows;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("missing input " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  validate_manifest(rows);
  eval::write_text(path, format_manifest(rows));
}

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path));
}

}  // namespace rpg::pipeline

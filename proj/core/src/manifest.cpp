#include "hypernet/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include "hypernet/errors.hpp"

namespace hypernet {

namespace fs = std::filesystem;

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'input<TAB>target'");
    }
    ManifestEntry e;
    fs::path in = line.substr(0, tab);
    fs::path tgt = line.substr(tab + 1);
    if (in.is_relative()) in = base / in;
    if (tgt.is_relative()) tgt = base / tgt;
    e.input_path = in.string();
    e.target_path = tgt.string();
    if (!fs::exists(e.input_path)) {
      throw DataError("manifest references missing file: " + e.input_path);
    }
    if (!fs::exists(e.target_path)) {
      throw DataError("manifest references missing file: " + e.target_path);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError(IoError::Code::OpenFailed, "cannot write manifest: " + path);
  for (const auto& e : entries) {
    os << e.input_path << '\t' << e.target_path << '\n';
  }
  if (!os) throw IoError(IoError::Code::WriteFailed, "manifest write failed: " + path);
}

}  // namespace hypernet

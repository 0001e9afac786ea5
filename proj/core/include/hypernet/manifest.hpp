#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hypernet {

enum class TaskKind { Classification, Segmentation, Regression };

struct ManifestEntry {
  std::string input_path;
  std::string target_path;
};

/// Reads a dataset manifest: UTF-8 lines of `input<TAB>target`. Relative
/// paths resolve against the manifest's directory. Every referenced file must
/// exist, otherwise DataError.
std::vector<ManifestEntry> load_manifest(const std::string& path);

/// Writes entries exactly as given, one `input<TAB>target` line each.
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace hypernet

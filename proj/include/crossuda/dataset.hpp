#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossuda/volume.hpp"

namespace crossuda {

enum class Domain { source, target };

const char* domain_name(Domain d);
Domain domain_from_name(const std::string& name);

/// In-memory case record: a volume, its domain tag, and (if labeled) a mask.
struct Case {
  std::string id;
  Domain domain = Domain::source;
  Volume volume;
  std::optional<LabelMask> label;
};

/// One manifest row. Paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  Domain domain = Domain::source;
  std::string volume_path;
  std::optional<std::string> label_path;
};

struct Manifest {
  std::vector<ManifestEntry> cases;

  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

/// Reads the MVOL files behind a manifest entry.
Case load_case(const ManifestEntry& entry, const std::filesystem::path& manifest_dir);

std::vector<Case> load_cases(const Manifest& manifest,
                             const std::filesystem::path& manifest_dir);

}  // namespace crossuda

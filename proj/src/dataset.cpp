#include "crossuda/dataset.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "crossuda/mvol.hpp"

namespace crossuda {

using nlohmann::json;

const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain domain_from_name(const std::string& name) {
  if (name == "source") return Domain::source;
  if (name == "target") return Domain::target;
  fail(ErrorKind::format, "unknown domain: " + name);
}

void Manifest::save(const std::filesystem::path& path) const {
  json j;
  j["cases"] = json::array();
  for (const auto& e : cases) {
    json je;
    je["id"] = e.id;
    je["domain"] = domain_name(e.domain);
    je["volume_path"] = e.volume_path;
    je["label_path"] = e.label_path ? json(*e.label_path) : json(nullptr);
    j["cases"].push_back(je);
  }
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
  require(out.good(), ErrorKind::io, "manifest write failed: " + path.string());
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open manifest: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "malformed manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  for (const auto& je : j.at("cases")) {
    ManifestEntry e;
    e.id = je.at("id").get<std::string>();
    e.domain = domain_from_name(je.at("domain").get<std::string>());
    e.volume_path = je.at("volume_path").get<std::string>();
    if (!je.at("label_path").is_null())
      e.label_path = je.at("label_path").get<std::string>();
    m.cases.push_back(std::move(e));
  }
  return m;
}

Case load_case(const ManifestEntry& entry, const std::filesystem::path& manifest_dir) {
  Case c;
  c.id = entry.id;
  c.domain = entry.domain;
  c.volume = read_mvol_volume(manifest_dir / entry.volume_path);
  if (entry.label_path) c.label = read_mvol_mask(manifest_dir / *entry.label_path);
  return c;
}

std::vector<Case> load_cases(const Manifest& manifest,
                             const std::filesystem::path& manifest_dir) {
  std::vector<Case> cases;
  cases.reserve(manifest.cases.size());
  for (const auto& e : manifest.cases) cases.push_back(load_case(e, manifest_dir));
  return cases;
}

}  // namespace crossuda

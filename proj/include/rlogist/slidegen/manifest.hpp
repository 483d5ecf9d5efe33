#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/io.hpp"
#include "rlogist/slidegen/bundle.hpp"

namespace rlogist::slidegen {

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::uint8_t label = 0;
  std::size_t n_regions = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::string config_digest;
  std::vector<ManifestEntry> slides;
  std::filesystem::path base_dir;  // not serialized

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
  std::size_t positives() const {
    std::size_t n = 0;
    for (const auto& s : slides) n += s.label;
    return n;
  }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json slides = nlohmann::json::array();
  for (const auto& s : m.slides) {
    slides.push_back({{"id", s.id}, {"path", s.path}, {"label", s.label}, {"n_regions", s.n_regions}});
  }
  return {{"version", m.version}, {"config_digest", m.config_digest}, {"slides", slides}};
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  io::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

// Parses the manifest only; no slide files are touched.
inline DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                                      const std::string& context) {
  DatasetManifest m;
  m.base_dir = base_dir;
  try {
    const auto j = nlohmann::json::parse(text);
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw FormatError(FormatErrorKind::unsupported_version,
                        context + ": unsupported manifest version " + std::to_string(m.version));
    }
    m.config_digest = j.value("config_digest", std::string{});
    for (const auto& s : j.at("slides")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.path = s.at("path").get<std::string>();
      const int label = s.at("label").get<int>();
      if (label != 0 && label != 1) {
        throw FormatError(FormatErrorKind::invalid_value, context + ": slide '" + e.id + "' has label " + std::to_string(label));
      }
      e.label = static_cast<std::uint8_t>(label);
      e.n_regions = s.at("n_regions").get<std::size_t>();
      m.slides.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(FormatErrorKind::invalid_value, context + ": malformed manifest: " + ex.what());
  }
  std::set<std::string> ids;
  for (const auto& s : m.slides) {
    if (!ids.insert(s.id).second) throw FormatError(FormatErrorKind::invalid_value, context + ": duplicate slide id '" + s.id + "'");
  }
  return m;
}

// Loads a manifest and checks every referenced bundle: existence, format, label, region
// count, and a single feature dimension across the set.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto m = parse_manifest(io::read_file(path), path.parent_path(), "manifest '" + path.string() + "'");
  std::size_t dim = 0;
  for (const auto& s : m.slides) {
    const auto file = m.resolve(s);
    if (!std::filesystem::exists(file)) {
      throw FormatError(FormatErrorKind::io, "manifest '" + path.string() + "': missing bundle " + file.string());
    }
    const auto b = read_bundle(file, s.id);
    if (b.label != s.label || b.n_regions != s.n_regions) {
      throw FormatError(FormatErrorKind::dimension_mismatch,
                        "manifest '" + path.string() + "': bundle '" + s.id + "' disagrees with its manifest entry");
    }
    if (dim == 0) dim = b.dim;
    if (b.dim != dim) {
      throw FormatError(FormatErrorKind::dimension_mismatch, "manifest '" + path.string() + "': bundle '" + s.id +
                                                                 "' has d=" + std::to_string(b.dim) + ", expected " +
                                                                 std::to_string(dim));
    }
  }
  return m;
}

inline std::vector<SlideBundle> load_bundles(const DatasetManifest& m) {
  if (m.slides.empty()) throw NoDataError("manifest lists no slides");
  std::vector<SlideBundle> out;
  out.reserve(m.slides.size());
  for (const auto& s : m.slides) out.push_back(read_bundle(m.resolve(s), s.id));
  return out;
}

}  // namespace rlogist::slidegen

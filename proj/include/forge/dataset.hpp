#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "forge/image.hpp"

namespace forge {

// Material vocabulary entry; "live" is the bona-fide label, anything else is
// a presentation-attack material.
std::string normalize_material(const std::string& name);

struct ImpressionRecord {
  std::string finger_id;
  int impression_id = 0;
  std::string material;  // lowercase, non-empty
  bool is_live = false;
  std::string split;  // "train" or "test"
  std::string image_path;  // relative to the dataset root
  int width = 0;
  int height = 0;
  int dpi = 500;

  bool operator==(const ImpressionRecord&) const = default;
};

// Immutable after load; safe to share across parallel readers.
struct Dataset {
  std::filesystem::path root;
  std::string provenance;  // e.g. "real" or "synthetic"; set by the producer
  std::vector<ImpressionRecord> records;

  std::filesystem::path image_file(const ImpressionRecord& r) const {
    return root / r.image_path;
  }
  Image load_image(const ImpressionRecord& r) const {
    return read_png_gray(image_file(r));
  }
};

inline constexpr const char* kManifestHeader =
    "finger_id,impression_id,material,is_live,split,image_path,width,height,dpi";

// Reads `manifest` (CSV, fixed header above) and validates every row: files
// must exist and decode, (finger_id, impression_id, material) must be unique,
// is_live must agree with the material label.
Dataset load_dataset(const std::filesystem::path& root,
                     const std::filesystem::path& manifest);

// Re-encodes every image as 8-bit grayscale PNG under out_root (same relative
// paths) and writes out_root/manifest.csv. Returns the manifest path.
// load_dataset(export_dataset(d)) reproduces d.records exactly.
std::filesystem::path export_dataset(const Dataset& dataset,
                                     const std::filesystem::path& out_root);

// Directory-convention adapter: maps relative paths onto manifest fields via
// a pattern such as "{split}/{material}/{finger}_{impression}.png". Unmatched
// files are skipped; `pattern` must reference {finger} and {impression}.
Dataset import_directory(const std::filesystem::path& root, const std::string& pattern,
                         const std::string& provenance = "real");

// Writes records to a manifest CSV without touching the image files.
void write_manifest(const Dataset& dataset, const std::filesystem::path& manifest);

std::vector<ImpressionRecord> filter_material(const std::vector<ImpressionRecord>& in,
                                              const std::string& material);
std::vector<ImpressionRecord> filter_split(const std::vector<ImpressionRecord>& in,
                                           const std::string& split);

}  // namespace forge

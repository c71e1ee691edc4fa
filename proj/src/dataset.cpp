#include "forge/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "forge/errors.hpp"

namespace forge {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, int line_no, const char* field) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail("ManifestParseError", "line " + std::to_string(line_no) + ": bad " +
                                   std::string(field) + " '" + s + "'");
  }
}

bool parse_bool(const std::string& s, int line_no) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail("ManifestParseError",
       "line " + std::to_string(line_no) + ": bad is_live '" + s + "'");
}

void validate_record(const ImpressionRecord& r, int line_no) {
  const std::string at = "line " + std::to_string(line_no) + ": ";
  require(!r.finger_id.empty(), "ManifestParseError", at + "empty finger_id");
  require(r.impression_id >= 0, "ManifestParseError", at + "negative impression_id");
  require(!r.material.empty(), "ManifestParseError", at + "empty material");
  require(r.material == normalize_material(r.material), "ManifestParseError",
          at + "material not lowercase-normalized: " + r.material);
  require(r.is_live == (r.material == "live"), "ManifestParseError",
          at + "is_live must hold exactly when material is 'live'");
  require(r.split == "train" || r.split == "test", "ManifestParseError",
          at + "split must be train or test, got '" + r.split + "'");
  require(!r.image_path.empty(), "ManifestParseError", at + "empty image_path");
}

}  // namespace

std::string normalize_material(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char ch : name) {
    if (std::isspace(static_cast<unsigned char>(ch)))
      out.push_back('_');
    else
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& root,
                     const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail("ManifestParseError", "cannot open manifest " + manifest.string());

  std::string line;
  if (!std::getline(in, line)) fail("ManifestParseError", "empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kManifestHeader, "ManifestParseError",
          "unexpected header '" + line + "'");

  Dataset ds;
  ds.root = root;
  ds.provenance = "real";

  std::set<std::tuple<std::string, int, std::string>> keys;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cols = split_csv(line);
    if (cols.size() != 9)
      fail("ManifestParseError", "line " + std::to_string(line_no) + ": expected 9 columns, got " +
                                     std::to_string(cols.size()));
    ImpressionRecord r;
    r.finger_id = cols[0];
    r.impression_id = parse_int(cols[1], line_no, "impression_id");
    r.material = cols[2];
    r.is_live = parse_bool(cols[3], line_no);
    r.split = cols[4];
    r.image_path = cols[5];
    r.width = parse_int(cols[6], line_no, "width");
    r.height = parse_int(cols[7], line_no, "height");
    r.dpi = parse_int(cols[8], line_no, "dpi");
    validate_record(r, line_no);

    const auto key = std::make_tuple(r.finger_id, r.impression_id, r.material);
    if (!keys.insert(key).second)
      fail("DuplicateRecord", "duplicate (finger_id, impression_id, material) = (" +
                                  r.finger_id + ", " + std::to_string(r.impression_id) +
                                  ", " + r.material + ")");

    const auto file = root / r.image_path;
    if (!std::filesystem::exists(file))
      fail("MissingImage", "record (" + r.finger_id + ", " +
                               std::to_string(r.impression_id) + ", " + r.material +
                               "): missing file " + file.string());
    PngInfo info;
    read_png_gray(file, &info);  // throws MissingImage if not decodable as gray PNG
    require(info.width == r.width && info.height == r.height, "ManifestParseError",
            "line " + std::to_string(line_no) + ": manifest size " +
                std::to_string(r.width) + "x" + std::to_string(r.height) +
                " does not match file " + std::to_string(info.width) + "x" +
                std::to_string(info.height));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void write_manifest(const Dataset& dataset, const std::filesystem::path& manifest) {
  if (!manifest.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(manifest.parent_path(), ec);
  }
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) fail("ExportError", "cannot write manifest " + manifest.string());
  out << kManifestHeader << "\n";
  for (const auto& r : dataset.records) {
    require(r.image_path.find(',') == std::string::npos, "ExportError",
            "image_path contains a comma: " + r.image_path);
    out << r.finger_id << ',' << r.impression_id << ',' << r.material << ','
        << (r.is_live ? "true" : "false") << ',' << r.split << ',' << r.image_path
        << ',' << r.width << ',' << r.height << ',' << r.dpi << "\n";
  }
  if (!out) fail("ExportError", "short write to " + manifest.string());
}

std::filesystem::path export_dataset(const Dataset& dataset,
                                     const std::filesystem::path& out_root) {
  std::error_code ec;
  std::filesystem::create_directories(out_root, ec);
  if (!std::filesystem::is_directory(out_root))
    fail("ExportError", "cannot create " + out_root.string());

  for (const auto& r : dataset.records) {
    const Image img = dataset.load_image(r);
    write_png_gray(out_root / r.image_path, img, r.dpi);
  }
  const auto manifest = out_root / "manifest.csv";
  Dataset copy = dataset;
  copy.root = out_root;
  write_manifest(copy, manifest);
  return manifest;
}

namespace {

// Splits "prefix{name}suffix..." into literal / placeholder pieces.
struct PatternPiece {
  std::string literal;
  std::string placeholder;  // empty for trailing literal
};

std::vector<PatternPiece> compile_pattern(const std::string& pattern) {
  std::vector<PatternPiece> pieces;
  std::string lit;
  for (size_t i = 0; i < pattern.size();) {
    if (pattern[i] == '{') {
      const size_t end = pattern.find('}', i);
      require(end != std::string::npos, "ManifestParseError",
              "unterminated placeholder in pattern " + pattern);
      pieces.push_back({lit, pattern.substr(i + 1, end - i - 1)});
      lit.clear();
      i = end + 1;
    } else {
      lit.push_back(pattern[i]);
      ++i;
    }
  }
  pieces.push_back({lit, ""});
  return pieces;
}

bool match_pattern(const std::vector<PatternPiece>& pieces, const std::string& text,
                   std::vector<std::pair<std::string, std::string>>& values) {
  size_t pos = 0;
  values.clear();
  for (size_t i = 0; i < pieces.size(); ++i) {
    const auto& piece = pieces[i];
    if (text.compare(pos, piece.literal.size(), piece.literal) != 0) return false;
    pos += piece.literal.size();
    if (piece.placeholder.empty()) return i + 1 == pieces.size() && pos == text.size();
    // Placeholder value runs until the next literal (greedy to the first match).
    const std::string& next = pieces[i + 1].literal;
    size_t end;
    if (next.empty() && pieces[i + 1].placeholder.empty()) {
      end = text.size();
    } else {
      end = text.find(next, pos);
      if (end == std::string::npos || end == pos) return false;
    }
    values.emplace_back(piece.placeholder, text.substr(pos, end - pos));
    pos = end;
  }
  return pos == text.size();
}

}  // namespace

Dataset import_directory(const std::filesystem::path& root, const std::string& pattern,
                         const std::string& provenance) {
  const auto pieces = compile_pattern(pattern);
  bool has_finger = false, has_impression = false;
  for (const auto& p : pieces) {
    if (p.placeholder == "finger") has_finger = true;
    if (p.placeholder == "impression") has_impression = true;
  }
  require(has_finger && has_impression, "ManifestParseError",
          "adapter pattern must contain {finger} and {impression}: " + pattern);

  Dataset ds;
  ds.root = root;
  ds.provenance = provenance;

  std::vector<std::string> rel_paths;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    rel_paths.push_back(entry.path().lexically_relative(root).generic_string());
  }
  std::sort(rel_paths.begin(), rel_paths.end());

  std::vector<std::pair<std::string, std::string>> values;
  for (const auto& rel : rel_paths) {
    if (!match_pattern(pieces, rel, values)) continue;
    ImpressionRecord r;
    r.split = "train";
    r.material = "live";
    for (const auto& [key, val] : values) {
      if (key == "finger") r.finger_id = val;
      else if (key == "impression") r.impression_id = parse_int(val, 0, "impression");
      else if (key == "material") r.material = normalize_material(val);
      else if (key == "split") r.split = val;
      else fail("ManifestParseError", "unknown placeholder {" + key + "}");
    }
    r.is_live = (r.material == "live");
    r.image_path = rel;
    PngInfo info;
    read_png_gray(root / rel, &info);
    r.width = info.width;
    r.height = info.height;
    r.dpi = info.dpi > 0 ? info.dpi : 500;
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::vector<ImpressionRecord> filter_material(const std::vector<ImpressionRecord>& in,
                                              const std::string& material) {
  std::vector<ImpressionRecord> out;
  for (const auto& r : in)
    if (r.material == material) out.push_back(r);
  return out;
}

std::vector<ImpressionRecord> filter_split(const std::vector<ImpressionRecord>& in,
                                           const std::string& split) {
  std::vector<ImpressionRecord> out;
  for (const auto& r : in)
    if (r.split == split) out.push_back(r);
  return out;
}

}  // namespace forge

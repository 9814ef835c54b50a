#include "geomreid/manifest.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace geomreid {

namespace {

using json = nlohmann::ordered_json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string frame_file_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.ply", k);
  return buf;
}

}  // namespace

DatasetManifest load_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    raise(Errc::parse_error, std::string("manifest is not valid JSON: ") + e.what());
  }

  try {
    if (!doc.is_object() || !doc.contains("v") || !doc.contains("mode_tag") || !doc.contains("entries"))
      raise(Errc::parse_error, "manifest must have fields v, mode_tag, entries");
    if (doc["v"].get<int>() != 1)
      raise(Errc::parse_error, "unsupported manifest schema version");

    DatasetManifest m;
    m.mode_tag = doc["mode_tag"].get<std::string>();
    std::set<std::string> seen;
    for (const auto& e : doc["entries"]) {
      ManifestEntry entry;
      entry.sequence_id = e.at("sequence_id").get<std::string>();
      entry.identity_id = e.at("identity_id").get<std::string>();
      entry.surgery_id = e.at("surgery_id").get<std::string>();
      entry.file_path = e.at("file_path").get<std::string>();
      entry.fps = e.at("fps").get<double>();
      if (entry.identity_id.empty() || entry.surgery_id.empty())
        raise(Errc::parse_error, "empty identity_id or surgery_id in entry '" + entry.sequence_id + "'");
      if (!(entry.fps > 0)) raise(Errc::parse_error, "fps must be positive");
      if (!seen.insert(entry.sequence_id).second)
        raise(Errc::duplicate_sequence_id, "duplicate sequence_id '" + entry.sequence_id + "'");
      const std::filesystem::path p = base_dir / entry.file_path;
      if (!std::filesystem::exists(p))
        raise(Errc::missing_file, "entry '" + entry.sequence_id + "' points to missing path '" +
                                      p.string() + "'");
      m.entries.push_back(std::move(entry));
    }
    return m;
  } catch (const json::exception& e) {
    raise(Errc::parse_error, std::string("bad manifest field: ") + e.what());
  }
}

DatasetManifest load_manifest_file(const std::filesystem::path& path) {
  return load_manifest(read_text_file(path), path.parent_path());
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json doc;
  doc["v"] = 1;
  doc["mode_tag"] = manifest.mode_tag;
  doc["entries"] = json::array();
  for (const ManifestEntry& e : manifest.entries) {
    doc["entries"].push_back({{"sequence_id", e.sequence_id},
                              {"identity_id", e.identity_id},
                              {"surgery_id", e.surgery_id},
                              {"file_path", e.file_path},
                              {"fps", e.fps}});
  }
  return doc.dump(2) + "\n";
}

PersonSequence load_sequence(const ManifestEntry& entry, const std::filesystem::path& base_dir,
                             const Eigen::Matrix3d* axis_remap) {
  const std::filesystem::path dir = base_dir / entry.file_path;
  PersonSequence seq;
  seq.sequence_id = entry.sequence_id;
  seq.identity_id = entry.identity_id;
  seq.surgery_id = entry.surgery_id;
  seq.fps = entry.fps;
  for (int k = 0;; ++k) {
    const std::filesystem::path f = dir / frame_file_name(k);
    if (!std::filesystem::exists(f)) break;
    PersonFrame frame = load_ply_file(f);
    if (axis_remap) frame.points = (frame.points * axis_remap->transpose()).eval();
    frame.timestamp_s = static_cast<double>(k) / entry.fps;
    seq.frames.push_back(std::move(frame));
  }
  if (seq.frames.empty())
    raise(Errc::missing_file, "no frame_000000.ply under '" + dir.string() + "'");
  validate(seq);
  return seq;
}

std::vector<PersonSequence> load_dataset(const DatasetManifest& manifest,
                                         const std::filesystem::path& base_dir, int jobs,
                                         const Eigen::Matrix3d* axis_remap) {
  std::vector<PersonSequence> out(manifest.entries.size());
  parallel_for(manifest.entries.size(), jobs,
               [&](std::size_t i) { out[i] = load_sequence(manifest.entries[i], base_dir, axis_remap); });
  return out;
}

DatasetManifest save_dataset(const std::vector<PersonSequence>& sequences, const std::string& mode_tag,
                             const std::filesystem::path& out_dir, PlyFormat format, int jobs) {
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.mode_tag = mode_tag;
  for (const PersonSequence& seq : sequences) {
    ManifestEntry e;
    e.sequence_id = seq.sequence_id;
    e.identity_id = seq.identity_id;
    e.surgery_id = seq.surgery_id;
    e.file_path = "seqs/" + seq.sequence_id;
    e.fps = seq.fps;
    manifest.entries.push_back(std::move(e));
  }
  parallel_for(sequences.size(), jobs, [&](std::size_t i) {
    const PersonSequence& seq = sequences[i];
    const std::filesystem::path dir = out_dir / manifest.entries[i].file_path;
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < seq.frames.size(); ++k)
      save_ply_file(seq.frames[k], dir / frame_file_name(static_cast<int>(k)), format);
  });
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write manifest.json");
  out << manifest_to_json(manifest);
  return manifest;
}

Eigen::Matrix3d parse_axis_remap(const std::string& spec) {
  Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
  std::istringstream ss(spec);
  std::string tok;
  int row = 0;
  bool used[3] = {false, false, false};
  while (std::getline(ss, tok, ',')) {
    if (row >= 3) raise(Errc::invalid_arg, "axis remap needs exactly 3 components");
    double sign = 1.0;
    std::size_t i = 0;
    while (i < tok.size() && (tok[i] == ' ' || tok[i] == '\t')) ++i;
    if (i < tok.size() && (tok[i] == '-' || tok[i] == '+')) {
      if (tok[i] == '-') sign = -1.0;
      ++i;
    }
    if (i >= tok.size()) raise(Errc::invalid_arg, "bad axis token '" + tok + "'");
    int axis;
    switch (tok[i]) {
      case 'x': axis = 0; break;
      case 'y': axis = 1; break;
      case 'z': axis = 2; break;
      default: raise(Errc::invalid_arg, "bad axis token '" + tok + "'");
    }
    if (used[axis]) raise(Errc::invalid_arg, "axis '" + std::string(1, tok[i]) + "' used twice");
    used[axis] = true;
    r(row, axis) = sign;
    ++row;
  }
  if (row != 3) raise(Errc::invalid_arg, "axis remap needs exactly 3 components");
  return r;
}

}  // namespace geomreid

#ifndef GEOMREID_MANIFEST_HPP
#define GEOMREID_MANIFEST_HPP

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

#include "geomreid/ply.hpp"
#include "geomreid/types.hpp"

namespace geomreid {

/// Parse and validate a manifest JSON document:
///   {"v":1,"mode_tag":str,"entries":[{"sequence_id":str,"identity_id":str,
///    "surgery_id":str,"file_path":str,"fps":number}]}
/// file_path entries are resolved against base_dir and must exist.
DatasetManifest load_manifest(const std::string& text, const std::filesystem::path& base_dir);

DatasetManifest load_manifest_file(const std::filesystem::path& path);

std::string manifest_to_json(const DatasetManifest& manifest);

/// Load one sequence: reads file_path/frame_%06d.ply for k = 0.. until the
/// first missing file; timestamps are set to k / fps.
PersonSequence load_sequence(const ManifestEntry& entry, const std::filesystem::path& base_dir,
                             const Eigen::Matrix3d* axis_remap = nullptr);

std::vector<PersonSequence> load_dataset(const DatasetManifest& manifest,
                                         const std::filesystem::path& base_dir, int jobs = 1,
                                         const Eigen::Matrix3d* axis_remap = nullptr);

/// Write sequences as per-frame PLY directories plus manifest.json under out_dir.
/// Returns the manifest actually written (file_path relative to out_dir).
DatasetManifest save_dataset(const std::vector<PersonSequence>& sequences, const std::string& mode_tag,
                             const std::filesystem::path& out_dir, PlyFormat format, int jobs = 1);

/// Parse a signed axis permutation such as "x,-z,y": output axis i takes the
/// named (possibly negated) input axis. Returns the remap matrix R so that
/// remapped point = R * point.
Eigen::Matrix3d parse_axis_remap(const std::string& spec);

}  // namespace geomreid

#endif  // GEOMREID_MANIFEST_HPP

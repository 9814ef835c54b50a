#ifndef GEOMREID_PLY_HPP
#define GEOMREID_PLY_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include "geomreid/types.hpp"

namespace geomreid {

enum class PlyFormat { ascii, binary_le };

/// Parse a PLY byte buffer into a PersonFrame.
///
/// Supported subset: format "ascii 1.0" or "binary_little_endian 1.0", a single
/// vertex element with 32-bit float x/y/z, optional 8-bit red/green/blue
/// (mapped to [0,1] by /255) and an optional integer part_label. timestamp_s
/// is left at 0 and set later from the manifest.
PersonFrame parse_ply(std::string_view bytes);

/// Serialize a frame; parse_ply(write_ply(f)) reproduces f exactly for frames
/// whose coordinates are float32-representable (all parsed frames are).
/// ASCII coordinates are printed with 9 significant digits, which round-trips
/// 32-bit floats exactly.
std::string write_ply(const PersonFrame& frame, PlyFormat format);

PersonFrame load_ply_file(const std::filesystem::path& path);
void save_ply_file(const PersonFrame& frame, const std::filesystem::path& path, PlyFormat format);

}  // namespace geomreid

#endif  // GEOMREID_PLY_HPP

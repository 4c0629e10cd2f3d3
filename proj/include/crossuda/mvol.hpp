#pragma once

#include <filesystem>
#include <variant>

#include "crossuda/volume.hpp"

namespace crossuda {

/// MVOL container: ASCII magic "MVOL1\n", one UTF-8 header line
///   dims=(z,y,x) spacing=(sz,sy,sx) dtype=<f32|u8> byte_order=little
/// a blank line, then the raw little-endian payload of z*y*x elements in
/// z-major order. Floats are IEEE-754 binary32; masks are u8.
void write_mvol(const Volume& v, const std::filesystem::path& path);
void write_mvol(const LabelMask& m, const std::filesystem::path& path);

using MvolObject = std::variant<Volume, LabelMask>;

MvolObject read_mvol(const std::filesystem::path& path);

/// Typed readers; throw ErrorKind::format if the file holds the other dtype.
Volume read_mvol_volume(const std::filesystem::path& path);
LabelMask read_mvol_mask(const std::filesystem::path& path);

}  // namespace crossuda

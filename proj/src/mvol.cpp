#include "crossuda/mvol.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace crossuda {

namespace {

constexpr char kMagic[] = "MVOL1\n";

std::string format_header(int nz, int ny, int nx, const Spacing& sp, const char* dtype) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "dims=(%d,%d,%d) spacing=(%.17g,%.17g,%.17g) dtype=%s byte_order=little",
                nz, ny, nx, sp[0], sp[1], sp[2], dtype);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& header,
                const char* payload, size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot open for write: " + path.string());
  out.write(kMagic, 6);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write("\n\n", 2);
  out.write(payload, static_cast<std::streamsize>(bytes));
  out.flush();
  require(out.good(), ErrorKind::io, "write failed: " + path.string());
}

struct Header {
  int nz, ny, nx;
  Spacing spacing;
  std::string dtype;
};

Header parse_header(const std::string& line, const std::string& path) {
  Header h{};
  char dtype[16] = {0};
  char order[16] = {0};
  const int n = std::sscanf(line.c_str(),
                            "dims=(%d,%d,%d) spacing=(%lf,%lf,%lf) dtype=%15s byte_order=%15s",
                            &h.nz, &h.ny, &h.nx, &h.spacing[0], &h.spacing[1],
                            &h.spacing[2], dtype, order);
  require(n == 8, ErrorKind::format, "malformed MVOL header in " + path);
  require(std::string(order) == "little", ErrorKind::format,
          "unsupported byte order in " + path);
  require(h.nz >= 1 && h.ny >= 1 && h.nx >= 1, ErrorKind::format,
          "non-positive dims in " + path);
  require(h.spacing[0] > 0 && h.spacing[1] > 0 && h.spacing[2] > 0, ErrorKind::format,
          "non-positive spacing in " + path);
  h.dtype = dtype;
  require(h.dtype == "f32" || h.dtype == "u8", ErrorKind::format,
          "unknown dtype in " + path);
  return h;
}

}  // namespace

void write_mvol(const Volume& v, const std::filesystem::path& path) {
  v.validate();
  const std::string header = format_header(v.nz, v.ny, v.nx, v.spacing, "f32");
  write_file(path, header, reinterpret_cast<const char*>(v.data.data()),
             static_cast<size_t>(v.size()) * sizeof(float));
}

void write_mvol(const LabelMask& m, const std::filesystem::path& path) {
  m.validate();
  const std::string header = format_header(m.nz, m.ny, m.nx, m.spacing, "u8");
  write_file(path, header, reinterpret_cast<const char*>(m.data.data()),
             static_cast<size_t>(m.size()));
}

MvolObject read_mvol(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open: " + path.string());

  char magic[6];
  in.read(magic, 6);
  require(in.gcount() == 6 && std::memcmp(magic, kMagic, 6) == 0, ErrorKind::bad_magic,
          "not an MVOL file: " + path.string());

  std::string header_line, blank;
  require(static_cast<bool>(std::getline(in, header_line)), ErrorKind::format,
          "missing MVOL header in " + path.string());
  require(static_cast<bool>(std::getline(in, blank)) && blank.empty(), ErrorKind::format,
          "missing blank separator in " + path.string());

  const Header h = parse_header(header_line, path.string());
  const int64_t count = int64_t(h.nz) * h.ny * h.nx;

  if (h.dtype == "f32") {
    Volume v(h.nz, h.ny, h.nx, h.spacing);
    in.read(reinterpret_cast<char*>(v.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(count * sizeof(float)),
            ErrorKind::truncated, "truncated MVOL payload in " + path.string());
    return v;
  }
  LabelMask m(h.nz, h.ny, h.nx, h.spacing);
  in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(count));
  require(in.gcount() == static_cast<std::streamsize>(count), ErrorKind::truncated,
          "truncated MVOL payload in " + path.string());
  m.validate();
  return m;
}

Volume read_mvol_volume(const std::filesystem::path& path) {
  MvolObject obj = read_mvol(path);
  require(std::holds_alternative<Volume>(obj), ErrorKind::format,
          "expected f32 volume: " + path.string());
  return std::get<Volume>(std::move(obj));
}

LabelMask read_mvol_mask(const std::filesystem::path& path) {
  MvolObject obj = read_mvol(path);
  require(std::holds_alternative<LabelMask>(obj), ErrorKind::format,
          "expected u8 mask: " + path.string());
  return std::get<LabelMask>(std::move(obj));
}

}  // namespace crossuda

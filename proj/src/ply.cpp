#include "geomreid/ply.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace geomreid {

namespace {

enum class PropKind { coord_x, coord_y, coord_z, red, green, blue, part_label };

struct Prop {
  PropKind kind;
  int byte_size;   // binary stride contribution
  bool is_signed;  // for integer properties
};

struct HeaderInfo {
  PlyFormat format = PlyFormat::ascii;
  Eigen::Index vertex_count = 0;
  std::vector<Prop> props;
  bool has_color = false;
  bool has_label = false;
  std::size_t body_offset = 0;
};

std::string_view next_line(std::string_view bytes, std::size_t& pos) {
  const std::size_t start = pos;
  while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
  std::string_view line = bytes.substr(start, pos - start);
  if (pos < bytes.size()) ++pos;  // consume '\n'
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

HeaderInfo parse_header(std::string_view bytes) {
  HeaderInfo h;
  std::size_t pos = 0;
  if (next_line(bytes, pos) != "ply") raise(Errc::malformed_header, "missing 'ply' magic");

  bool saw_format = false;
  bool saw_end = false;
  bool in_vertex_element = false;
  bool saw_vertex_element = false;

  while (pos < bytes.size()) {
    const std::string_view line = next_line(bytes, pos);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;

    if (tok[0] == "comment" || tok[0] == "obj_info") continue;

    if (tok[0] == "format") {
      if (tok.size() != 3 || tok[2] != "1.0")
        raise(Errc::malformed_header, "unknown format line '" + std::string(line) + "'");
      if (tok[1] == "ascii") h.format = PlyFormat::ascii;
      else if (tok[1] == "binary_little_endian") h.format = PlyFormat::binary_le;
      else raise(Errc::malformed_header, "unknown format '" + std::string(tok[1]) + "'");
      saw_format = true;
      continue;
    }

    if (tok[0] == "element") {
      if (tok.size() != 3) raise(Errc::malformed_header, "bad element line");
      if (tok[1] != "vertex")
        raise(Errc::unsupported_property, "unsupported element '" + std::string(tok[1]) + "'");
      if (saw_vertex_element) raise(Errc::malformed_header, "duplicate vertex element");
      long long n = -1;
      const auto res = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), n);
      if (res.ec != std::errc{} || n < 0) raise(Errc::malformed_header, "bad vertex count");
      h.vertex_count = static_cast<Eigen::Index>(n);
      in_vertex_element = true;
      saw_vertex_element = true;
      continue;
    }

    if (tok[0] == "property") {
      if (!in_vertex_element) raise(Errc::malformed_header, "property outside vertex element");
      if (tok.size() >= 2 && tok[1] == "list")
        raise(Errc::unsupported_property, "list properties not supported");
      if (tok.size() != 3) raise(Errc::malformed_header, "bad property line");
      const std::string_view type = tok[1];
      const std::string_view name = tok[2];
      Prop p{};
      if (name == "x" || name == "y" || name == "z") {
        if (type != "float" && type != "float32")
          raise(Errc::unsupported_property, "coordinate '" + std::string(name) +
                                                "' must be 32-bit float, got '" + std::string(type) + "'");
        p.kind = name == "x" ? PropKind::coord_x : (name == "y" ? PropKind::coord_y : PropKind::coord_z);
        p.byte_size = 4;
      } else if (name == "red" || name == "green" || name == "blue") {
        if (type != "uchar" && type != "uint8")
          raise(Errc::unsupported_property, "color '" + std::string(name) +
                                                "' must be uchar, got '" + std::string(type) + "'");
        p.kind = name == "red" ? PropKind::red : (name == "green" ? PropKind::green : PropKind::blue);
        p.byte_size = 1;
      } else if (name == "part_label") {
        p.kind = PropKind::part_label;
        if (type == "char" || type == "int8") { p.byte_size = 1; p.is_signed = true; }
        else if (type == "uchar" || type == "uint8") { p.byte_size = 1; }
        else if (type == "short" || type == "int16") { p.byte_size = 2; p.is_signed = true; }
        else if (type == "ushort" || type == "uint16") { p.byte_size = 2; }
        else if (type == "int" || type == "int32") { p.byte_size = 4; p.is_signed = true; }
        else if (type == "uint" || type == "uint32") { p.byte_size = 4; }
        else raise(Errc::unsupported_property, "part_label must be an integer type, got '" + std::string(type) + "'");
      } else {
        raise(Errc::unsupported_property, "unsupported property '" + std::string(name) + "'");
      }
      h.props.push_back(p);
      continue;
    }

    if (tok[0] == "end_header") {
      saw_end = true;
      h.body_offset = pos;
      break;
    }

    raise(Errc::malformed_header, "unrecognized header line '" + std::string(line) + "'");
  }

  if (!saw_end) raise(Errc::malformed_header, "missing 'end_header'");
  if (!saw_format) raise(Errc::malformed_header, "missing format line");
  if (!saw_vertex_element) raise(Errc::malformed_header, "missing vertex element");

  int have = 0;  // bit 0..2 xyz, 3..5 rgb, 6 label
  for (const Prop& p : h.props) {
    const int bit = static_cast<int>(p.kind);
    if (have & (1 << bit)) raise(Errc::malformed_header, "duplicate property");
    have |= 1 << bit;
  }
  if ((have & 0b111) != 0b111) raise(Errc::malformed_header, "vertex element lacks x/y/z");
  const int rgb = (have >> 3) & 0b111;
  if (rgb != 0 && rgb != 0b111) raise(Errc::malformed_header, "incomplete red/green/blue triple");
  h.has_color = rgb == 0b111;
  h.has_label = (have >> 6) & 1;
  return h;
}

float le_float(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

std::int64_t le_int(const unsigned char* p, int size, bool is_signed) {
  std::uint64_t u = 0;
  for (int i = 0; i < size; ++i) u |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  if (is_signed) {
    const std::uint64_t sign_bit = 1ULL << (8 * size - 1);
    if (u & sign_bit) u |= ~((sign_bit << 1) - 1);
  }
  return static_cast<std::int64_t>(u);
}

void append_le_float(std::string& out, float f) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

void append_le_int32(std::string& out, std::int32_t v) {
  const std::uint32_t u = static_cast<std::uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

PersonFrame read_body_ascii(std::string_view body, const HeaderInfo& h) {
  PersonFrame frame;
  frame.points.resize(h.vertex_count, 3);
  if (h.has_color) frame.colors.emplace(ColorMatrix(h.vertex_count, 3));
  if (h.has_label) frame.part_labels.emplace(LabelVector(h.vertex_count));

  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\t' || body[pos] == '\n' || body[pos] == '\r'))
      ++pos;
    const std::size_t start = pos;
    while (pos < body.size() && body[pos] != ' ' && body[pos] != '\t' && body[pos] != '\n' && body[pos] != '\r')
      ++pos;
    return body.substr(start, pos - start);
  };

  for (Eigen::Index v = 0; v < h.vertex_count; ++v) {
    for (const Prop& p : h.props) {
      const std::string_view tok = next_token();
      if (tok.empty())
        raise(Errc::truncated_body, "body ends at vertex " + std::to_string(v) + " of " +
                                        std::to_string(h.vertex_count));
      switch (p.kind) {
        case PropKind::coord_x:
        case PropKind::coord_y:
        case PropKind::coord_z: {
          float f = 0.0f;
          const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), f);
          if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
            raise(Errc::parse_error, "bad coordinate token '" + std::string(tok) + "'");
          frame.points(v, static_cast<int>(p.kind)) = static_cast<double>(f);
          break;
        }
        case PropKind::red:
        case PropKind::green:
        case PropKind::blue: {
          int c = 0;
          const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), c);
          if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || c < 0 || c > 255)
            raise(Errc::parse_error, "bad color token '" + std::string(tok) + "'");
          (*frame.colors)(v, static_cast<int>(p.kind) - 3) = static_cast<double>(c) / 255.0;
          break;
        }
        case PropKind::part_label: {
          long long l = 0;
          const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), l);
          if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
            raise(Errc::parse_error, "bad part_label token '" + std::string(tok) + "'");
          (*frame.part_labels)(v) = static_cast<int>(l);
          break;
        }
      }
    }
  }
  return frame;
}

PersonFrame read_body_binary(std::string_view body, const HeaderInfo& h) {
  std::size_t stride = 0;
  for (const Prop& p : h.props) stride += static_cast<std::size_t>(p.byte_size);
  const std::size_t need = stride * static_cast<std::size_t>(h.vertex_count);
  if (body.size() < need)
    raise(Errc::truncated_body, "body has " + std::to_string(body.size()) + " bytes, needs " +
                                    std::to_string(need));

  PersonFrame frame;
  frame.points.resize(h.vertex_count, 3);
  if (h.has_color) frame.colors.emplace(ColorMatrix(h.vertex_count, 3));
  if (h.has_label) frame.part_labels.emplace(LabelVector(h.vertex_count));

  const unsigned char* base = reinterpret_cast<const unsigned char*>(body.data());
  for (Eigen::Index v = 0; v < h.vertex_count; ++v) {
    const unsigned char* p = base + static_cast<std::size_t>(v) * stride;
    for (const Prop& prop : h.props) {
      switch (prop.kind) {
        case PropKind::coord_x:
        case PropKind::coord_y:
        case PropKind::coord_z:
          frame.points(v, static_cast<int>(prop.kind)) = static_cast<double>(le_float(p));
          break;
        case PropKind::red:
        case PropKind::green:
        case PropKind::blue:
          (*frame.colors)(v, static_cast<int>(prop.kind) - 3) = static_cast<double>(*p) / 255.0;
          break;
        case PropKind::part_label:
          (*frame.part_labels)(v) = static_cast<int>(le_int(p, prop.byte_size, prop.is_signed));
          break;
      }
      p += prop.byte_size;
    }
  }
  return frame;
}

}  // namespace

PersonFrame parse_ply(std::string_view bytes) {
  const HeaderInfo h = parse_header(bytes);
  const std::string_view body = bytes.substr(h.body_offset);
  PersonFrame frame =
      h.format == PlyFormat::ascii ? read_body_ascii(body, h) : read_body_binary(body, h);
  frame.timestamp_s = 0.0;
  validate(frame);
  return frame;
}

std::string write_ply(const PersonFrame& frame, PlyFormat format) {
  validate(frame);
  const Eigen::Index n = frame.points.rows();

  std::string out;
  out.reserve(256 + static_cast<std::size_t>(n) * 40);
  out += "ply\n";
  out += format == PlyFormat::ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(n) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (frame.colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (frame.part_labels) out += "property int part_label\n";
  out += "end_header\n";

  auto color_byte = [](double c) {
    const long v = std::lround(c * 255.0);
    return static_cast<int>(std::clamp(v, 0L, 255L));
  };

  if (format == PlyFormat::ascii) {
    char buf[64];
    for (Eigen::Index v = 0; v < n; ++v) {
      for (int k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(frame.points(v, k))));
        out += buf;
        out.push_back(k == 2 && !frame.colors && !frame.part_labels ? '\n' : ' ');
      }
      if (frame.colors) {
        std::snprintf(buf, sizeof buf, "%d %d %d", color_byte((*frame.colors)(v, 0)),
                      color_byte((*frame.colors)(v, 1)), color_byte((*frame.colors)(v, 2)));
        out += buf;
        out.push_back(frame.part_labels ? ' ' : '\n');
      }
      if (frame.part_labels) {
        std::snprintf(buf, sizeof buf, "%d", (*frame.part_labels)(v));
        out += buf;
        out.push_back('\n');
      }
    }
  } else {
    for (Eigen::Index v = 0; v < n; ++v) {
      for (int k = 0; k < 3; ++k) append_le_float(out, static_cast<float>(frame.points(v, k)));
      if (frame.colors)
        for (int k = 0; k < 3; ++k) out.push_back(static_cast<char>(color_byte((*frame.colors)(v, k))));
      if (frame.part_labels) append_le_int32(out, (*frame.part_labels)(v));
    }
  }
  return out;
}

PersonFrame load_ply_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ply(ss.str());
}

void save_ply_file(const PersonFrame& frame, const std::filesystem::path& path, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  const std::string bytes = write_ply(frame, format);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(Errc::io_error, "short write to '" + path.string() + "'");
}

}  // namespace geomreid

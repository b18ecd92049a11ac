#pragma once

// Wavefront OBJ (v/f lines) and PLY (ascii, binary_little_endian) readers and
// writers. Coordinates are written with 17 significant digits (ASCII) or as
// float64 (binary) so a save/load round trip is lossless.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flowreg/geometry.hpp"
#include "flowreg/io/atomic_write.hpp"

namespace flowreg::io {

namespace detail {

inline Error parse_error(const std::string& file, const std::string& where, const std::string& what) {
  return Error(ErrorCode::ParseError, file + ":" + where + ": " + what);
}

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_long(std::string_view s, long long& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// OBJ

/// Polygons with more than three corners are split into fans (1,2,3),(1,3,4),...
inline TriMesh parse_obj(std::string_view text, const std::string& name = "<obj>") {
  TriMesh mesh;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw detail::parse_error(name, where, "vertex needs three coordinates");
      Point3 p;
      for (int k = 0; k < 3; ++k) {
        if (!detail::parse_double(tok[static_cast<std::size_t>(k) + 1], p[k])) {
          throw detail::parse_error(name, where, "bad coordinate '" + std::string(tok[static_cast<std::size_t>(k) + 1]) + "'");
        }
      }
      mesh.vertices.push_back(p);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw detail::parse_error(name, where, "face needs at least three vertices");
      std::vector<std::size_t> poly;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view ref = tok[k].substr(0, tok[k].find('/'));
        long long idx = 0;
        if (!detail::parse_long(ref, idx) || idx == 0) {
          throw detail::parse_error(name, where, "bad vertex reference '" + std::string(tok[k]) + "'");
        }
        const long long n = static_cast<long long>(mesh.vertices.size());
        const long long zero_based = idx > 0 ? idx - 1 : n + idx;
        if (zero_based < 0 || zero_based >= n) {
          throw detail::parse_error(name, where, "vertex reference " + std::to_string(idx) + " out of range");
        }
        poly.push_back(static_cast<std::size_t>(zero_based));
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back(Triangle{poly[0], poly[k], poly[k + 1]});
    }
    if (end == text.size()) break;
  }
  return mesh;
}

inline TriMesh load_obj(const std::filesystem::path& path) { return parse_obj(detail::read_all(path), path.string()); }

inline void write_obj(std::ostream& out, const TriMesh& mesh) {
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  write_atomically(path, [&](std::ostream& out) { write_obj(out, mesh); });
}

// ---------------------------------------------------------------------------
// PLY

namespace detail {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline bool ply_type(std::string_view name, PlyType& out) {
  static const std::pair<std::string_view, PlyType> table[] = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  for (const auto& [n, t] : table) {
    if (n == name) {
      out = t;
      return true;
    }
  }
  return false;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

template <typename T>
T read_le(const char* p) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(p);
    case PlyType::UInt8: return read_le<std::uint8_t>(p);
    case PlyType::Int16: return read_le<std::int16_t>(p);
    case PlyType::UInt16: return read_le<std::uint16_t>(p);
    case PlyType::Int32: return read_le<std::int32_t>(p);
    case PlyType::UInt32: return read_le<std::uint32_t>(p);
    case PlyType::Float32: return read_le<float>(p);
    case PlyType::Float64: return read_le<double>(p);
  }
  return 0.0;
}

}  // namespace detail

inline TriMesh parse_ply(const std::string& data, const std::string& name = "<ply>") {
  using namespace detail;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= data.size()) return false;
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    line = std::string_view(data).substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || line != "ply") throw parse_error(name, "line 1", "missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  bool have_end = false;
  std::vector<PlyElement> elements;
  while (next_line(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (tok[0] == "format") {
      if (tok.size() < 2) throw parse_error(name, where, "incomplete format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw parse_error(name, where, "unsupported format '" + std::string(tok[1]) + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      long long count = 0;
      if (tok.size() < 3 || !parse_long(tok[2], count) || count < 0) throw parse_error(name, where, "bad element line");
      elements.push_back(PlyElement{std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw parse_error(name, where, "property before any element");
      PlyProperty prop;
      if (tok.size() >= 5 && tok[1] == "list") {
        prop.is_list = true;
        if (!ply_type(tok[2], prop.count_type) || !ply_type(tok[3], prop.type)) throw parse_error(name, where, "bad list types");
        prop.name = tok[4];
      } else if (tok.size() >= 3) {
        if (!ply_type(tok[1], prop.type)) throw parse_error(name, where, "unknown type '" + std::string(tok[1]) + "'");
        prop.name = tok[2];
      } else {
        throw parse_error(name, where, "bad property line");
      }
      elements.back().properties.push_back(prop);
    } else if (tok[0] == "end_header") {
      have_end = true;
      break;
    }
  }
  const auto vertex_it = std::find_if(elements.begin(), elements.end(), [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) throw parse_error(name, "header", "missing element 'vertex'");
  if (!have_format) throw parse_error(name, "header", "missing 'format' line");
  if (!have_end) throw parse_error(name, "header", "missing 'end_header'");
  int xyz[3] = {-1, -1, -1};
  for (std::size_t k = 0; k < vertex_it->properties.size(); ++k) {
    const auto& pn = vertex_it->properties[k].name;
    if (pn == "x") xyz[0] = static_cast<int>(k);
    if (pn == "y") xyz[1] = static_cast<int>(k);
    if (pn == "z") xyz[2] = static_cast<int>(k);
  }
  for (int a = 0; a < 3; ++a) {
    if (xyz[a] < 0) throw parse_error(name, "header", std::string("missing vertex property '") + "xyz"[a] + "'");
  }

  TriMesh mesh;
  auto add_face = [&](const std::vector<long long>& idx, const std::string& where) {
    for (long long v : idx) {
      if (v < 0) throw parse_error(name, where, "negative face index");
    }
    if (idx.size() < 3) throw parse_error(name, where, "face with fewer than three vertices");
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
      mesh.triangles.push_back(Triangle{static_cast<std::size_t>(idx[0]), static_cast<std::size_t>(idx[k]),
                                        static_cast<std::size_t>(idx[k + 1])});
    }
  };
  auto is_face_list = [](const PlyElement& e, const PlyProperty& p) {
    return e.name == "face" && p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index");
  };

  if (!binary) {
    for (const auto& element : elements) {
      for (std::size_t r = 0; r < element.count; ++r) {
        if (!next_line(line)) {
          throw parse_error(name, "line " + std::to_string(line_no + 1), "unexpected end of data in element '" + element.name + "'");
        }
        const auto tok = split_ws(line);
        const std::string where = "line " + std::to_string(line_no);
        std::size_t t = 0;
        Point3 p = Point3::Zero();
        std::vector<long long> face;
        for (std::size_t k = 0; k < element.properties.size(); ++k) {
          const auto& prop = element.properties[k];
          auto take = [&]() {
            if (t >= tok.size()) throw parse_error(name, where, "too few values");
            double v = 0.0;
            if (!parse_double(tok[t], v)) throw parse_error(name, where, "bad value '" + std::string(tok[t]) + "'");
            ++t;
            return v;
          };
          if (prop.is_list) {
            const auto n = static_cast<long long>(take());
            std::vector<long long> values;
            for (long long q = 0; q < n; ++q) values.push_back(static_cast<long long>(take()));
            if (is_face_list(element, prop)) face = std::move(values);
          } else {
            const double v = take();
            if (&element == &*vertex_it) {
              for (int a = 0; a < 3; ++a) {
                if (xyz[a] == static_cast<int>(k)) p[a] = v;
              }
            }
          }
        }
        if (&element == &*vertex_it) mesh.vertices.push_back(p);
        if (!face.empty()) add_face(face, where);
      }
    }
  } else {
    const char* base = data.data();
    auto need = [&](std::size_t bytes, const std::string& element) {
      if (pos + bytes > data.size()) {
        throw parse_error(name, "byte " + std::to_string(pos), "unexpected end of data in element '" + element + "'");
      }
    };
    for (const auto& element : elements) {
      for (std::size_t r = 0; r < element.count; ++r) {
        Point3 p = Point3::Zero();
        std::vector<long long> face;
        for (std::size_t k = 0; k < element.properties.size(); ++k) {
          const auto& prop = element.properties[k];
          if (prop.is_list) {
            need(ply_size(prop.count_type), element.name);
            const auto n = static_cast<long long>(decode(prop.count_type, base + pos));
            pos += ply_size(prop.count_type);
            need(static_cast<std::size_t>(n) * ply_size(prop.type), element.name);
            std::vector<long long> values;
            for (long long q = 0; q < n; ++q) {
              values.push_back(static_cast<long long>(decode(prop.type, base + pos)));
              pos += ply_size(prop.type);
            }
            if (is_face_list(element, prop)) face = std::move(values);
          } else {
            need(ply_size(prop.type), element.name);
            const double v = decode(prop.type, base + pos);
            pos += ply_size(prop.type);
            if (&element == &*vertex_it) {
              for (int a = 0; a < 3; ++a) {
                if (xyz[a] == static_cast<int>(k)) p[a] = v;
              }
            }
          }
        }
        if (&element == &*vertex_it) mesh.vertices.push_back(p);
        if (!face.empty()) add_face(face, "byte " + std::to_string(pos));
      }
    }
  }
  try {
    validate_mesh(mesh);
  } catch (const Error& e) {
    throw parse_error(name, "faces", e.what());
  }
  return mesh;
}

inline TriMesh load_ply(const std::filesystem::path& path) { return parse_ply(detail::read_all(path), path.string()); }

enum class PlyFormat { Ascii, BinaryLittleEndian };

inline void write_ply(std::ostream& out, const TriMesh& mesh, PlyFormat format) {
  out << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (mesh.has_faces()) out << "element face " << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";
  if (format == PlyFormat::Ascii) {
    out << std::setprecision(17);
    for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    return;
  }
  for (const auto& v : mesh.vertices) {
    const double xyz[3] = {v.x(), v.y(), v.z()};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (const auto& t : mesh.triangles) {
    const std::uint8_t n = 3;
    const std::int32_t idx[3] = {static_cast<std::int32_t>(t[0]), static_cast<std::int32_t>(t[1]), static_cast<std::int32_t>(t[2])};
    out.write(reinterpret_cast<const char*>(&n), 1);
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
}

inline void save_ply(const std::filesystem::path& path, const TriMesh& mesh, PlyFormat format = PlyFormat::BinaryLittleEndian) {
  write_atomically(path, [&](std::ostream& out) { write_ply(out, mesh, format); }, true);
}

// ---------------------------------------------------------------------------
// Extension dispatch

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

inline TriMesh load_mesh(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".obj") return load_obj(path);
  if (ext == ".ply") return load_ply(path);
  throw Error(ErrorCode::ParseError, "unsupported mesh format '" + ext + "' (" + path.string() + ")");
}

inline PointCloud load_cloud(const std::filesystem::path& path) { return load_mesh(path).vertices; }

inline void save_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  const std::string ext = lower_extension(path);
  if (ext == ".obj") return save_obj(path, mesh);
  if (ext == ".ply") return save_ply(path, mesh);
  throw Error(ErrorCode::InvalidArgument, "unsupported mesh format '" + ext + "' (" + path.string() + ")");
}

inline void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) { save_mesh(path, TriMesh{cloud, {}}); }

}  // namespace flowreg::io

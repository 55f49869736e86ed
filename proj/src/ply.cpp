#include "colorsurf/ply.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "colorsurf/image.hpp"

static_assert(std::endian::native == std::endian::little,
              "ply i/o assumes a little-endian host");

namespace colorsurf {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("ply " + path + ": " + what);
}

enum class PType { i8, u8, i16, u16, i32, u32, f32, f64 };

PType parse_type(const std::string& t, const std::string& path) {
  if (t == "char" || t == "int8") return PType::i8;
  if (t == "uchar" || t == "uint8") return PType::u8;
  if (t == "short" || t == "int16") return PType::i16;
  if (t == "ushort" || t == "uint16") return PType::u16;
  if (t == "int" || t == "int32") return PType::i32;
  if (t == "uint" || t == "uint32") return PType::u32;
  if (t == "float" || t == "float32") return PType::f32;
  if (t == "double" || t == "float64") return PType::f64;
  fail(path, "unknown property type '" + t + "'");
}

bool is_integer(PType t) { return t != PType::f32 && t != PType::f64; }

struct Property {
  std::string name;
  bool list = false;
  PType count_type = PType::u8;
  PType type = PType::f32;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
};

double read_binary_scalar(std::istream& in, PType t, const std::string& path) {
  auto get = [&](auto v) -> double {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail(path, "unexpected end of binary data");
    return static_cast<double>(v);
  };
  switch (t) {
    case PType::i8: return get(int8_t{});
    case PType::u8: return get(uint8_t{});
    case PType::i16: return get(int16_t{});
    case PType::u16: return get(uint16_t{});
    case PType::i32: return get(int32_t{});
    case PType::u32: return get(uint32_t{});
    case PType::f32: return get(float{});
    case PType::f64: return get(double{});
  }
  fail(path, "bad property type");
}

double read_ascii_scalar(std::istream& in, const std::string& path) {
  double v;
  if (!(in >> v)) fail(path, "unexpected end of ascii data");
  return v;
}

}  // namespace

void write_ply(const ColoredMesh& mesh, const std::string& path) {
  const int V = mesh.num_vertices(), T = mesh.num_triangles();
  if (mesh.colors.rows() != V) throw std::invalid_argument("ply: colors count != vertex count");
  if (!mesh.vertices.allFinite()) throw std::invalid_argument("ply: non-finite vertex");
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < 3; ++k)
      if (mesh.triangles(t, k) < 0 || mesh.triangles(t, k) >= V)
        throw std::invalid_argument("ply: triangle index out of range");

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << V << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element face " << T << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (int i = 0; i < V; ++i) {
    float xyz[3] = {static_cast<float>(mesh.vertices(i, 0)),
                    static_cast<float>(mesh.vertices(i, 1)),
                    static_cast<float>(mesh.vertices(i, 2))};
    uint8_t rgb[3] = {to_byte(mesh.colors(i, 0)), to_byte(mesh.colors(i, 1)),
                      to_byte(mesh.colors(i, 2))};
    out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
    out.write(reinterpret_cast<const char*>(rgb), sizeof rgb);
  }
  for (int t = 0; t < T; ++t) {
    const uint8_t n = 3;
    int32_t idx[3] = {mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)};
    out.write(reinterpret_cast<const char*>(&n), 1);
    out.write(reinterpret_cast<const char*>(idx), sizeof idx);
  }
  out.flush();
  if (!out) fail(path, "write failed");
  out.close();
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(path, "cannot move into place");
}

ColoredMesh read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") fail(path, "missing ply magic");

  bool binary = false, format_seen = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else fail(path, "unsupported format '" + fmt + "'");
      format_seen = true;
    } else if (kw == "element") {
      Element e;
      if (!(ls >> e.name >> e.count)) fail(path, "malformed element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) fail(path, "property before any element");
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.list = true;
        std::string ct, it;
        if (!(ls >> ct >> it >> p.name)) fail(path, "malformed list property");
        p.count_type = parse_type(ct, path);
        p.type = parse_type(it, path);
      } else {
        p.type = parse_type(t, path);
        if (!(ls >> p.name)) fail(path, "malformed property line");
      }
      elements.back().props.push_back(p);
    } else if (kw == "end_header") {
      break;
    } else {
      fail(path, "unknown header keyword '" + kw + "'");
    }
  }
  if (!format_seen) fail(path, "missing format line");

  ColoredMesh mesh;
  std::vector<Eigen::Vector3i> tris;
  auto scalar = [&](PType t) {
    return binary ? read_binary_scalar(in, t, path) : read_ascii_scalar(in, path);
  };
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      mesh.vertices.resize(e.count, 3);
      mesh.colors = MatX3::Zero(e.count, 3);
      for (size_t i = 0; i < e.count; ++i)
        for (const Property& p : e.props) {
          if (p.list) {
            const size_t n = static_cast<size_t>(scalar(p.count_type));
            for (size_t k = 0; k < n; ++k) scalar(p.type);
            continue;
          }
          const double v = scalar(p.type);
          if (p.name == "x") mesh.vertices(i, 0) = v;
          else if (p.name == "y") mesh.vertices(i, 1) = v;
          else if (p.name == "z") mesh.vertices(i, 2) = v;
          else if (p.name == "red") mesh.colors(i, 0) = is_integer(p.type) ? v / 255.0 : v;
          else if (p.name == "green") mesh.colors(i, 1) = is_integer(p.type) ? v / 255.0 : v;
          else if (p.name == "blue") mesh.colors(i, 2) = is_integer(p.type) ? v / 255.0 : v;
        }
    } else if (e.name == "face") {
      for (size_t i = 0; i < e.count; ++i)
        for (const Property& p : e.props) {
          if (!p.list) {
            scalar(p.type);
            continue;
          }
          const size_t n = static_cast<size_t>(scalar(p.count_type));
          std::vector<int> poly(n);
          for (size_t k = 0; k < n; ++k) poly[k] = static_cast<int>(scalar(p.type));
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          for (size_t k = 2; k < n; ++k)  // fan-triangulate polygons
            tris.emplace_back(poly[0], poly[k - 1], poly[k]);
        }
    } else {
      // Unknown element: consume and discard.
      for (size_t i = 0; i < e.count; ++i)
        for (const Property& p : e.props) {
          if (p.list) {
            const size_t n = static_cast<size_t>(scalar(p.count_type));
            for (size_t k = 0; k < n; ++k) scalar(p.type);
          } else {
            scalar(p.type);
          }
        }
    }
  }
  mesh.triangles.resize(tris.size(), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.triangles.row(i) = tris[i].transpose();
  const int V = mesh.num_vertices();
  for (size_t i = 0; i < tris.size(); ++i)
    for (int k = 0; k < 3; ++k)
      if (tris[i][k] < 0 || tris[i][k] >= V) fail(path, "face index out of range");
  return mesh;
}

}  // namespace colorsurf

#include "colorsurf/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

#include "colorsurf/mc_tables.hpp"

namespace colorsurf {

Vec3 SdfGrid::point(int ix, int iy, int iz) const {
  const double h = 1.0 / (resolution - 1);
  Vec3 t(ix * h, iy * h, iz * h);
  return bounds.lo + t.cwiseProduct(bounds.hi - bounds.lo);
}

static void check_grid_args(int resolution, const Aabb& bounds) {
  if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
  if (!((bounds.hi.array() > bounds.lo.array()).all()))
    throw std::invalid_argument("grid bounds must have positive extent");
}

SdfGrid grid_from_function(const SdfFn& fn, int resolution, const Aabb& bounds) {
  check_grid_args(resolution, bounds);
  SdfGrid grid{resolution, bounds, {}};
  grid.values.resize(static_cast<size_t>(resolution) * resolution * resolution);
  size_t idx = 0;
  for (int ix = 0; ix < resolution; ++ix)
    for (int iy = 0; iy < resolution; ++iy)
      for (int iz = 0; iz < resolution; ++iz) grid.values[idx++] = fn(grid.point(ix, iy, iz));
  return grid;
}

SdfGrid extract_sdf_grid(const ParamStore& ps, int resolution, const Aabb& bounds) {
  check_grid_args(resolution, bounds);
  SdfGrid grid{resolution, bounds, {}};
  const size_t total = static_cast<size_t>(resolution) * resolution * resolution;
  grid.values.resize(total);
  const size_t chunk = 8192;
  std::vector<Vec3> pts;
  pts.reserve(chunk);
  size_t base = 0;
  auto flush = [&]() {
    if (pts.empty()) return;
    MatX3 P(pts.size(), 3);
    for (size_t i = 0; i < pts.size(); ++i) P.row(i) = pts[i].transpose();
    Eigen::VectorXd s = sdf_values(ps, P);
    for (size_t i = 0; i < pts.size(); ++i) grid.values[base + i] = s[static_cast<int>(i)];
    base += pts.size();
    pts.clear();
  };
  for (int ix = 0; ix < resolution; ++ix)
    for (int iy = 0; iy < resolution; ++iy)
      for (int iz = 0; iz < resolution; ++iz) {
        pts.push_back(grid.point(ix, iy, iz));
        if (pts.size() == chunk) flush();
      }
  flush();
  return grid;
}

ColoredMesh marching_cubes(const SdfGrid& grid, double iso) {
  const int R = grid.resolution;
  if (R < 2 || grid.values.size() != static_cast<size_t>(R) * R * R)
    throw std::invalid_argument("malformed sdf grid");

  // A surface vertex lives on a lattice edge, identified by its lower lattice
  // endpoint and axis; both cells sharing the edge reuse the same vertex.
  auto edge_key = [R](int x, int y, int z, int axis) {
    return ((static_cast<int64_t>(x) * R + y) * R + z) * 3 + axis;
  };
  std::unordered_map<int64_t, int> edge_vertex;
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> tris;

  double corner[8];
  int cell_edge_vert[12];
  for (int ix = 0; ix < R - 1; ++ix)
    for (int iy = 0; iy < R - 1; ++iy)
      for (int iz = 0; iz < R - 1; ++iz) {
        int code = 0;
        for (int c = 0; c < 8; ++c) {
          const int* o = kCornerOffsets[c];
          corner[c] = grid.at(ix + o[0], iy + o[1], iz + o[2]);
          if (corner[c] < iso) code |= 1 << c;
        }
        const int edges = kMcEdgeTable[code];
        if (edges == 0) continue;
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const int a = kEdgeCorners[e][0], b = kEdgeCorners[e][1];
          const int* oa = kCornerOffsets[a];
          const int* ob = kCornerOffsets[b];
          const int axis = (oa[0] != ob[0]) ? 0 : (oa[1] != ob[1]) ? 1 : 2;
          const int lx = ix + std::min(oa[0], ob[0]);
          const int ly = iy + std::min(oa[1], ob[1]);
          const int lz = iz + std::min(oa[2], ob[2]);
          const int64_t key = edge_key(lx, ly, lz, axis);
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            const double va = corner[a], vb = corner[b];
            const double denom = vb - va;
            const double t = std::abs(denom) < 1e-300 ? 0.5 : (iso - va) / denom;
            const Vec3 pa = grid.point(ix + oa[0], iy + oa[1], iz + oa[2]);
            const Vec3 pb = grid.point(ix + ob[0], iy + ob[1], iz + ob[2]);
            it = edge_vertex.emplace(key, static_cast<int>(verts.size())).first;
            verts.push_back(pa + t * (pb - pa));
          }
          cell_edge_vert[e] = it->second;
        }
        const int* row = kMcTriTable[code];
        for (int k = 0; row[k] != -1; k += 3) {
          // Table order winds CCW seen from the low side; swap so normals
          // point toward increasing values (outward when inside is negative).
          const int i0 = cell_edge_vert[row[k]];
          const int i1 = cell_edge_vert[row[k + 2]];
          const int i2 = cell_edge_vert[row[k + 1]];
          if (i0 == i1 || i1 == i2 || i0 == i2) continue;  // merged-vertex sliver
          tris.emplace_back(i0, i1, i2);
        }
      }

  ColoredMesh mesh;
  mesh.vertices.resize(verts.size(), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.triangles.resize(tris.size(), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.triangles.row(i) = tris[i].transpose();
  mesh.colors = MatX3::Zero(verts.size(), 3);
  return mesh;
}

const char* to_string(ColorMode m) {
  switch (m) {
    case ColorMode::global: return "global";
    case ColorMode::intermediate: return "intermediate";
    case ColorMode::naive: return "naive";
  }
  return "?";
}

ColorMode color_mode_from_string(const std::string& s) {
  if (s == "global") return ColorMode::global;
  if (s == "intermediate") return ColorMode::intermediate;
  if (s == "naive") return ColorMode::naive;
  throw std::invalid_argument("unknown color mode: " + s);
}

static void check_mode_variant(ColorMode mode, Variant variant) {
  const bool ok = (mode == ColorMode::intermediate && variant == Variant::neus_baseline) ||
                  (mode == ColorMode::global &&
                   (variant == Variant::color_neus || variant == Variant::naive)) ||
                  (mode == ColorMode::naive && variant == Variant::naive);
  if (!ok)
    throw std::runtime_error(std::string("color mode '") + to_string(mode) +
                             "' is incompatible with a " + to_string(variant) + " checkpoint");
}

MatX3 extract_vertex_colors(const ParamStore& ps, const MatX3& vertices, ColorMode mode) {
  check_mode_variant(mode, ps.config.variant);
  const int n = static_cast<int>(vertices.rows());
  MatX3 colors(n, 3);
  const int chunk = 8192;
  for (int base = 0; base < n; base += chunk) {
    const int m = std::min(chunk, n - base);
    const MatX3 P = vertices.middleRows(base, m);
    SdfBatch sb = sdf_forward(ps, P);
    if (mode == ColorMode::intermediate) {
      MatX3 d(m, 3);
      for (int i = 0; i < m; ++i) {
        const Vec3 g = sb.g.row(i).transpose();
        d.row(i) = (-g / std::max(g.norm(), 1e-12)).transpose();
      }
      colors.middleRows(base, m) = baseline_color(ps, P, d, sb.f, sb.g);
    } else {
      colors.middleRows(base, m) = global_color(ps, P, sb.f, sb.g);
    }
  }
  return colors;
}

ColoredMesh extract_colored_mesh(const Checkpoint& ck, int resolution, ColorMode mode,
                                 const Aabb& bounds) {
  SdfGrid grid = extract_sdf_grid(ck.params, resolution, bounds);
  ColoredMesh mesh = marching_cubes(grid);
  if (mesh.num_vertices() > 0)
    mesh.colors = extract_vertex_colors(ck.params, mesh.vertices, mode);
  return mesh;
}

}  // namespace colorsurf

#pragma once

#include <string>

#include "colorsurf/mesh.hpp"

namespace colorsurf {

// Binary little-endian PLY: float32 x,y,z + uchar red,green,blue per vertex
// (round-half-up from [0,1]), faces as uchar count + int32 indices. Written
// atomically. An empty mesh produces a valid zero-element file.
void write_ply(const ColoredMesh& mesh, const std::string& path);

// Tolerant reader: handles ascii and binary_little_endian, float or double
// coordinates, optional uchar colors, and skips unrecognized properties.
ColoredMesh read_ply(const std::string& path);

}  // namespace colorsurf

#pragma once

namespace colorsurf {

// Marching cubes lookup tables. kMcEdgeTable[c] has bit k set when the surface
// crosses edge k for corner-occupancy code c; kMcTriTable[c] lists triangles as
// edge-index triples terminated by -1. Corner bit i is set when the sampled
// value at kCornerOffsets[i] is below the iso level.
extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];
extern const int kEdgeCorners[12][2];
extern const int kCornerOffsets[8][3];

}  // namespace colorsurf

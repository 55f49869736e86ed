#pragma once

#include <string>

#include "colorsurf/fields.hpp"
#include "colorsurf/render.hpp"
#include "colorsurf/train.hpp"

namespace colorsurf {

// Training-run configuration file: paths + model + network dims + schedule +
// renderer settings. Every field has a default; unknown keys are rejected.
struct RunConfig {
  std::string data;  // dataset directory
  std::string out;   // output directory
  ModelConfig model;
  NetDims dims;
  TrainConfig train;
  RenderParams render;
};

RunConfig parse_run_config(const std::string& path);
void write_run_config(const RunConfig& rc, const std::string& path);

}  // namespace colorsurf

#pragma once

#include <string>
#include <vector>

#include "colorsurf/geometry.hpp"
#include "colorsurf/image.hpp"

namespace colorsurf {

// Multi-view capture: images, optional masks, and per-image camera poses
// expressed in normalized scene coordinates (the global scale_mat maps the
// normalized unit-sphere scene into dataset world coordinates).
struct Dataset {
  std::vector<std::string> names;  // image filenames, sorted
  std::vector<Image> images;
  std::vector<GrayImage> masks;  // empty when the dataset ships no masks
  std::vector<CameraPose> poses;  // camera-to-world in normalized coordinates
  Eigen::Matrix4d scale_mat = Eigen::Matrix4d::Identity();
  bool has_masks = false;
  int width = 0, height = 0;

  int num_images() const { return static_cast<int>(images.size()); }
};

// One cameras.json entry as stored on disk (world coordinates, not normalized).
struct CameraFrame {
  std::string image;
  Mat3 intrinsics = Mat3::Identity();
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
};

// Loads dir/images/*.png, dir/masks/*.png (optional), dir/cameras.json.
// cameras.json: {"scale_mat": 4x4, "frames": [{"image", "intrinsics" 3x3,
// "world_to_camera" 4x4}, ...]}, matrices row-major nested arrays. scale_mat
// must be a uniform scale + translation. Frames are sorted by image filename.
// Validation failures throw with the offending file or field named.
Dataset load_dataset(const std::string& dir);

void write_cameras_json(const std::string& path, const std::vector<CameraFrame>& frames,
                        const Eigen::Matrix4d& scale_mat);

}  // namespace colorsurf

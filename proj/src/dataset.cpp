#include "colorsurf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace colorsurf {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error("dataset: " + what); }

Eigen::MatrixXd parse_matrix(const json& j, int rows, int cols, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    fail(what + " must be a " + std::to_string(rows) + "x" + std::to_string(cols) + " array");
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      fail(what + " row " + std::to_string(r) + " must have " + std::to_string(cols) +
           " entries");
    for (int c = 0; c < cols; ++c) {
      if (!row[c].is_number()) fail(what + " has a non-numeric entry");
      m(r, c) = row[c].get<double>();
    }
  }
  if (!m.allFinite()) fail(what + " has a non-finite entry");
  return m;
}

void check_affine_bottom_row(const Eigen::Matrix4d& m, const std::string& what) {
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    fail(what + " bottom row must be [0,0,0,1]");
}

// scale_mat must be uniform scale + translation; returns the scale factor.
double check_scale_mat(const Eigen::Matrix4d& m) {
  check_affine_bottom_row(m, "scale_mat");
  const Mat3 A = m.topLeftCorner<3, 3>();
  const double s = A.diagonal().mean();
  if (std::abs(s) < 1e-12) fail("scale_mat is not invertible (zero scale)");
  if (s < 0) fail("scale_mat scale must be positive");
  if ((A - s * Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, std::abs(s)))
    fail("scale_mat must be a uniform scale plus translation");
  return s;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path cams = root / "cameras.json";
  const fs::path imgdir = root / "images";
  if (!fs::exists(cams)) fail("missing " + cams.string());
  if (!fs::is_directory(imgdir)) fail("missing images/ directory in " + dir);

  json j;
  {
    std::ifstream in(cams);
    try {
      in >> j;
    } catch (const json::exception& e) {
      fail(cams.string() + " is not valid json: " + e.what());
    }
  }
  if (!j.is_object() || !j.contains("frames") || !j["frames"].is_array())
    fail(cams.string() + " must contain a \"frames\" array");

  Dataset ds;
  if (j.contains("scale_mat")) ds.scale_mat = parse_matrix(j["scale_mat"], 4, 4, "scale_mat");
  const double scale = check_scale_mat(ds.scale_mat);
  const Vec3 offset = ds.scale_mat.topRightCorner<3, 1>();

  struct Entry {
    std::string image;
    Mat3 K;
    Eigen::Matrix4d w2c;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  for (const json& f : j["frames"]) {
    if (!f.is_object() || !f.contains("image") || !f["image"].is_string())
      fail("every frame needs an \"image\" filename");
    Entry e;
    e.image = f["image"].get<std::string>();
    if (!seen.insert(e.image).second) fail("duplicate frame for image " + e.image);
    if (!f.contains("intrinsics") || !f.contains("world_to_camera"))
      fail("frame " + e.image + " needs \"intrinsics\" and \"world_to_camera\"");
    e.K = parse_matrix(f["intrinsics"], 3, 3, "intrinsics of " + e.image);
    e.w2c = parse_matrix(f["world_to_camera"], 4, 4, "world_to_camera of " + e.image);
    check_affine_bottom_row(e.w2c, "world_to_camera of " + e.image);
    const Mat3 R = e.w2c.topLeftCorner<3, 3>();
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-4)
      fail("world_to_camera of " + e.image + " has a non-orthonormal rotation");
    if (e.K(0, 0) <= 0 || e.K(1, 1) <= 0 ||
        (e.K.row(2) - Eigen::RowVector3d(0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
      fail("intrinsics of " + e.image + " are malformed (need fx,fy>0 and bottom row [0,0,1])");
    entries.push_back(e);
  }
  if (entries.empty()) fail("no frames in " + cams.string());
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.image < b.image; });

  // Every image file must have a camera.
  for (const auto& de : fs::directory_iterator(imgdir)) {
    if (!de.is_regular_file() || de.path().extension() != ".png") continue;
    if (!seen.count(de.path().filename().string()))
      fail("image file " + de.path().filename().string() + " has no cameras.json entry");
  }

  const fs::path maskdir = root / "masks";
  ds.has_masks = fs::is_directory(maskdir);

  for (const Entry& e : entries) {
    const fs::path ipath = imgdir / e.image;
    if (!fs::exists(ipath)) fail("missing image file " + ipath.string());
    Image img = read_png(ipath.string());
    if (ds.width == 0) {
      ds.width = img.width;
      ds.height = img.height;
    } else if (img.width != ds.width || img.height != ds.height) {
      fail("image " + e.image + " has different dimensions from the rest of the dataset");
    }
    if (ds.has_masks) {
      const fs::path mpath = maskdir / e.image;
      if (!fs::exists(mpath)) fail("missing mask file " + mpath.string());
      GrayImage mask = read_png_gray(mpath.string());
      if (mask.width != img.width || mask.height != img.height)
        fail("mask " + mpath.string() + " dimensions do not match its image");
      ds.masks.push_back(std::move(mask));
    }

    // Camera pose in normalized scene coordinates: with world = s*unit + c,
    // the rigid world_to_camera [R|t] becomes [R | (R*c + t)/s] in unit space.
    const Mat3 R = e.w2c.topLeftCorner<3, 3>();
    const Vec3 t = e.w2c.topRightCorner<3, 1>();
    const Vec3 t_unit = (R * offset + t) / scale;
    CameraPose pose;
    pose.rot6d = matrix_to_rot6d(R.transpose());
    pose.translation = -R.transpose() * t_unit;
    pose.intrinsics = e.K;
    ds.poses.push_back(pose);
    ds.names.push_back(e.image);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

void write_cameras_json(const std::string& path, const std::vector<CameraFrame>& frames,
                        const Eigen::Matrix4d& scale_mat) {
  json j;
  j["scale_mat"] = matrix_to_json(scale_mat);
  json arr = json::array();
  std::vector<CameraFrame> sorted = frames;
  std::sort(sorted.begin(), sorted.end(),
            [](const CameraFrame& a, const CameraFrame& b) { return a.image < b.image; });
  for (const CameraFrame& f : sorted) {
    json e;
    e["image"] = f.image;
    e["intrinsics"] = matrix_to_json(f.intrinsics);
    e["world_to_camera"] = matrix_to_json(f.world_to_camera);
    arr.push_back(e);
  }
  j["frames"] = arr;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail("cannot write " + path);
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) fail("write failed for " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail("cannot move " + path + " into place");
}

}  // namespace colorsurf

#include "geomreid/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace geomreid {

ProjectedImages project_person(const PersonFrame& frame, Eigen::Index h, Eigen::Index w) {
  validate(frame);
  if (h < 8 || w < 8) raise(Errc::invalid_arg, "resolution must be at least 8x8");

  ProjectedImages img;
  img.depth = Eigen::MatrixXd::Zero(h, w);
  for (auto& ch : img.color) ch = Eigen::MatrixXd::Zero(h, w);
  img.parts = Eigen::MatrixXi::Constant(h, w, -1);
  img.point_index = Eigen::MatrixXi::Constant(h, w, -1);
  img.has_color = frame.colors.has_value();

  const double inv_px = static_cast<double>(w) / (kVolumeXMax - kVolumeXMin);
  const double inv_py = static_cast<double>(h) / (kVolumeYMax - kVolumeYMin);

  const Eigen::Index n = frame.points.rows();
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = frame.points(i, 0);
    const double y = frame.points(i, 1);
    const double z = frame.points(i, 2);
    if (z < kNearDepth || z > kFarDepth) continue;
    const double cf = std::floor((x - kVolumeXMin) * inv_px);
    const double rf = std::floor((kVolumeYMax - y) * inv_py);
    if (cf < 0 || cf >= static_cast<double>(w) || rf < 0 || rf >= static_cast<double>(h)) continue;
    const Eigen::Index c = static_cast<Eigen::Index>(cf);
    const Eigen::Index r = static_cast<Eigen::Index>(rf);
    // Min-depth z-buffer; strict less keeps the lowest point index on ties.
    if (img.point_index(r, c) >= 0 && !(z < img.depth(r, c))) continue;
    img.depth(r, c) = z;
    img.point_index(r, c) = static_cast<int>(i);
    img.parts(r, c) = frame.part_labels ? (*frame.part_labels)(i) : -1;
    if (frame.colors) {
      img.color[0](r, c) = (*frame.colors)(i, 0);
      img.color[1](r, c) = (*frame.colors)(i, 1);
      img.color[2](r, c) = (*frame.colors)(i, 2);
    } else {
      img.color[0](r, c) = 0.5;
      img.color[1](r, c) = 0.5;
      img.color[2](r, c) = 0.5;
    }
    any = true;
  }
  if (!any) raise(Errc::empty_projection, "no point falls inside the imaging volume");
  return img;
}

std::vector<ProjectedImages> render_sequence(const PersonSequence& seq, Eigen::Index h, Eigen::Index w) {
  validate(seq);
  std::vector<ProjectedImages> out;
  out.reserve(seq.frames.size());
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    try {
      out.push_back(project_person(normalize_frame(seq.frames[k]), h, w));
    } catch (const Error& e) {
      if (e.code() == Errc::empty_projection)
        raise(Errc::empty_projection, "frame " + std::to_string(k) + ": no point inside the imaging volume");
      throw;
    }
  }
  return out;
}

namespace {

std::ofstream open_binary(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void write_depth_pgm(const ProjectedImages& img, const std::filesystem::path& path) {
  auto out = open_binary(path);
  out << "P5\n" << img.cols() << " " << img.rows() << "\n65535\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      unsigned v = 0;
      if (img.valid(r, c)) {
        const long mm = std::lround((img.depth(r, c) - img.near_depth_m) * 1000.0);
        v = static_cast<unsigned>(std::clamp(mm, 0L, 65535L));
      }
      out.put(static_cast<char>((v >> 8) & 0xff));  // 16-bit PGM is big-endian
      out.put(static_cast<char>(v & 0xff));
    }
}

void write_color_ppm(const ProjectedImages& img, const std::filesystem::path& path) {
  auto out = open_binary(path);
  out << "P6\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const long v = img.valid(r, c) ? std::lround(img.color[ch](r, c) * 255.0) : 0L;
        out.put(static_cast<char>(std::clamp(v, 0L, 255L)));
      }
}

void write_parts_pgm(const ProjectedImages& img, const std::filesystem::path& path) {
  auto out = open_binary(path);
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const long v = img.valid(r, c) ? static_cast<long>(img.parts(r, c)) + 1 : 0L;
      out.put(static_cast<char>(std::clamp(v, 0L, 255L)));
    }
}

}  // namespace geomreid

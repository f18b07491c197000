#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dynrecon/geometry.hpp"
#include "dynrecon/motion_mask.hpp"
#include "dynrecon/trajectory.hpp"
#include "dynrecon/types.hpp"

namespace dynrecon {

/// `timestamp tx ty tz qx qy qz qw` per line, '#' comments. Non-unit quaternions
/// are normalized; deviations above 1e-3 add a warning.
Trajectory parse_tum_trajectory(std::istream& in, std::vector<std::string>* warnings = nullptr,
                                const std::string& source = "<stream>");
Trajectory read_tum_trajectory(const std::string& path, std::vector<std::string>* warnings = nullptr);
std::string format_tum_trajectory(const Trajectory& traj);
void write_tum_trajectory(const Trajectory& traj, const std::string& path);

/// Binary 8-bit pixmap. Values are clamped to [0, 1] and rounded to the nearest level.
ImageRGB read_ppm(const std::string& path);
void write_ppm(const ImageRGB& image, const std::string& path);
std::string encode_ppm(const ImageRGB& image);
ImageRGB decode_ppm(const std::string& bytes);

/// Binary bitmap; true is written as a set (black) bit.
BoolGrid read_pbm(const std::string& path);
void write_pbm(const BoolGrid& mask, const std::string& path);
std::string encode_pbm(const BoolGrid& mask);
BoolGrid decode_pbm(const std::string& bytes);

/// Float map, rows stored top-to-bottom in memory, channels interleaved.
struct FloatMap {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 ("Pf") or 3 ("PF")
  std::vector<float> data;

  float& at(int row, int col, int ch) { return data[(static_cast<std::size_t>(row) * width + col) * channels + ch]; }
  float at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

/// Little-endian (negative scale) on write; either endianness on read.
FloatMap read_pfm(const std::string& path);
void write_pfm(const FloatMap& map, const std::string& path);
std::string encode_pfm(const FloatMap& map);
FloatMap decode_pfm(const std::string& bytes);

/// Depth in scene units; 0 marks pixels without a measurement.
Grid read_depth_pfm(const std::string& path);
void write_depth_pfm(const Grid& depth, const std::string& path);

/// Three channels: du, dv and a validity flag (1 or 0).
FlowField read_flow_pfm(const std::string& path);
void write_flow_pfm(const FlowField& flow, const std::string& path);

/// `fx fy cx cy W H` on one line.
CameraIntrinsics read_intrinsics(const std::string& path);
void write_intrinsics(const CameraIntrinsics& K, const std::string& path);

std::vector<double> read_times(const std::string& path);
void write_times(const std::vector<double>& times, const std::string& path);

/// Semantic mask for a frame from `<dir>/<NNNN>.pbm`; nullopt when the file is absent.
std::optional<SemanticMask> load_semantic_mask(const std::string& dir, int frame_id,
                                               const std::vector<std::string>& classes = {"person", "cat", "dog"});

/// Zero-padded four-digit frame file name, e.g. frame_name(7, ".ppm") == "0007.ppm".
std::string frame_name(int frame_id, const std::string& extension);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace dynrecon

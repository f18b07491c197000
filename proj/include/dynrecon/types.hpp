#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dynrecon {

// Per-pixel grids are indexed (row, col) = (v, u), rows = image height.
using Grid = Eigen::ArrayXXd;
using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input; the CLI maps these to exit code 2.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ParseError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class BehindCamera : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class InvalidDepth : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class EmptyInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class InsufficientOverlap : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DegenerateSpec : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Numerical failures; the CLI maps these to exit code 3.
class SolverError : public Error {
 public:
  using Error::Error;
};

class SolverStalled : public SolverError {
 public:
  SolverStalled(const std::string& what, std::string diagnostics)
      : SolverError(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  std::string diagnostics_;
};

class DegenerateFrame : public SolverError {
 public:
  using SolverError::SolverError;
};

class FlowProviderError : public SolverError {
 public:
  FlowProviderError(int from, int to, const std::string& what)
      : SolverError("flow provider failed on pair (" + std::to_string(from) + ", " +
                    std::to_string(to) + "): " + what),
        from_(from),
        to_(to) {}
  int from() const { return from_; }
  int to() const { return to_; }

 private:
  int from_;
  int to_;
};

class TrainingDiverged : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Dense optical flow from a source frame. Displacements in pixels.
struct FlowField {
  Grid du;
  Grid dv;
  BoolGrid valid;

  FlowField() = default;
  FlowField(int height, int width)
      : du(Grid::Zero(height, width)),
        dv(Grid::Zero(height, width)),
        valid(BoolGrid::Constant(height, width, true)) {}

  int height() const { return static_cast<int>(du.rows()); }
  int width() const { return static_cast<int>(du.cols()); }
};

/// Flow plus the per-pixel confidence w_ij a flow provider reports for it.
struct FlowObservation {
  FlowField flow;
  Grid confidence;
};

struct InverseDepthMap {
  Grid values;
  BoolGrid valid;

  InverseDepthMap() = default;
  InverseDepthMap(int height, int width, double value = 1.0)
      : values(Grid::Constant(height, width, value)),
        valid(BoolGrid::Constant(height, width, true)) {}

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }

  /// Builds from metric depth; non-positive or non-finite depths become invalid.
  static InverseDepthMap from_depth(const Grid& depth);
};

struct ImageRGB {
  std::array<Grid, 3> channels;

  ImageRGB() = default;
  ImageRGB(int height, int width) {
    for (auto& c : channels) c = Grid::Zero(height, width);
  }
  int height() const { return static_cast<int>(channels[0].rows()); }
  int width() const { return static_cast<int>(channels[0].cols()); }
};

inline InverseDepthMap InverseDepthMap::from_depth(const Grid& depth) {
  InverseDepthMap out(static_cast<int>(depth.rows()), static_cast<int>(depth.cols()));
  for (Eigen::Index r = 0; r < depth.rows(); ++r) {
    for (Eigen::Index c = 0; c < depth.cols(); ++c) {
      const double z = depth(r, c);
      const bool ok = std::isfinite(z) && z > 0.0;
      out.valid(r, c) = ok;
      out.values(r, c) = ok ? 1.0 / z : 0.0;
    }
  }
  return out;
}

}  // namespace dynrecon

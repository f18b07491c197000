#include "dynrecon/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dynrecon {

namespace {

// Cursor over a PNM/PFM header: tokens separated by whitespace, '#' comments to end of line.
class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::string token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(what_ + ": truncated header");
    return bytes_.substr(start, pos_ - start);
  }

  int positive_int(const char* field) {
    const std::string t = token();
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0 || v > (1 << 24)) throw ParseError(what_ + ": bad " + field + " '" + t + "'");
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw ParseError(what_ + ": truncated header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

float float_from(const char* p, bool little_endian) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if (little_endian != (std::endian::native == std::endian::little)) bits = swap32(bits);
  return std::bit_cast<float>(bits);
}

void float_to(char* p, float value) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  if constexpr (std::endian::native != std::endian::little) bits = swap32(bits);
  std::memcpy(p, &bits, 4);
}

std::uint8_t quantize(double v) {
  if (!std::isfinite(v)) throw InvalidArgument("ppm: non-finite pixel value");
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

double parse_double(const std::string& token, int line_no, const std::string& source) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || !std::isfinite(v))
    throw ParseError(source + ":" + std::to_string(line_no) + ": not a number: '" + token + "'");
  return v;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("failed writing '" + path + "'");
}

Trajectory parse_tum_trajectory(std::istream& in, std::vector<std::string>* warnings, const std::string& source) {
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (tokens.size() != 8)
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 8 fields, found " +
                       std::to_string(tokens.size()));
    double v[8];
    for (int k = 0; k < 8; ++k) v[k] = parse_double(tokens[static_cast<std::size_t>(k)], line_no, source);
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double norm = q.norm();
    if (!(norm > 0.0)) throw ParseError(source + ":" + std::to_string(line_no) + ": zero quaternion");
    if (std::abs(norm - 1.0) > 1e-3 && warnings)
      warnings->push_back(source + ":" + std::to_string(line_no) + ": quaternion norm " + std::to_string(norm) +
                          " normalized");
    if (!traj.empty() && !(v[0] > traj.poses.back().timestamp))
      throw ParseError(source + ":" + std::to_string(line_no) + ": timestamps must increase");
    traj.poses.push_back({v[0], PoseSE3(q.normalized(), Eigen::Vector3d(v[1], v[2], v[3]))});
  }
  if (traj.empty()) throw EmptyInput(source + ": trajectory has no poses");
  return traj;
}

Trajectory read_tum_trajectory(const std::string& path, std::vector<std::string>* warnings) {
  std::istringstream in(read_file(path));
  return parse_tum_trajectory(in, warnings, path);
}

std::string format_tum_trajectory(const Trajectory& traj) {
  std::string out = "# timestamp tx ty tz qx qy qz qw\n";
  char line[320];
  for (const auto& p : traj.poses) {
    const auto& t = p.pose.translation();
    const auto& q = p.pose.rotation();
    std::snprintf(line, sizeof line, "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", p.timestamp, t.x(), t.y(), t.z(),
                  q.x(), q.y(), q.z(), q.w());
    out += line;
  }
  return out;
}

void write_tum_trajectory(const Trajectory& traj, const std::string& path) {
  write_file(path, format_tum_trajectory(traj));
}

std::string encode_ppm(const ImageRGB& image) {
  const int h = image.height(), w = image.width();
  if (h <= 0 || w <= 0) throw InvalidArgument("ppm: empty image");
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(3 * w * h));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) out.push_back(static_cast<char>(quantize(image.channels[ch](r, c))));
  return out;
}

ImageRGB decode_ppm(const std::string& bytes) {
  HeaderReader hdr(bytes, "ppm");
  if (hdr.token() != "P6") throw ParseError("ppm: bad magic (expected P6)");
  const int w = hdr.positive_int("width");
  const int h = hdr.positive_int("height");
  const int maxval = hdr.positive_int("maxval");
  if (maxval != 255) throw ParseError("ppm: only 8-bit (maxval 255) pixmaps are supported");
  const std::size_t start = hdr.payload_start();
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - start < need) throw ParseError("ppm: truncated payload");
  ImageRGB img(h, w);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) img.channels[ch](r, c) = *p++ / 255.0;
  return img;
}

ImageRGB read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }
void write_ppm(const ImageRGB& image, const std::string& path) { write_file(path, encode_ppm(image)); }

std::string encode_pbm(const BoolGrid& mask) {
  const auto h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  if (h <= 0 || w <= 0) throw InvalidArgument("pbm: empty mask");
  std::string out = "P4\n" + std::to_string(w) + " " + std::to_string(h) + "\n";
  const int row_bytes = (w + 7) / 8;
  for (int r = 0; r < h; ++r)
    for (int b = 0; b < row_bytes; ++b) {
      unsigned char byte = 0;
      for (int k = 0; k < 8; ++k) {
        const int c = 8 * b + k;
        if (c < w && mask(r, c)) byte |= static_cast<unsigned char>(0x80u >> k);
      }
      out.push_back(static_cast<char>(byte));
    }
  return out;
}

BoolGrid decode_pbm(const std::string& bytes) {
  HeaderReader hdr(bytes, "pbm");
  if (hdr.token() != "P4") throw ParseError("pbm: bad magic (expected P4)");
  const int w = hdr.positive_int("width");
  const int h = hdr.positive_int("height");
  const std::size_t start = hdr.payload_start();
  const int row_bytes = (w + 7) / 8;
  if (bytes.size() - start < static_cast<std::size_t>(row_bytes) * h) throw ParseError("pbm: truncated payload");
  BoolGrid mask(h, w);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) mask(r, c) = (p[r * row_bytes + c / 8] & (0x80u >> (c % 8))) != 0;
  return mask;
}

BoolGrid read_pbm(const std::string& path) { return decode_pbm(read_file(path)); }
void write_pbm(const BoolGrid& mask, const std::string& path) { write_file(path, encode_pbm(mask)); }

std::string encode_pfm(const FloatMap& map) {
  if (map.channels != 1 && map.channels != 3) throw InvalidArgument("pfm: channels must be 1 or 3");
  if (map.width <= 0 || map.height <= 0) throw InvalidArgument("pfm: empty map");
  if (map.data.size() != static_cast<std::size_t>(map.width) * map.height * map.channels)
    throw InvalidArgument("pfm: data size does not match dimensions");
  std::string out = std::string(map.channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(map.width) + " " +
                    std::to_string(map.height) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + map.data.size() * 4);
  char* p = out.data() + header;
  for (int r = map.height - 1; r >= 0; --r)  // bottom row first
    for (int c = 0; c < map.width; ++c)
      for (int ch = 0; ch < map.channels; ++ch, p += 4) float_to(p, map.at(r, c, ch));
  return out;
}

FloatMap decode_pfm(const std::string& bytes) {
  HeaderReader hdr(bytes, "pfm");
  const std::string magic = hdr.token();
  FloatMap map;
  if (magic == "PF") {
    map.channels = 3;
  } else if (magic == "Pf") {
    map.channels = 1;
  } else {
    throw ParseError("pfm: bad magic '" + magic + "'");
  }
  map.width = hdr.positive_int("width");
  map.height = hdr.positive_int("height");
  const std::string scale_token = hdr.token();
  char* end = nullptr;
  const double scale = std::strtod(scale_token.c_str(), &end);
  if (*end != '\0' || scale == 0.0 || !std::isfinite(scale)) throw ParseError("pfm: bad scale '" + scale_token + "'");
  const bool little = scale < 0.0;
  const std::size_t start = hdr.payload_start();
  const std::size_t count = static_cast<std::size_t>(map.width) * map.height * map.channels;
  if (bytes.size() - start < count * 4) throw ParseError("pfm: truncated payload");
  map.data.resize(count);
  const char* p = bytes.data() + start;
  for (int r = map.height - 1; r >= 0; --r)
    for (int c = 0; c < map.width; ++c)
      for (int ch = 0; ch < map.channels; ++ch, p += 4) map.at(r, c, ch) = float_from(p, little);
  return map;
}

FloatMap read_pfm(const std::string& path) { return decode_pfm(read_file(path)); }
void write_pfm(const FloatMap& map, const std::string& path) { write_file(path, encode_pfm(map)); }

Grid read_depth_pfm(const std::string& path) {
  const FloatMap m = read_pfm(path);
  if (m.channels != 1) throw ParseError(path + ": depth map must have one channel");
  Grid depth(m.height, m.width);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) depth(r, c) = m.at(r, c, 0);
  return depth;
}

void write_depth_pfm(const Grid& depth, const std::string& path) {
  FloatMap m{static_cast<int>(depth.cols()), static_cast<int>(depth.rows()), 1, {}};
  m.data.resize(static_cast<std::size_t>(depth.size()));
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      const double z = depth(r, c);
      m.at(r, c, 0) = std::isfinite(z) && z > 0.0 ? static_cast<float>(z) : 0.0f;
    }
  write_pfm(m, path);
}

FlowField read_flow_pfm(const std::string& path) {
  const FloatMap m = read_pfm(path);
  if (m.channels != 3) throw ParseError(path + ": flow map must have three channels");
  FlowField flow(m.height, m.width);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      flow.du(r, c) = m.at(r, c, 0);
      flow.dv(r, c) = m.at(r, c, 1);
      flow.valid(r, c) = m.at(r, c, 2) > 0.5f && std::isfinite(flow.du(r, c)) && std::isfinite(flow.dv(r, c));
    }
  return flow;
}

void write_flow_pfm(const FlowField& flow, const std::string& path) {
  FloatMap m{flow.width(), flow.height(), 3, {}};
  m.data.resize(static_cast<std::size_t>(m.width) * m.height * 3);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      const bool ok = flow.valid(r, c);
      m.at(r, c, 0) = ok ? static_cast<float>(flow.du(r, c)) : 0.0f;
      m.at(r, c, 1) = ok ? static_cast<float>(flow.dv(r, c)) : 0.0f;
      m.at(r, c, 2) = ok ? 1.0f : 0.0f;
    }
  write_pfm(m, path);
}

CameraIntrinsics read_intrinsics(const std::string& path) {
  std::istringstream in(read_file(path));
  CameraIntrinsics K;
  if (!(in >> K.fx >> K.fy >> K.cx >> K.cy >> K.width >> K.height))
    throw ParseError(path + ": expected 'fx fy cx cy W H'");
  std::string extra;
  if (in >> extra) throw ParseError(path + ": trailing content '" + extra + "'");
  K.validate();
  return K;
}

void write_intrinsics(const CameraIntrinsics& K, const std::string& path) {
  char line[200];
  std::snprintf(line, sizeof line, "%.17g %.17g %.17g %.17g %d %d\n", K.fx, K.fy, K.cx, K.cy, K.width, K.height);
  write_file(path, line);
}

std::vector<double> read_times(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<double> times;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    times.push_back(parse_double(token, line_no, path));
  }
  if (times.empty()) throw EmptyInput(path + ": no timestamps");
  return times;
}

void write_times(const std::vector<double>& times, const std::string& path) {
  std::string out;
  char line[64];
  for (double t : times) {
    std::snprintf(line, sizeof line, "%.9f\n", t);
    out += line;
  }
  write_file(path, out);
}

std::string frame_name(int frame_id, const std::string& extension) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d", frame_id);
  return buf + extension;
}

std::optional<SemanticMask> load_semantic_mask(const std::string& dir, int frame_id,
                                               const std::vector<std::string>& classes) {
  const auto path = std::filesystem::path(dir) / frame_name(frame_id, ".pbm");
  if (!std::filesystem::exists(path)) return std::nullopt;
  return SemanticMask{read_pbm(path.string()), classes};
}

}  // namespace dynrecon

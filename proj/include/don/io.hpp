#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "don/correspond.hpp"
#include "don/descriptor.hpp"
#include "don/error.hpp"
#include "don/fusion.hpp"
#include "don/geometry.hpp"
#include "don/keypoints.hpp"
#include "don/policy.hpp"
#include "don/raster.hpp"
#include "don/scenegen.hpp"

namespace don::io {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;
inline constexpr std::uint32_t kParamVersion = 1;
inline constexpr int kPolicyVersion = 1;

// ---------------------------------------------------------------- files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingArtifact, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::MissingArtifact, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(Errc::MissingArtifact, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// 17 significant digits: parses back to exactly `v`.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u;
  std::memcpy(&u, &value, sizeof u);
  for (std::size_t i = 0; i < sizeof u; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xffu));
}

/// Cursor over a file's bytes; every failure reports the file and offset.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::FormatError, name_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::string_view take(std::size_t n) {
    if (remaining() < n) fail("truncated data, needed " + std::to_string(n) + " bytes");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <class T>
  T get_le(bool big_endian = false) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    auto bytes = take(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      std::size_t src = big_endian ? sizeof(U) - 1 - i : i;
      u |= static_cast<U>(static_cast<unsigned char>(bytes[src])) << (8 * i);
    }
    T v;
    std::memcpy(&v, &u, sizeof v);
    return v;
  }

  /// Netpbm-style header token: skips whitespace and '#' comments.
  std::string token() {
    while (pos_ < data_.size()) {
      char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
    std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (start == pos_) fail("missing header field");
    return std::string(data_.substr(start, pos_ - start));
  }

  int positive_int() {
    std::size_t at = pos_;
    std::string t = token();
    char* end = nullptr;
    long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0 || v > (1 << 20)) {
      pos_ = at;
      fail("bad integer '" + t + "'");
    }
    return static_cast<int>(v);
  }

  /// Exactly one whitespace byte separates a netpbm header from its payload.
  void single_space() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_]))) fail("expected whitespace");
    ++pos_;
  }

  void expect_end() const {
    if (pos_ != data_.size()) fail("trailing bytes");
  }

 private:
  std::string_view data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------- rasters

/// Binary PPM, maxval 255.
inline std::string encode_ppm(const RgbImage& img) {
  if (img.channels() != 3) throw Error(Errc::InvalidArgument, "PPM needs 3 channels");
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  for (double v : img.data()) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  return out;
}

inline RgbImage decode_ppm(std::string_view bytes, const std::string& name = "ppm") {
  detail::ByteReader r(bytes, name);
  if (r.token() != "P6") r.fail("not a binary PPM");
  int w = r.positive_int(), h = r.positive_int(), maxval = r.positive_int();
  if (maxval != 255) r.fail("maxval must be 255");
  r.single_space();
  RgbImage img(w, h, 3);
  auto payload = r.take(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = static_cast<unsigned char>(payload[i]) / 255.0;
  r.expect_end();
  return img;
}

/// Grayscale PFM, little-endian (scale -1), rows stored bottom to top.
inline std::string encode_pfm(const DepthImage& img) {
  std::string out = "Pf\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n-1.0\n";
  for (int row = img.height() - 1; row >= 0; --row)
    for (int col = 0; col < img.width(); ++col) detail::put_le(out, img(col, row));
  return out;
}

inline DepthImage decode_pfm(std::string_view bytes, const std::string& name = "pfm") {
  detail::ByteReader r(bytes, name);
  if (r.token() != "Pf") r.fail("not a grayscale PFM");
  int w = r.positive_int(), h = r.positive_int();
  std::string scale_tok = r.token();
  char* end = nullptr;
  double scale = std::strtod(scale_tok.c_str(), &end);
  if (*end != '\0' || scale == 0.0 || !std::isfinite(scale)) r.fail("bad scale '" + scale_tok + "'");
  r.single_space();
  const bool big_endian = scale > 0.0;
  DepthImage img(w, h);
  for (int row = h - 1; row >= 0; --row)
    for (int col = 0; col < w; ++col) img(col, row) = r.get_le<float>(big_endian);
  r.expect_end();
  return img;
}

/// Binary PGM, maxval 255.
inline std::string encode_pgm(const Raster<std::uint8_t>& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  for (auto v : img.data()) out.push_back(static_cast<char>(v));
  return out;
}

inline Raster<std::uint8_t> decode_pgm(std::string_view bytes, const std::string& name = "pgm") {
  detail::ByteReader r(bytes, name);
  if (r.token() != "P5") r.fail("not a binary PGM");
  int w = r.positive_int(), h = r.positive_int(), maxval = r.positive_int();
  if (maxval != 255) r.fail("maxval must be 255");
  r.single_space();
  Raster<std::uint8_t> img(w, h);
  auto payload = r.take(img.size());
  std::memcpy(img.data().data(), payload.data(), img.size());
  r.expect_end();
  return img;
}

/// Mask raster with the object label at set pixels.
inline std::string encode_mask(const ObjectMask& m) {
  if (m.object_label < 1 || m.object_label > 255) throw Error(Errc::InvalidArgument, "mask label out of PGM range");
  Raster<std::uint8_t> img(m.bits.width(), m.bits.height());
  for (std::size_t i = 0; i < img.size(); ++i)
    img.data()[i] = m.bits.data()[i] ? static_cast<std::uint8_t>(m.object_label) : 0;
  return encode_pgm(img);
}

inline ObjectMask decode_mask(std::string_view bytes, int frame_id, int label, const std::string& name = "mask") {
  auto img = decode_pgm(bytes, name);
  ObjectMask m{frame_id, label, BitMask(img.width(), img.height())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    auto v = img.data()[i];
    if (v != 0 && v != label) {
      throw Error(Errc::FormatError, name + ": pixel value " + std::to_string(v) + " in mask of label " +
                                         std::to_string(label) + " at byte offset " + std::to_string(i));
    }
    m.bits.data()[i] = v ? 1 : 0;
  }
  return m;
}

/// 8-bit rendering of an activation map, scaled so the peak is 255.
inline Raster<std::uint8_t> activation_raster(const ActivationMap& act) {
  Raster<std::uint8_t> img(act.width, act.height);
  double peak = *std::max_element(act.values.begin(), act.values.end());
  for (std::size_t i = 0; i < img.size(); ++i)
    img.data()[i] = static_cast<std::uint8_t>(peak > 0.0 ? std::lround(255.0 * act.values[i] / peak) : 0);
  return img;
}

// ---------------------------------------------------------------- descriptors

/// DONPARAM: magic, then u32 version, patch_radius, D, hidden, flags, then
/// float64 blocks w1 (F x H), b1, w2 (H x D), b2, each row-major.
inline std::string encode_params(const EncoderParams& p) {
  std::string out = "DONPARAM";
  const auto& c = p.config;
  detail::put_le(out, kParamVersion);
  detail::put_le(out, static_cast<std::uint32_t>(c.patch_radius));
  detail::put_le(out, static_cast<std::uint32_t>(c.descriptor_dim));
  detail::put_le(out, static_cast<std::uint32_t>(c.hidden));
  detail::put_le(out, static_cast<std::uint32_t>(c.use_pixel_coords ? 1u : 0u));
  auto put_matrix = [&out](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col) detail::put_le(out, m(r, col));
  };
  put_matrix(p.w1);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) detail::put_le(out, p.b1[i]);
  put_matrix(p.w2);
  for (Eigen::Index i = 0; i < p.b2.size(); ++i) detail::put_le(out, p.b2[i]);
  return out;
}

inline EncoderParams decode_params(std::string_view bytes, const std::string& name = "params") {
  detail::ByteReader r(bytes, name);
  if (r.take(8) != "DONPARAM") r.fail("bad magic");
  auto version = r.get_le<std::uint32_t>();
  if (version != kParamVersion) {
    throw Error(Errc::VersionMismatch, name + ": parameter file version " + std::to_string(version) + ", expected " +
                                           std::to_string(kParamVersion));
  }
  EncoderConfig c;
  c.patch_radius = static_cast<int>(r.get_le<std::uint32_t>());
  c.descriptor_dim = static_cast<int>(r.get_le<std::uint32_t>());
  c.hidden = static_cast<int>(r.get_le<std::uint32_t>());
  auto flags = r.get_le<std::uint32_t>();
  if (flags > 1u) r.fail("unknown feature flags");
  c.use_pixel_coords = flags & 1u;
  if (c.patch_radius > 64 || c.descriptor_dim < 1 || c.descriptor_dim > 4096 || c.hidden < 1 || c.hidden > 65536) {
    r.fail("implausible header");
  }
  EncoderParams p = EncoderParams::zeros(c);
  auto get_matrix = [&r](Eigen::MatrixXd& m) {
    for (Eigen::Index row = 0; row < m.rows(); ++row)
      for (Eigen::Index col = 0; col < m.cols(); ++col) m(row, col) = r.get_le<double>();
  };
  get_matrix(p.w1);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1[i] = r.get_le<double>();
  get_matrix(p.w2);
  for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2[i] = r.get_le<double>();
  r.expect_end();
  return p;
}

/// DONDESC: magic, u32 H, W, D, then H*W*D float32, row-major with D fastest.
inline std::string encode_descriptors(const DescriptorMap& m) {
  std::string out = "DONDESC";
  detail::put_le(out, static_cast<std::uint32_t>(m.height()));
  detail::put_le(out, static_cast<std::uint32_t>(m.width()));
  detail::put_le(out, static_cast<std::uint32_t>(m.dim()));
  for (double v : m.values()) detail::put_le(out, static_cast<float>(v));
  return out;
}

inline DescriptorMap decode_descriptors(std::string_view bytes, const std::string& name = "descriptors") {
  detail::ByteReader r(bytes, name);
  if (r.take(7) != "DONDESC") r.fail("bad magic");
  auto h = r.get_le<std::uint32_t>();
  auto w = r.get_le<std::uint32_t>();
  auto d = r.get_le<std::uint32_t>();
  if (h == 0 || w == 0 || d == 0 || static_cast<std::uint64_t>(h) * w * d * 4 != r.remaining()) {
    r.fail("header does not match payload size");
  }
  DescriptorMap m(static_cast<int>(w), static_cast<int>(h), static_cast<int>(d));
  for (auto& v : m.values()) v = r.get_le<float>();
  return m;
}

// ---------------------------------------------------------------- trajectories

struct FrameEntry {
  int frame_id = 0;
  std::string rgb;
  std::string depth;
  std::string ids;  // oracle id raster, may be empty
  Pose pose;
  CameraIntrinsics intr;
  std::vector<std::string> masks;  // masks[label - 1]
};

/// Text index of a trajectory directory; paths are relative to it.
struct TrajectoryManifest {
  int version = kManifestVersion;
  std::uint64_t scene_digest = 0;
  int label_count = 0;
  std::vector<FrameEntry> frames;
};

inline std::string encode_manifest(const TrajectoryManifest& m) {
  std::ostringstream s;
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(m.scene_digest));
  s << "DONTRAJ " << m.version << "\n";
  s << "scene_digest " << digest << "\n";
  s << "label_count " << m.label_count << "\n";
  s << "frame_count " << m.frames.size() << "\n";
  for (const auto& f : m.frames) {
    s << "frame " << f.frame_id << "\n";
    s << "rgb " << f.rgb << "\n";
    s << "depth " << f.depth << "\n";
    if (!f.ids.empty()) s << "ids " << f.ids << "\n";
    s << "pose";
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double v = r < 3 ? (c < 3 ? f.pose.rotation()(r, c) : f.pose.translation()[r]) : (c == 3 ? 1.0 : 0.0);
        s << ' ' << format_real(v);
      }
    s << "\n";
    s << "intrinsics " << format_real(f.intr.fx) << ' ' << format_real(f.intr.fy) << ' ' << format_real(f.intr.cx)
      << ' ' << format_real(f.intr.cy) << ' ' << f.intr.width << ' ' << f.intr.height << "\n";
    for (std::size_t l = 0; l < f.masks.size(); ++l) s << "mask " << l + 1 << ' ' << f.masks[l] << "\n";
    s << "end\n";
  }
  return s.str();
}

namespace detail {

/// Line-oriented reader for the manifest; errors carry the byte offset of the line.
class LineReader {
 public:
  LineReader(std::string_view text, std::string name) : text_(text), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& what, Errc code = Errc::FormatError) const {
    throw Error(code, name_ + ": " + what + " at byte offset " + std::to_string(line_start_));
  }

  bool done() const noexcept { return pos_ >= text_.size(); }

  std::vector<std::string> next() {
    if (done()) fail("unexpected end of file");
    line_start_ = pos_;
    std::size_t nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) nl = text_.size();
    std::string line(text_.substr(pos_, nl - pos_));
    pos_ = nl + 1;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.empty()) fail("blank line");
    return fields;
  }

  std::vector<std::string> expect(std::string_view key, std::size_t count) {
    auto f = next();
    if (f[0] != key) fail("expected '" + std::string(key) + "', found '" + f[0] + "'");
    if (f.size() != count + 1) fail("'" + std::string(key) + "' needs " + std::to_string(count) + " fields");
    return f;
  }

  double real(const std::string& s) const {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (*end != '\0' || !std::isfinite(v)) fail("bad real '" + s + "'");
    return v;
  }

  long integer(const std::string& s) const {
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (*end != '\0' || s.empty()) fail("bad integer '" + s + "'");
    return v;
  }

  bool peek_is(std::string_view key) const {
    return text_.substr(pos_, key.size()) == key && text_.size() > pos_ + key.size() &&
           (text_[pos_ + key.size()] == ' ' || text_[pos_ + key.size()] == '\n');
  }

 private:
  std::string_view text_;
  std::string name_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

inline bool safe_relative(const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || p.empty()) return false;
  for (const auto& part : path)
    if (part == "..") return false;
  return true;
}

}  // namespace detail

inline TrajectoryManifest decode_manifest(std::string_view text, const std::string& name = "manifest") {
  detail::LineReader r(text, name);
  TrajectoryManifest m;
  auto head = r.expect("DONTRAJ", 1);
  m.version = static_cast<int>(r.integer(head[1]));
  if (m.version != kManifestVersion) {
    r.fail("manifest version " + std::to_string(m.version) + ", expected " + std::to_string(kManifestVersion),
           Errc::VersionMismatch);
  }
  auto dg = r.expect("scene_digest", 1);
  {
    char* end = nullptr;
    m.scene_digest = std::strtoull(dg[1].c_str(), &end, 16);
    if (*end != '\0' || dg[1].size() != 16) r.fail("bad scene digest");
  }
  m.label_count = static_cast<int>(r.integer(r.expect("label_count", 1)[1]));
  if (m.label_count < 0 || m.label_count > 255) r.fail("label_count out of range");
  long n = r.integer(r.expect("frame_count", 1)[1]);
  if (n < 0) r.fail("negative frame_count");
  for (long i = 0; i < n; ++i) {
    FrameEntry f;
    f.frame_id = static_cast<int>(r.integer(r.expect("frame", 1)[1]));
    if (!m.frames.empty() && f.frame_id <= m.frames.back().frame_id) r.fail("frame ids must be unique and sorted");
    f.rgb = r.expect("rgb", 1)[1];
    f.depth = r.expect("depth", 1)[1];
    if (r.peek_is("ids")) f.ids = r.expect("ids", 1)[1];
    auto pf = r.expect("pose", 16);
    Mat3 rot;
    Vec3 t;
    double last_row[4];
    for (int k = 0; k < 16; ++k) {
      double v = r.real(pf[static_cast<std::size_t>(k) + 1]);
      int row = k / 4, col = k % 4;
      if (row == 3) {
        last_row[col] = v;
      } else if (col == 3) {
        t[row] = v;
      } else {
        rot(row, col) = v;
      }
    }
    if (last_row[0] != 0.0 || last_row[1] != 0.0 || last_row[2] != 0.0 || last_row[3] != 1.0) {
      r.fail("pose bottom row must be 0 0 0 1");
    }
    if (!Pose::is_rotation(rot)) r.fail("pose rotation is not orthonormal");
    f.pose = Pose(rot, t);
    auto in = r.expect("intrinsics", 6);
    f.intr.fx = r.real(in[1]);
    f.intr.fy = r.real(in[2]);
    f.intr.cx = r.real(in[3]);
    f.intr.cy = r.real(in[4]);
    f.intr.width = static_cast<int>(r.integer(in[5]));
    f.intr.height = static_cast<int>(r.integer(in[6]));
    try {
      f.intr.validate();
    } catch (const Error& e) {
      r.fail(e.what());
    }
    for (int l = 1; l <= m.label_count; ++l) {
      auto mf = r.expect("mask", 2);
      if (r.integer(mf[1]) != l) r.fail("masks must be listed by ascending label");
      f.masks.push_back(mf[2]);
    }
    r.expect("end", 0);
    for (const auto* p : {&f.rgb, &f.depth}) {
      if (!detail::safe_relative(*p)) r.fail("unsafe path '" + *p + "'");
    }
    for (const auto& p : f.masks)
      if (!detail::safe_relative(p)) r.fail("unsafe path '" + p + "'");
    if (!f.ids.empty() && !detail::safe_relative(f.ids)) r.fail("unsafe path '" + f.ids + "'");
    m.frames.push_back(std::move(f));
  }
  if (!r.done()) r.fail("trailing content");
  return m;
}

struct LoadedTrajectory {
  TrajectoryManifest manifest;
  Trajectory trajectory;
};

namespace detail {
inline std::string frame_stem(const char* kind, int frame_id) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%06d", kind, frame_id);
  return buf;
}
}  // namespace detail

/// Writes every raster plus manifest.txt into `dir`. Masks are written when
/// the trajectory carries them, oracle id rasters when present.
inline TrajectoryManifest save_trajectory(const fs::path& dir, const Trajectory& traj, std::uint64_t scene_digest) {
  fs::create_directories(dir);
  TrajectoryManifest m;
  m.scene_digest = scene_digest;
  m.label_count = traj.label_count;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Frame& fr = traj.frames[i];
    FrameEntry e;
    e.frame_id = fr.frame_id;
    e.pose = fr.pose;
    e.intr = fr.intr;
    e.rgb = detail::frame_stem("rgb", fr.frame_id) + ".ppm";
    e.depth = detail::frame_stem("depth", fr.frame_id) + ".pfm";
    atomic_write(dir / e.rgb, encode_ppm(fr.rgb));
    atomic_write(dir / e.depth, encode_pfm(fr.depth));
    if (i < traj.ids.size() && !traj.ids[i].empty()) {
      e.ids = detail::frame_stem("ids", fr.frame_id) + ".pgm";
      atomic_write(dir / e.ids, encode_pgm(traj.ids[i]));
    }
    for (int l = 1; l <= traj.label_count; ++l) {
      const ObjectMask* mk = traj.mask(i, l);
      if (!mk) throw Error(Errc::InvalidArgument, "trajectory lacks mask for label " + std::to_string(l));
      std::string p = detail::frame_stem("mask", fr.frame_id) + "_" + std::to_string(l) + ".pgm";
      atomic_write(dir / p, encode_mask(*mk));
      e.masks.push_back(p);
    }
    m.frames.push_back(std::move(e));
  }
  atomic_write(dir / "manifest.txt", encode_manifest(m));
  return m;
}

inline LoadedTrajectory load_trajectory(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.txt";
  LoadedTrajectory out;
  out.manifest = decode_manifest(read_file(mpath), mpath.string());
  auto& t = out.trajectory;
  t.label_count = out.manifest.label_count;
  bool any_ids = false;
  for (const auto& e : out.manifest.frames) any_ids = any_ids || !e.ids.empty();
  for (const auto& e : out.manifest.frames) {
    Frame f;
    f.frame_id = e.frame_id;
    f.pose = e.pose;
    f.intr = e.intr;
    f.rgb = decode_ppm(read_file(dir / e.rgb), (dir / e.rgb).string());
    f.depth = decode_pfm(read_file(dir / e.depth), (dir / e.depth).string());
    if (f.rgb.width() != e.intr.width || f.rgb.height() != e.intr.height || f.depth.width() != e.intr.width ||
        f.depth.height() != e.intr.height) {
      throw Error(Errc::FormatError, (dir / e.rgb).string() + ": raster size differs from intrinsics at byte offset 0");
    }
    std::vector<ObjectMask> masks;
    for (std::size_t l = 0; l < e.masks.size(); ++l) {
      masks.push_back(decode_mask(read_file(dir / e.masks[l]), e.frame_id, static_cast<int>(l) + 1,
                                  (dir / e.masks[l]).string()));
    }
    t.masks.push_back(std::move(masks));
    if (any_ids) {
      if (e.ids.empty()) throw Error(Errc::FormatError, mpath.string() + ": oracle ids missing for some frames");
      t.ids.push_back(decode_pgm(read_file(dir / e.ids), (dir / e.ids).string()));
    }
    t.frames.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------- csv

namespace detail {

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Header-checked CSV rows; failures report the byte offset of the row.
class CsvReader {
 public:
  CsvReader(std::string_view text, std::string name) : text_(text), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::FormatError, name_ + ": " + what + " at byte offset " + std::to_string(row_start_));
  }

  std::vector<std::string> header() { return row_or_fail(); }

  bool next(std::vector<std::string>& fields, std::size_t expected) {
    if (pos_ >= text_.size()) return false;
    fields = row_or_fail();
    if (fields.size() != expected) fail("expected " + std::to_string(expected) + " columns");
    return true;
  }

  double real(const std::string& s) const {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') fail("bad real '" + s + "'");
    return v;
  }

  long integer(const std::string& s) const {
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') fail("bad integer '" + s + "'");
    return v;
  }

 private:
  std::vector<std::string> row_or_fail() {
    if (pos_ >= text_.size()) fail("missing row");
    row_start_ = pos_;
    std::size_t nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) nl = text_.size();
    auto line = text_.substr(pos_, nl - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = nl + 1;
    return split_csv(line);
  }

  std::string_view text_;
  std::string name_;
  std::size_t pos_ = 0;
  std::size_t row_start_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kMatchHeader = "frame_a,frame_b,label,ua_u,ua_v,ub_u,ub_v,kind";

/// Match rows of a sample come first, then its non-match rows tagged with the
/// index of the match they belong to.
inline std::string encode_matches(std::span<const TrainingSample> samples, const Trajectory& traj_a,
                                  const Trajectory& traj_b) {
  std::string out(kMatchHeader);
  out += "\n";
  for (const auto& s : samples) {
    const int fa = traj_a.frames[static_cast<std::size_t>(s.frame_a)].frame_id;
    const int fb = traj_b.frames[static_cast<std::size_t>(s.frame_b)].frame_id;
    auto prefix = std::to_string(fa) + "," + std::to_string(fb) + "," + std::to_string(s.target_label) + ",";
    for (const auto& m : s.matches) {
      out += prefix + format_real(m.u_a.u) + "," + format_real(m.u_a.v) + "," + format_real(m.u_b.u) + "," +
             format_real(m.u_b.v) + ",match\n";
    }
    for (std::size_t i = 0; i < s.non_matches.size(); ++i)
      for (const auto& nm : s.non_matches[i]) {
        const auto& m = s.matches[i];
        out += prefix + format_real(m.u_a.u) + "," + format_real(m.u_a.v) + "," + format_real(nm.u) + "," +
               format_real(nm.v) + ",nonmatch:" + std::to_string(i) + "\n";
      }
  }
  return out;
}

/// Parsed match file entry; frame fields hold frame ids, not indices.
inline std::vector<TrainingSample> decode_matches(std::string_view text, const std::string& name = "matches") {
  detail::CsvReader r(text, name);
  auto head = r.header();
  if (detail::split_csv(kMatchHeader) != head) r.fail("unexpected header");
  std::vector<TrainingSample> out;
  std::vector<std::string> f;
  bool in_non_matches = false;
  while (r.next(f, 8)) {
    int fa = static_cast<int>(r.integer(f[0])), fb = static_cast<int>(r.integer(f[1]));
    int label = static_cast<int>(r.integer(f[2]));
    PixelCoord ua{r.real(f[3]), r.real(f[4])}, ub{r.real(f[5]), r.real(f[6])};
    bool same_key = !out.empty() && out.back().frame_a == fa && out.back().frame_b == fb &&
                    out.back().target_label == label;
    if (f[7] == "match") {
      if (!same_key || in_non_matches) {
        out.emplace_back();
        out.back().frame_a = fa;
        out.back().frame_b = fb;
        out.back().target_label = label;
        in_non_matches = false;
      }
      out.back().matches.push_back({ua, ub});
      out.back().non_matches.emplace_back();
    } else if (f[7].rfind("nonmatch:", 0) == 0) {
      if (!same_key) r.fail("non-match without a preceding match");
      long i = r.integer(f[7].substr(9));
      auto& s = out.back();
      if (i < 0 || i >= static_cast<long>(s.matches.size())) r.fail("non-match index out of range");
      const auto& m = s.matches[static_cast<std::size_t>(i)];
      if (m.u_a.u != ua.u || m.u_a.v != ua.v) r.fail("non-match source differs from its match");
      s.non_matches[static_cast<std::size_t>(i)].push_back(ub);
      in_non_matches = true;
    } else {
      r.fail("unknown kind '" + f[7] + "'");
    }
  }
  return out;
}

inline constexpr std::string_view kKeypointHeader =
    "frame_id,camera,label,ref_idx,u,v,depth,x,y,z,u_norm,v_norm,confidence,min_distance,flags";

struct KeypointRow {
  int frame_id = 0;
  int camera = 0;
  int label = 0;
  int ref_idx = 0;
  Keypoint kp;
};

inline std::string encode_keypoints(std::span<const KeypointRow> rows) {
  std::string out(kKeypointHeader);
  out += "\n";
  for (const auto& r : rows) {
    const auto& k = r.kp;
    out += std::to_string(r.frame_id) + "," + std::to_string(r.camera) + "," + std::to_string(r.label) + "," +
           std::to_string(r.ref_idx) + "," + format_real(k.pixel.u) + "," + format_real(k.pixel.v) + "," +
           format_real(k.depth) + "," + format_real(k.lift.x()) + "," + format_real(k.lift.y()) + "," +
           format_real(k.lift.z()) + "," + format_real(k.normalized[0]) + "," + format_real(k.normalized[1]) + "," +
           format_real(k.confidence) + "," + format_real(k.min_distance) + "," + std::to_string(k.flags) + "\n";
  }
  return out;
}

inline std::vector<KeypointRow> decode_keypoints(std::string_view text, const std::string& name = "keypoints") {
  detail::CsvReader r(text, name);
  if (detail::split_csv(kKeypointHeader) != r.header()) r.fail("unexpected header");
  std::vector<KeypointRow> out;
  std::vector<std::string> f;
  while (r.next(f, 15)) {
    KeypointRow row;
    row.frame_id = static_cast<int>(r.integer(f[0]));
    row.camera = static_cast<int>(r.integer(f[1]));
    row.label = static_cast<int>(r.integer(f[2]));
    row.ref_idx = static_cast<int>(r.integer(f[3]));
    row.kp.pixel = {r.real(f[4]), r.real(f[5])};
    row.kp.depth = r.real(f[6]);
    row.kp.lift = Vec3(r.real(f[7]), r.real(f[8]), r.real(f[9]));
    row.kp.normalized = {r.real(f[10]), r.real(f[11])};
    row.kp.confidence = r.real(f[12]);
    row.kp.min_distance = r.real(f[13]);
    row.kp.flags = static_cast<std::uint32_t>(r.integer(f[14]));
    out.push_back(row);
  }
  return out;
}

/// Reference set as CSV: label, index within the set, source frame, pixel, descriptor.
inline std::string encode_references(const ReferenceSet& refs) {
  std::string out = "label,ref_idx,frame_id,u,v";
  for (int k = 0; k < refs.dim(); ++k) out += ",d" + std::to_string(k);
  out += "\n";
  for (std::size_t i = 0; i < refs.entries.size(); ++i) {
    const auto& e = refs.entries[i];
    out += std::to_string(e.object_label) + "," + std::to_string(i) + "," + std::to_string(e.frame_id) + "," +
           format_real(e.pixel.u) + "," + format_real(e.pixel.v);
    for (double d : e.descriptor) out += "," + format_real(d);
    out += "\n";
  }
  return out;
}

inline ReferenceSet decode_references(std::string_view text, const std::string& name = "references") {
  detail::CsvReader r(text, name);
  auto head = r.header();
  if (head.size() < 6 || head[0] != "label" || head[1] != "ref_idx" || head[2] != "frame_id" || head[3] != "u" ||
      head[4] != "v") {
    r.fail("unexpected header");
  }
  for (std::size_t k = 5; k < head.size(); ++k)
    if (head[k] != "d" + std::to_string(k - 5)) r.fail("unexpected descriptor column '" + head[k] + "'");
  ReferenceSet refs;
  std::vector<std::string> f;
  while (r.next(f, head.size())) {
    if (r.integer(f[1]) != static_cast<long>(refs.entries.size())) r.fail("ref_idx out of order");
    ReferenceEntry e;
    e.object_label = static_cast<int>(r.integer(f[0]));
    e.frame_id = static_cast<int>(r.integer(f[2]));
    e.pixel = {r.real(f[3]), r.real(f[4])};
    for (std::size_t k = 5; k < f.size(); ++k) e.descriptor.push_back(r.real(f[k]));
    refs.entries.push_back(std::move(e));
  }
  return refs;
}

inline std::string encode_cloud(const LabeledCloud& cloud) {
  std::string out = "x,y,z,label\n";
  for (const auto& p : cloud.points) {
    out += format_real(p.position.x()) + "," + format_real(p.position.y()) + "," + format_real(p.position.z()) + "," +
           std::to_string(p.label) + "\n";
  }
  return out;
}

inline LabeledCloud decode_cloud(std::string_view text, const std::string& name = "cloud") {
  detail::CsvReader r(text, name);
  if (r.header() != std::vector<std::string>{"x", "y", "z", "label"}) r.fail("unexpected header");
  LabeledCloud c;
  std::vector<std::string> f;
  while (r.next(f, 4)) {
    LabeledPoint p{Vec3(r.real(f[0]), r.real(f[1]), r.real(f[2])), static_cast<int>(r.integer(f[3]))};
    if (p.label < 1) r.fail("labels start at 1");
    c.label_count = std::max(c.label_count, p.label);
    c.points.push_back(p);
  }
  return c;
}

/// One demonstration per file: observation columns kp*/pr*, then the 6 action columns.
inline std::string encode_demonstration(const Demonstration& demo) {
  if (demo.empty()) throw Error(Errc::EmptyDataset, "demonstration has no steps");
  std::string out;
  for (std::size_t i = 0; i < demo.front().obs.keypoints.size(); ++i) out += "kp" + std::to_string(i) + ",";
  for (std::size_t i = 0; i < demo.front().obs.proprio.size(); ++i) out += "pr" + std::to_string(i) + ",";
  out += "dx,dy,dz,rx,ry,rz\n";
  for (const auto& st : demo) {
    for (double v : st.obs.keypoints) out += format_real(v) + ",";
    for (double v : st.obs.proprio) out += format_real(v) + ",";
    for (int k = 0; k < kActionDim; ++k) out += format_real(st.action[k]) + (k + 1 < kActionDim ? "," : "\n");
  }
  return out;
}

inline Demonstration decode_demonstration(std::string_view text, const std::string& name = "demonstration") {
  detail::CsvReader r(text, name);
  auto head = r.header();
  static const std::vector<std::string> action_cols{"dx", "dy", "dz", "rx", "ry", "rz"};
  if (head.size() < action_cols.size() ||
      !std::equal(action_cols.begin(), action_cols.end(), head.end() - static_cast<std::ptrdiff_t>(action_cols.size()))) {
    r.fail("header must end with the action columns");
  }
  std::size_t nkp = 0, npr = 0;
  for (std::size_t i = 0; i + action_cols.size() < head.size(); ++i) {
    if (npr == 0 && head[i] == "kp" + std::to_string(nkp)) {
      ++nkp;
    } else if (head[i] == "pr" + std::to_string(npr)) {
      ++npr;
    } else {
      r.fail("unexpected observation column '" + head[i] + "'");
    }
  }
  Demonstration demo;
  std::vector<std::string> f;
  while (r.next(f, head.size())) {
    Step st;
    std::size_t c = 0;
    for (std::size_t i = 0; i < nkp; ++i) st.obs.keypoints.push_back(r.real(f[c++]));
    for (std::size_t i = 0; i < npr; ++i) st.obs.proprio.push_back(r.real(f[c++]));
    for (int k = 0; k < kActionDim; ++k) st.action[k] = r.real(f[c++]);
    demo.push_back(std::move(st));
  }
  if (demo.empty()) r.fail("demonstration has no steps");
  return demo;
}

inline std::string encode_policy(const PolicyParams& p) {
  std::ostringstream s;
  s << "DONPOLICY " << kPolicyVersion << "\n";
  s << "observation_dim " << p.observation_dim() << "\n";
  s << "sigma_trans " << format_real(p.sigma_trans) << "\n";
  s << "sigma_rot " << format_real(p.sigma_rot) << "\n";
  for (Eigen::Index r = 0; r < p.weights.rows(); ++r) {
    s << "w";
    for (Eigen::Index c = 0; c < p.weights.cols(); ++c) s << ' ' << format_real(p.weights(r, c));
    s << "\n";
  }
  s << "b";
  for (int k = 0; k < kActionDim; ++k) s << ' ' << format_real(p.bias[k]);
  s << "\n";
  return s.str();
}

inline PolicyParams decode_policy(std::string_view text, const std::string& name = "policy") {
  detail::LineReader r(text, name);
  long version = r.integer(r.expect("DONPOLICY", 1)[1]);
  if (version != kPolicyVersion) r.fail("policy version " + std::to_string(version), Errc::VersionMismatch);
  long dim = r.integer(r.expect("observation_dim", 1)[1]);
  if (dim < 1 || dim > 1'000'000) r.fail("bad observation_dim");
  PolicyParams p = PolicyParams::zeros(static_cast<int>(dim));
  p.sigma_trans = r.real(r.expect("sigma_trans", 1)[1]);
  p.sigma_rot = r.real(r.expect("sigma_rot", 1)[1]);
  if (!(p.sigma_trans > 0.0 && p.sigma_rot > 0.0)) r.fail("sigmas must be positive");
  for (long i = 0; i < dim; ++i) {
    auto f = r.expect("w", kActionDim);
    for (int k = 0; k < kActionDim; ++k) p.weights(i, k) = r.real(f[static_cast<std::size_t>(k) + 1]);
  }
  auto b = r.expect("b", kActionDim);
  for (int k = 0; k < kActionDim; ++k) p.bias[k] = r.real(b[static_cast<std::size_t>(k) + 1]);
  if (!r.done()) r.fail("trailing content");
  return p;
}

}  // namespace don::io

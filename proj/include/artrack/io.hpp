#pragma once

// Text and image formats: OBJ meshes with a JSON rig sidecar, 16-bit PGM
// or raw depth, 8-bit PGM masks, detection lists, and pose/joint CSVs.

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "artrack/model.hpp"
#include "artrack/salient.hpp"

namespace artrack {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("failed writing " + p.string());
}

/// Shortest decimal that reads back to the same double.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n' ? 1 : 0;
    throw ParseError(what + ": " + e.what(), line);
  }
}

inline Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace detail

// ---------------------------------------------------------------------------
// OBJ

/// Reads `v` and `f` records (faces must be triangles; `a/b/c` index forms
/// accepted, negative indices are relative). Other records are ignored.
inline TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw ParseError("malformed vertex", lineno);
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int i = 0;
        try {
          std::size_t used = 0;
          i = std::stoi(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw ParseError("malformed face index '" + tok + "'", lineno);
        }
        const int n = static_cast<int>(m.vertices.size());
        i = i < 0 ? n + i : i - 1;
        if (i < 0 || i >= n) throw ParseError("face index out of range", lineno);
        idx.push_back(i);
      }
      if (idx.size() != 3) throw ParseError("only triangular faces are supported", lineno);
      m.triangles.push_back({idx[0], idx[1], idx[2]});
    }
  }
  return m;
}

inline std::string format_obj(const TriangleMesh& m) {
  std::string s;
  for (const Vec3& v : m.vertices)
    s += "v " + detail::num(v.x()) + " " + detail::num(v.y()) + " " + detail::num(v.z()) + "\n";
  for (const Triangle& t : m.triangles)
    s += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " + std::to_string(t[2] + 1) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Model: mesh.obj + mesh.json

inline json rig_to_json(const SkinnedModel& m) {
  json j;
  j["name"] = m.name;
  j["groups"] = m.groups;
  j["object_group"] = m.object_group;
  json joints = json::array();
  for (int i = 0; i < m.skeleton.size(); ++i) {
    const Joint& jt = m.skeleton.joint(i);
    json o;
    o["name"] = jt.name;
    o["parent"] = jt.parent ? json(*jt.parent) : json(nullptr);
    o["type"] = jt.type == JointType::root ? "root" : "revolute";
    o["axis"] = detail::to_json(jt.axis);
    o["point"] = detail::to_json(jt.point);
    o["lower"] = jt.lower;
    o["upper"] = jt.upper;
    o["group"] = m.joint_group[i];
    o["physics_part"] = m.physics_part[i] != 0;
    joints.push_back(o);
  }
  j["joints"] = joints;
  json weights = json::array();
  for (const auto& row : m.weights) {
    json r = json::array();
    for (const Influence& in : row) r.push_back(json::array({in.bone, in.weight}));
    weights.push_back(r);
  }
  j["weights"] = weights;
  json tips = json::array();
  for (const FingertipSet& f : m.fingertips) tips.push_back({{"name", f.name}, {"vertices", f.vertices}});
  j["fingertips"] = tips;
  return j;
}

inline SkinnedModel model_from(TriangleMesh mesh, const json& j) {
  SkinnedModel m;
  try {
    m.name = j.value("name", std::string("model"));
    m.mesh = std::move(mesh);
    std::vector<Joint> joints;
    for (const json& o : j.at("joints")) {
      Joint jt;
      jt.name = o.at("name").get<std::string>();
      if (o.contains("parent") && !o["parent"].is_null()) jt.parent = o["parent"].get<int>();
      const std::string type = o.value("type", std::string(jt.parent ? "revolute" : "root"));
      if (type != "root" && type != "revolute") throw ValidationError("unknown joint type '" + type + "'");
      jt.type = type == "root" ? JointType::root : JointType::revolute;
      if (o.contains("axis")) jt.axis = detail::vec3(o["axis"]);
      if (o.contains("point")) jt.point = detail::vec3(o["point"]);
      jt.lower = o.value("lower", jt.lower);
      jt.upper = o.value("upper", jt.upper);
      m.joint_group.push_back(o.value("group", 0));
      m.physics_part.push_back(o.value("physics_part", false) ? 1 : 0);
      joints.push_back(jt);
    }
    m.skeleton = Skeleton(std::move(joints));
    for (const json& row : j.at("weights")) {
      std::vector<Influence> r;
      for (const json& in : row) r.push_back({in.at(0).get<int>(), in.at(1).get<double>()});
      m.weights.push_back(std::move(r));
    }
    if (j.contains("fingertips"))
      for (const json& f : j["fingertips"])
        m.fingertips.push_back({f.at("name").get<std::string>(), f.at("vertices").get<std::vector<int>>()});
    if (j.contains("groups")) m.groups = j["groups"].get<std::vector<std::string>>();
    m.object_group = j.value("object_group", -1);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("rig description: ") + e.what());
  }
  m.finalize();
  return m;
}

inline fs::path rig_path(const fs::path& obj) { return fs::path(obj).replace_extension(".json"); }

/// Loads `path` (OBJ) and its sidecar with the same stem and a .json extension.
inline SkinnedModel load_model(const fs::path& path) {
  TriangleMesh mesh = parse_obj(detail::read_text(path));
  const fs::path side = rig_path(path);
  return model_from(std::move(mesh), detail::parse_json(detail::read_text(side), side.string()));
}

inline void save_model(const SkinnedModel& m, const fs::path& path) {
  detail::write_text(path, format_obj(m.mesh));
  detail::write_text(rig_path(path), rig_to_json(m).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Images

namespace detail {

struct Pnm {
  int width = 0, height = 0, maxval = 0;
  std::string data;
};

inline Pnm read_pgm(const fs::path& p) {
  const std::string s = read_text(p);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
      else if (s[pos] == '#') while (pos < s.size() && s[pos] != '\n') ++pos;
      else break;
    }
    const std::size_t b = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(b, pos - b);
  };
  if (token() != "P5") throw ParseError(p.string() + ": not a binary PGM", 1);
  Pnm img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    img.maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw ParseError(p.string() + ": malformed PGM header", 1);
  }
  ++pos;  // single whitespace before the raster
  const std::size_t bytes = static_cast<std::size_t>(img.width) * img.height * (img.maxval > 255 ? 2 : 1);
  if (img.width <= 0 || img.height <= 0 || s.size() < pos + bytes) throw ParseError(p.string() + ": truncated PGM", 1);
  img.data = s.substr(pos, bytes);
  return img;
}

}  // namespace detail

/// 16-bit binary PGM in millimetres; 0 means no measurement.
inline DepthFrame read_depth_pgm(const fs::path& p, CameraIntrinsics k) {
  const detail::Pnm img = detail::read_pgm(p);
  if (img.maxval <= 255) throw ParseError(p.string() + ": depth images must be 16-bit", 1);
  if (img.width != k.width || img.height != k.height)
    throw DimensionMismatch(p.string() + ": image size differs from the intrinsics");
  DepthFrame f = DepthFrame::blank(k);
  for (int i = 0; i < k.pixel_count(); ++i) {
    const auto hi = static_cast<unsigned char>(img.data[2 * i]);
    const auto lo = static_cast<unsigned char>(img.data[2 * i + 1]);
    f.depth[i] = static_cast<float>((hi << 8) | lo);
  }
  return f;
}

inline void write_depth_pgm(const fs::path& p, const DepthFrame& f) {
  std::string s = "P5\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n65535\n";
  for (float d : f.depth) {
    const long v = std::clamp(std::lround(std::max(0.0f, d)), 0L, 65535L);
    s.push_back(static_cast<char>(v >> 8));
    s.push_back(static_cast<char>(v & 0xff));
  }
  detail::write_text(p, s);
}

/// Headerless little-endian uint16 millimetres, dimensions from `k`.
inline DepthFrame read_depth_raw(const fs::path& p, CameraIntrinsics k) {
  const std::string s = detail::read_text(p);
  if (s.size() != static_cast<std::size_t>(k.pixel_count()) * 2)
    throw DimensionMismatch(p.string() + ": raw depth size differs from the intrinsics");
  DepthFrame f = DepthFrame::blank(k);
  for (int i = 0; i < k.pixel_count(); ++i) {
    const auto lo = static_cast<unsigned char>(s[2 * i]);
    const auto hi = static_cast<unsigned char>(s[2 * i + 1]);
    f.depth[i] = static_cast<float>((hi << 8) | lo);
  }
  return f;
}

inline void write_depth_raw(const fs::path& p, const DepthFrame& f) {
  std::string s;
  for (float d : f.depth) {
    const long v = std::clamp(std::lround(std::max(0.0f, d)), 0L, 65535L);
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
  }
  detail::write_text(p, s);
}

/// 8-bit PGM mask, non-zero = foreground.
inline std::vector<std::uint8_t> read_mask_pgm(const fs::path& p, const CameraIntrinsics& k) {
  const detail::Pnm img = detail::read_pgm(p);
  if (img.maxval > 255) throw ParseError(p.string() + ": masks must be 8-bit", 1);
  if (img.width != k.width || img.height != k.height)
    throw DimensionMismatch(p.string() + ": mask size differs from the intrinsics");
  std::vector<std::uint8_t> m(img.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.data[i] != 0 ? 1 : 0;
  return m;
}

inline void write_mask_pgm(const fs::path& p, std::span<const std::uint8_t> mask, int width, int height) {
  std::string s = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::uint8_t v : mask) s.push_back(static_cast<char>(v ? 255 : 0));
  detail::write_text(p, s);
}

// ---------------------------------------------------------------------------
// Detections: "frame x y w h confidence" per line, '#' comments.

struct DetectionRecord {
  int frame = 0;
  BoundingBox bbox;
  double confidence = 0.0;
};

inline std::vector<DetectionRecord> parse_detections(const std::string& text) {
  std::vector<DetectionRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    DetectionRecord d;
    std::string extra;
    if (!(ls >> d.frame >> d.bbox.x >> d.bbox.y >> d.bbox.w >> d.bbox.h >> d.confidence) || (ls >> extra))
      throw ParseError("detection record needs: frame x y w h confidence", lineno);
    if (d.bbox.w < 0 || d.bbox.h < 0) throw ParseError("negative detection box size", lineno);
    out.push_back(d);
  }
  return out;
}

inline std::string format_detections(std::span<const DetectionRecord> dets) {
  std::string s = "# frame x y w h confidence\n";
  for (const DetectionRecord& d : dets)
    s += std::to_string(d.frame) + " " + detail::num(d.bbox.x) + " " + detail::num(d.bbox.y) + " " +
         detail::num(d.bbox.w) + " " + detail::num(d.bbox.h) + " " + detail::num(d.confidence) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// CSV tables: header line, then "frame,value,..." rows.

struct Table {
  std::vector<std::string> header;
  std::vector<int> frames;
  std::vector<std::vector<double>> rows;
};

inline Table parse_table(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    return cells;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) throw ParseError("row has " + std::to_string(cells.size()) + " cells", lineno);
    try {
      t.frames.push_back(std::stoi(cells[0]));
      std::vector<double> row;
      for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(std::stod(cells[i]));
      t.rows.push_back(std::move(row));
    } catch (const std::exception&) {
      throw ParseError("non-numeric cell", lineno);
    }
  }
  if (t.header.empty()) throw ParseError("missing header", 1);
  return t;
}

inline std::string format_table(const Table& t) {
  std::string s;
  for (std::size_t i = 0; i < t.header.size(); ++i) s += (i ? "," : "") + t.header[i];
  s += "\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s += std::to_string(t.frames[r]);
    for (double v : t.rows[r]) s += "," + detail::num(v);
    s += "\n";
  }
  return s;
}

inline std::string format_poses(std::span<const Pose> poses) {
  Table t;
  t.header.push_back("frame");
  const int n = poses.empty() ? 0 : static_cast<int>(poses[0].theta.size());
  for (int k = 0; k < n; ++k) t.header.push_back("theta" + std::to_string(k));
  for (std::size_t f = 0; f < poses.size(); ++f) {
    t.frames.push_back(static_cast<int>(f));
    t.rows.emplace_back(poses[f].theta.data(), poses[f].theta.data() + poses[f].theta.size());
  }
  return format_table(t);
}

inline std::vector<Pose> parse_poses(const std::string& text) {
  const Table t = parse_table(text);
  std::vector<Pose> out;
  for (const auto& row : t.rows) out.push_back({Eigen::Map<const Eigen::VectorXd>(row.data(), row.size())});
  return out;
}

inline void save_poses(const fs::path& p, std::span<const Pose> poses) { detail::write_text(p, format_poses(poses)); }
inline std::vector<Pose> load_poses(const fs::path& p) { return parse_poses(detail::read_text(p)); }

/// Joint positions per frame as "frame,j0_x,j0_y,j0_z,...".
inline std::string format_joints(std::span<const std::vector<Vec3>> frames) {
  Table t;
  t.header.push_back("frame");
  const std::size_t n = frames.empty() ? 0 : frames[0].size();
  for (std::size_t j = 0; j < n; ++j)
    for (const char* c : {"x", "y", "z"}) t.header.push_back("j" + std::to_string(j) + "_" + c);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    t.frames.push_back(static_cast<int>(f));
    std::vector<double> row;
    for (const Vec3& p : frames[f]) row.insert(row.end(), {p.x(), p.y(), p.z()});
    t.rows.push_back(std::move(row));
  }
  return format_table(t);
}

inline std::vector<std::vector<Vec3>> parse_joints(const std::string& text) {
  const Table t = parse_table(text);
  std::vector<std::vector<Vec3>> out;
  for (const auto& row : t.rows) {
    if (row.size() % 3 != 0) throw ParseError("joint rows need x,y,z triples", 1);
    std::vector<Vec3> f;
    for (std::size_t i = 0; i < row.size(); i += 3) f.emplace_back(row[i], row[i + 1], row[i + 2]);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace artrack

#include "shapecomp/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "shapecomp/errors.hpp"

namespace shapecomp {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_real(const std::string& tok, const std::string& path, std::size_t line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    parse_fail(path, line, "expected a number, got '" + tok + "'");
  }
  if (pos != tok.size()) parse_fail(path, line, "trailing characters in number '" + tok + "'");
  return v;
}

long parse_int(const std::string& tok, const std::string& path, std::size_t line) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    parse_fail(path, line, "expected an integer, got '" + tok + "'");
  }
  if (pos != tok.size()) parse_fail(path, line, "trailing characters in integer '" + tok + "'");
  return v;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

Mesh load_obj(const std::string& path) {
  auto in = open_input(path);
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<int, 3>> faces;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    const std::string& key = tokens[0];
    if (key == "v") {
      if (tokens.size() < 4) parse_fail(path, lineno, "vertex needs 3 coordinates");
      verts.emplace_back(parse_real(tokens[1], path, lineno), parse_real(tokens[2], path, lineno),
                         parse_real(tokens[3], path, lineno));
    } else if (key == "f") {
      if (tokens.size() != 4) {
        parse_fail(path, lineno, "non-triangular face at line " + std::to_string(lineno));
      }
      std::array<int, 3> face{};
      for (int k = 0; k < 3; ++k) {
        // Accept "i", "i/t", "i/t/n" forms; only the vertex index is used.
        std::string tok = tokens[k + 1];
        if (auto slash = tok.find('/'); slash != std::string::npos) tok = tok.substr(0, slash);
        const long idx = parse_int(tok, path, lineno);
        if (idx < 1) parse_fail(path, lineno, "face index must be positive (1-based)");
        face[k] = static_cast<int>(idx - 1);
      }
      faces.push_back(face);
    }
    // Other prefixes (vn, vt, o, g, s, mtllib, usemtl) are ignored.
  }

  Mesh mesh;
  mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  mesh.faces = std::move(faces);
  mesh.validate();
  return mesh;
}

namespace {

struct PlyHeader {
  std::size_t vertex_count = 0;
  std::size_t face_count = 0;
  // Per vertex property names in declaration order; x/y/z must be present.
  std::vector<std::string> vertex_props;
  bool has_faces = false;
  std::size_t body_start_line = 0;
};

PlyHeader read_ply_header(std::istream& in, const std::string& path, std::size_t& lineno) {
  PlyHeader header;
  std::string line;

  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  ++lineno;
  if (split_ws(line) != std::vector<std::string>{"ply"}) parse_fail(path, lineno, "missing 'ply' magic");

  std::string current_element;
  bool format_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0] == "comment") continue;
    if (tokens[0] == "format") {
      if (tokens.size() < 3 || tokens[1] != "ascii" || tokens[2] != "1.0") {
        parse_fail(path, lineno, "only 'format ascii 1.0' is supported");
      }
      format_seen = true;
    } else if (tokens[0] == "element") {
      if (tokens.size() != 3) parse_fail(path, lineno, "malformed element declaration");
      current_element = tokens[1];
      const long count = parse_int(tokens[2], path, lineno);
      if (count < 0) parse_fail(path, lineno, "negative element count");
      if (current_element == "vertex") {
        header.vertex_count = static_cast<std::size_t>(count);
      } else if (current_element == "face") {
        header.face_count = static_cast<std::size_t>(count);
        header.has_faces = true;
      } else {
        parse_fail(path, lineno, "unsupported element '" + current_element + "'");
      }
    } else if (tokens[0] == "property") {
      if (current_element == "vertex") {
        if (tokens.size() != 3) parse_fail(path, lineno, "malformed vertex property");
        header.vertex_props.push_back(tokens[2]);
      } else if (current_element == "face") {
        if (tokens.size() != 5 || tokens[1] != "list" ||
            (tokens[4] != "vertex_indices" && tokens[4] != "vertex_index")) {
          parse_fail(path, lineno, "face element must carry a vertex index list property");
        }
      } else {
        parse_fail(path, lineno, "property outside an element");
      }
    } else if (tokens[0] == "end_header") {
      if (!format_seen) parse_fail(path, lineno, "missing format declaration");
      header.body_start_line = lineno;
      return header;
    } else {
      parse_fail(path, lineno, "unexpected header line '" + tokens[0] + "'");
    }
  }
  parse_fail(path, lineno, "unterminated header");
}

void check_xyz(const PlyHeader& header, const std::string& path, std::size_t lineno,
               std::array<std::size_t, 3>& xyz) {
  const auto& props = header.vertex_props;
  for (int k = 0; k < 3; ++k) {
    const std::string name(1, "xyz"[k]);
    const auto it = std::find(props.begin(), props.end(), name);
    if (it == props.end()) parse_fail(path, lineno, "vertex element lacks property '" + name + "'");
    xyz[static_cast<std::size_t>(k)] = static_cast<std::size_t>(it - props.begin());
  }
}

}  // namespace

Mesh load_ply(const std::string& path) {
  auto in = open_input(path);
  std::size_t lineno = 0;
  const PlyHeader header = read_ply_header(in, path, lineno);
  std::array<std::size_t, 3> xyz{};
  check_xyz(header, path, lineno, xyz);

  Mesh mesh;
  mesh.vertices.resize(3, static_cast<Eigen::Index>(header.vertex_count));
  std::string line;
  for (std::size_t i = 0; i < header.vertex_count; ++i) {
    if (!std::getline(in, line)) parse_fail(path, lineno, "unexpected end of vertex data");
    ++lineno;
    const auto tokens = split_ws(line);
    if (tokens.size() != header.vertex_props.size()) {
      parse_fail(path, lineno, "vertex row has wrong field count");
    }
    for (int k = 0; k < 3; ++k) {
      mesh.vertices(k, static_cast<Eigen::Index>(i)) = parse_real(tokens[xyz[static_cast<std::size_t>(k)]], path, lineno);
    }
  }
  mesh.faces.reserve(header.face_count);
  for (std::size_t i = 0; i < header.face_count; ++i) {
    if (!std::getline(in, line)) parse_fail(path, lineno, "unexpected end of face data");
    ++lineno;
    const auto tokens = split_ws(line);
    if (tokens.empty()) parse_fail(path, lineno, "empty face row");
    const long count = parse_int(tokens[0], path, lineno);
    if (count != 3) {
      parse_fail(path, lineno, "non-triangular face at line " + std::to_string(lineno));
    }
    if (tokens.size() != 4) parse_fail(path, lineno, "face row has wrong field count");
    std::array<int, 3> face{};
    for (int k = 0; k < 3; ++k) {
      face[k] = static_cast<int>(parse_int(tokens[k + 1], path, lineno));
    }
    mesh.faces.push_back(face);
  }
  mesh.validate();
  return mesh;
}

Mesh load_mesh(const std::string& path) {
  {
    auto in = open_input(path);
    std::string first;
    std::getline(in, first);
    if (split_ws(first) == std::vector<std::string>{"ply"}) return load_ply(path);
  }
  const std::string ext = lower(path.size() >= 4 ? path.substr(path.size() - 4) : "");
  if (ext == ".ply") return load_ply(path);
  return load_obj(path);
}

void save_obj(const Mesh& mesh, const std::string& path) {
  auto out = open_output(path);
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i) {
    out << "v " << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' '
        << mesh.vertices(2, i) << '\n';
  }
  for (const auto& [a, b, c] : mesh.faces) {
    out << "f " << a + 1 << ' ' << b + 1 << ' ' << c + 1 << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

void save_ply(const Mesh& mesh, const std::string& path) {
  auto out = open_output(path);
  out << std::setprecision(17);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.cols() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.faces.size() << '\n';
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i) {
    out << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' ' << mesh.vertices(2, i) << '\n';
  }
  for (const auto& [a, b, c] : mesh.faces) {
    out << "3 " << a << ' ' << b << ' ' << c << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  const std::string ext = lower(path.size() >= 4 ? path.substr(path.size() - 4) : "");
  if (ext == ".ply") {
    save_ply(mesh, path);
  } else {
    save_obj(mesh, path);
  }
}

Eigen::Matrix3Xd load_ply_points(const std::string& path) {
  const Mesh mesh = load_ply(path);
  return mesh.vertices;
}

void save_ply_points(const Eigen::Matrix3Xd& points, const std::string& path) {
  Mesh mesh;
  mesh.vertices = points;
  save_ply(mesh, path);
}

}  // namespace shapecomp

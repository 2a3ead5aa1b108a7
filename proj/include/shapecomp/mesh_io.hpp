#pragma once

#include <string>

#include "shapecomp/mesh.hpp"

namespace shapecomp {

// ASCII OBJ / PLY. Format is picked by file magic ("ply") falling back to
// the extension. Parse failures throw DataError with a line number.
Mesh load_mesh(const std::string& path);
void save_mesh(const Mesh& mesh, const std::string& path);

Mesh load_obj(const std::string& path);
Mesh load_ply(const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);
void save_ply(const Mesh& mesh, const std::string& path);

// PLY vertex element only; used for partial-shape point sets.
Eigen::Matrix3Xd load_ply_points(const std::string& path);
void save_ply_points(const Eigen::Matrix3Xd& points, const std::string& path);

}  // namespace shapecomp

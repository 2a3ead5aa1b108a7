#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "shapecomp/optim.hpp"

namespace shapecomp {

// Checkpoints are JSON: a version field, an ordered list of named tensors
// (shape + row-major values), and a free-form meta object. Doubles are
// written with shortest-round-trip formatting, so load(save(p)) is
// bit-exact.
nlohmann::json checkpoint_to_json(const std::vector<const Parameter*>& params,
                                  const nlohmann::json& meta);
void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params,
                     const nlohmann::json& meta);

// Loads values into matching parameters (by name, shapes must agree) and
// returns the meta object. Throws DataError on any mismatch.
nlohmann::json load_checkpoint(const std::string& path, const std::vector<Parameter*>& params);
nlohmann::json checkpoint_from_json(const nlohmann::json& j, const std::vector<Parameter*>& params);

}  // namespace shapecomp

#include "shapecomp/checkpoint.hpp"

#include <fstream>

#include "shapecomp/errors.hpp"

namespace shapecomp {

namespace {
constexpr int kFormatVersion = 1;
}

nlohmann::json checkpoint_to_json(const std::vector<const Parameter*>& params,
                                  const nlohmann::json& meta) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["meta"] = meta;
  nlohmann::json list = nlohmann::json::array();
  for (const Parameter* p : params) {
    nlohmann::json entry;
    entry["name"] = p->name;
    entry["shape"] = {p->value.rows(), p->value.cols()};
    entry["data"] = p->value.buffer();
    list.push_back(std::move(entry));
  }
  j["params"] = std::move(list);
  return j;
}

void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params,
                     const nlohmann::json& meta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << checkpoint_to_json(params, meta) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

nlohmann::json checkpoint_from_json(const nlohmann::json& j,
                                    const std::vector<Parameter*>& params) {
  if (!j.contains("format_version") || j["format_version"].get<int>() != kFormatVersion) {
    throw DataError("checkpoint: unsupported format version");
  }
  const auto& list = j.at("params");
  if (list.size() != params.size()) {
    throw DataError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                    std::to_string(list.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = list[i];
    Parameter* p = params[i];
    if (entry.at("name").get<std::string>() != p->name) {
      throw DataError("checkpoint: tensor " + std::to_string(i) + " is '" +
                      entry.at("name").get<std::string>() + "', expected '" + p->name + "'");
    }
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
      throw DataError("checkpoint: shape mismatch for '" + p->name + "'");
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != p->value.size()) {
      throw DataError("checkpoint: data length mismatch for '" + p->name + "'");
    }
    p->value.buffer() = data;
    p->zero_grad();
  }
  return j.value("meta", nlohmann::json::object());
}

nlohmann::json load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint parse error in '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j, params);
}

}  // namespace shapecomp

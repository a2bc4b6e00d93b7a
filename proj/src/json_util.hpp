#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "facereg/error.hpp"
#include "facereg/geometry.hpp"

namespace facereg::detail {

inline nlohmann::json transform_json(const RigidTransform& t) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation()(r, c));
  return {{"rotation", rot}, {"translation", {t.translation().x(), t.translation().y(), t.translation().z()}}};
}

inline RigidTransform transform_from(const nlohmann::json& j) {
  const auto& rot = j.at("rotation");
  const auto& tr = j.at("translation");
  if (rot.size() != 9 || tr.size() != 3) throw InputError("transform JSON needs 9 rotation and 3 translation values");
  Eigen::Matrix3d r;
  for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rot[i].get<double>();
  return RigidTransform(r, Vector3(tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()));
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void dump(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text << '\n';
}

}  // namespace facereg::detail

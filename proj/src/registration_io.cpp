#include "facereg/error.hpp"
#include "facereg/registration.hpp"
#include "json_util.hpp"

namespace facereg {

using nlohmann::json;
using detail::dump;
using detail::slurp;
using detail::transform_from;
using detail::transform_json;

std::string to_json(const RegistrationResult& r) {
  json j = transform_json(r.transform);
  j["rmse"] = r.rmse;
  j["iterations_run"] = r.iterations_run;
  j["converged"] = r.converged;
  j["per_iteration_rmse"] = r.per_iteration_rmse;
  return j.dump(2);
}

RegistrationResult registration_result_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RegistrationResult r;
    r.transform = transform_from(j);
    r.rmse = j.at("rmse").get<double>();
    r.iterations_run = j.at("iterations_run").get<std::size_t>();
    r.converged = j.at("converged").get<bool>();
    r.per_iteration_rmse = j.at("per_iteration_rmse").get<std::vector<double>>();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid registration result JSON: ") + e.what());
  }
}

void write_result(const std::filesystem::path& path, const RegistrationResult& r) { dump(path, to_json(r)); }

RegistrationResult read_result(const std::filesystem::path& path) {
  return registration_result_from_json(slurp(path));
}

RigidTransform read_transform(const std::filesystem::path& path) {
  try {
    return transform_from(json::parse(slurp(path)));
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": invalid transform JSON: " + e.what());
  }
}

void write_transform(const std::filesystem::path& path, const RigidTransform& t) {
  dump(path, transform_json(t).dump(2));
}

}  // namespace facereg

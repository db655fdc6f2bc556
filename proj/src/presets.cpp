#include "specdeform/presets.hpp"

#include <cmath>
#include <string>

#include "specdeform/common.hpp"

namespace specdeform {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

const json& require(const json& spec, const std::string& path, const char* key) {
  auto it = spec.find(key);
  if (it == spec.end()) fail(path, std::string("missing required key \"") + key + "\"");
  return *it;
}

double require_number(const json& spec, const std::string& path, const char* key) {
  const json& v = require(spec, path, key);
  if (!v.is_number()) fail(path + "/" + key, "expected a number");
  return v.get<double>();
}

double number_or(const json& spec, const std::string& path, const char* key, double dflt) {
  auto it = spec.find(key);
  if (it == spec.end()) return dflt;
  if (!it->is_number()) fail(path + "/" + key, "expected a number");
  return it->get<double>();
}

long require_integer(const json& spec, const std::string& path, const char* key) {
  const json& v = require(spec, path, key);
  if (!v.is_number_integer()) fail(path + "/" + key, "expected an integer");
  return v.get<long>();
}

std::string type_of(const json& spec, const std::string& path) {
  if (!spec.is_object()) fail(path, "expected an object");
  const json& t = require(spec, path, "type");
  if (!t.is_string()) fail(path + "/type", "expected a string");
  return t.get<std::string>();
}

}  // namespace

MetricField metric_from_json(const Mesh& mesh, const json& spec, const std::string& path) {
  const std::string type = type_of(spec, path);
  const int nv = static_cast<int>(mesh.vertices.size());

  if (type == "identity") {
    return MetricField::identity(nv);
  }

  if (type == "diag") {
    const double a = require_number(spec, path, "a");
    const double b = require_number(spec, path, "b");
    if (a <= 0.0 || b <= 0.0)
      fail(path, "diag metric needs positive entries, got a=" + format_double(a) +
                     " b=" + format_double(b));
    return MetricField::constant(nv, Sym2{a, 0.0, b});
  }

  if (type == "conformal") {
    const json& rho = require(spec, path, "rho");
    if (!rho.is_string()) fail(path + "/rho", "expected a string");
    const std::string profile = rho.get<std::string>();
    const double scale = number_or(spec, path, "scale", 1.0);

    double cx = 0.5, cy = 0.5;
    if (auto it = spec.find("center"); it != spec.end()) {
      if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
        fail(path + "/center", "expected [x, y]");
      cx = (*it)[0].get<double>();
      cy = (*it)[1].get<double>();
    }
    const double width = number_or(spec, path, "width", 0.25);
    if (width <= 0.0) fail(path + "/width", "width must be positive");

    SymTensorField f(nv);
    for (int v = 0; v < nv; ++v) {
      const double x = mesh.vertices[v].x(), y = mesh.vertices[v].y();
      double r = 0.0;
      if (profile == "zero") {
        r = 0.0;
      } else if (profile == "bump") {
        const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (width * width);
        r = std::exp(-d2);
      } else if (profile == "sinxy") {
        r = std::sin(kPi * x) * std::sin(kPi * y);
      } else {
        fail(path + "/rho", "unknown conformal profile \"" + profile + "\"");
      }
      const double e = std::exp(scale * r);
      f.values[v] = Sym2{e, 0.0, e};
    }
    return MetricField(std::move(f.values));
  }

  fail(path + "/type", "unknown metric type \"" + type + "\"");
}

SymTensorField tensor_from_json(const Mesh& mesh, const json& spec, const MetricField& g,
                                const std::string& path) {
  const std::string type = type_of(spec, path);
  const int nv = static_cast<int>(mesh.vertices.size());

  if (type == "zero") return SymTensorField(nv);

  if (type == "identity") {
    SymTensorField f(nv);
    for (auto& s : f.values) s = Sym2{1.0, 0.0, 1.0};
    return f;
  }

  if (type == "diag") {
    const double a = require_number(spec, path, "a");
    const double b = require_number(spec, path, "b");
    SymTensorField f(nv);
    for (auto& s : f.values) s = Sym2{a, 0.0, b};
    return f;
  }

  if (type == "random") {
    const long seed = require_integer(spec, path, "seed");
    const double amplitude = number_or(spec, path, "amplitude", 1.0);
    long cap = 3;
    if (auto it = spec.find("frequency_cap"); it != spec.end()) {
      if (!it->is_number_integer()) fail(path + "/frequency_cap", "expected an integer");
      cap = it->get<long>();
    }
    if (amplitude <= 0.0) fail(path + "/amplitude", "amplitude must be positive");
    if (cap < 0) fail(path + "/frequency_cap", "frequency_cap must be non-negative");
    return random_perturbation(mesh, static_cast<unsigned long>(seed), amplitude,
                               static_cast<int>(cap));
  }

  if (type == "metric") {
    const double scale = number_or(spec, path, "scale", 1.0);
    SymTensorField f(nv);
    for (int v = 0; v < nv; ++v) f.values[v] = g.at(v) * scale;
    return f;
  }

  if (type == "splitting")
    fail(path + "/type",
         "\"splitting\" is only available through the generic-splitting experiment");

  fail(path + "/type", "unknown perturbation type \"" + type + "\"");
}

}  // namespace specdeform

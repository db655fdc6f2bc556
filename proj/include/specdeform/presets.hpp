#pragma once

#include <json.hpp>

#include "specdeform/metric.hpp"

namespace specdeform {

// Builds a metric field from a JSON descriptor.  Supported forms:
//   {"type": "identity"}
//   {"type": "diag", "a": 4.0, "b": 9.0}
//   {"type": "conformal", "rho": "zero"|"bump"|"sinxy", "scale": 0.25,
//    "center": [0.5, 0.5], "width": 0.25}            (e^rho * identity)
// Errors carry `path` as a JSON-pointer-style prefix.
MetricField metric_from_json(const Mesh& mesh, const nlohmann::json& spec,
                             const std::string& path = "/metric");

// Builds a perturbation direction from a JSON descriptor.  Supported forms:
//   {"type": "zero"}
//   {"type": "identity"}
//   {"type": "diag", "a": 1.0, "b": 2.0}
//   {"type": "random", "seed": 7, "amplitude": 1.0, "frequency_cap": 3}
//   {"type": "metric", "scale": 1.0}                  (T = scale * g)
// The "splitting" type is resolved by the experiment runner, which owns the
// eigenvalue cluster it is computed from.
SymTensorField tensor_from_json(const Mesh& mesh, const nlohmann::json& spec,
                                const MetricField& g,
                                const std::string& path = "/perturbation");

}  // namespace specdeform

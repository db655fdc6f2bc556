#pragma once

#include <json.hpp>

#include <string>

namespace specdeform {

// How a run writes its outputs.  One run at a time per output directory.
struct RunContext {
  std::string out_dir = ".";
  bool deterministic = false;  // drop the generated_at field from report.json
  int threads = 1;             // grid solves in track_branches
};

// Reads and parses a JSON config file.  Unreadable files and parse errors
// become ValidationError; downstream field errors carry JSON-pointer-style
// paths ("/mesh/n: expected ...").
nlohmann::json load_config(const std::string& path);

// Shorthand spec strings used by the CLI flags; each expands to the JSON
// object form the config file uses.
//   mesh:   "square:16", "disk:24", or a mesh file path
//   metric: "identity", "diag:4,9", "conformal:0.25" (sinxy profile)
//   tensor: "zero", "identity", "diag:1,2", "random:7[,amplitude,cap]",
//           "metric:0.3", "splitting"
nlohmann::json mesh_spec(const std::string& text);
nlohmann::json metric_spec(const std::string& text);
nlohmann::json tensor_spec(const std::string& text);

// Runs one command against a config document and writes its CSV outputs plus
// report.json into ctx.out_dir.  Commands: "mesh-gen", "eigs", "hadamard",
// "branches", "ls", "generic", "verify-calculus".  Returns the report
// document.  Config layout (all blocks optional unless the command needs
// them; metric defaults to identity):
//
//   {"mesh":        {"shape":"square","n":16} | {"shape":"disk","rings":12}
//                   | {"path":"mesh.txt","reorient":false},
//    "metric":      see presets.hpp,
//    "perturbation": see presets.hpp, plus {"type":"splitting"} which the
//                   runner resolves against the selected cluster,
//    "cluster":     {"index":1} | {"window":[lo,hi]},
//    "k": 12, "cluster_tol": 1e-3,
//    "branches":    {"tmin":-0.05,"tmax":0.05,"steps":11},
//    "hadamard":    {"oracle":false},
//    "ls":          {"t":0.02 | [..] | {"tmin":..,"tmax":..,"steps":..},
//                    "window":1.0},
//    "generic":     {"samples":20,"seed":1234,"t_probe":0.01,
//                    "family":"random"|"conformal","scale":0.3},
//    "calculus":    {"suite":"all","steps":[8e-3,4e-3,2e-3]},
//    "out":         "mesh.txt"}            (mesh-gen only)
//
// Failures rethrow ValidationError / NumericalError with the failing module
// prefixed to the message; the CLI maps them to exit codes 2 and 3.
nlohmann::json run_experiment(const std::string& command, const nlohmann::json& config,
                              const RunContext& ctx);

}  // namespace specdeform

#include "specdeform/experiment.hpp"

#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "specdeform/chart_calculus.hpp"
#include "specdeform/common.hpp"
#include "specdeform/eigensolver.hpp"
#include "specdeform/fem.hpp"
#include "specdeform/liapunov_schmidt.hpp"
#include "specdeform/mesh.hpp"
#include "specdeform/metric.hpp"
#include "specdeform/perturbation.hpp"
#include "specdeform/presets.hpp"

namespace specdeform {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

long integer_or(const json& spec, const std::string& path, const char* key, long dflt) {
  auto it = spec.find(key);
  if (it == spec.end()) return dflt;
  if (!it->is_number_integer()) fail(path + "/" + key, "expected an integer");
  return it->get<long>();
}

double number_or(const json& spec, const std::string& path, const char* key, double dflt) {
  auto it = spec.find(key);
  if (it == spec.end()) return dflt;
  if (!it->is_number()) fail(path + "/" + key, "expected a number");
  return it->get<double>();
}

std::string string_or(const json& spec, const std::string& path, const char* key,
                      const std::string& dflt) {
  auto it = spec.find(key);
  if (it == spec.end()) return dflt;
  if (!it->is_string()) fail(path + "/" + key, "expected a string");
  return it->get<std::string>();
}

Mesh mesh_from_config(const json& config) {
  auto it = config.find("mesh");
  if (it == config.end()) fail("/mesh", "missing mesh block");
  const json& spec = *it;
  if (!spec.is_object()) fail("/mesh", "expected an object");

  if (spec.contains("path")) {
    const json& p = spec["path"];
    if (!p.is_string()) fail("/mesh/path", "expected a string");
    LoadOptions opts;
    if (auto r = spec.find("reorient"); r != spec.end()) {
      if (!r->is_boolean()) fail("/mesh/reorient", "expected a boolean");
      opts.reorient = r->get<bool>();
    }
    return load_mesh(p.get<std::string>(), opts);
  }

  const std::string shape = string_or(spec, "/mesh", "shape", "");
  if (shape == "square") {
    const long n = integer_or(spec, "/mesh", "n", 16);
    if (n < 1) fail("/mesh/n", "need at least one subdivision");
    return generate_square(static_cast<int>(n));
  }
  if (shape == "disk") {
    // Accept either key; the CLI always writes "n".
    const long rings = integer_or(spec, "/mesh", "rings", integer_or(spec, "/mesh", "n", 8));
    if (rings < 1) fail("/mesh/rings", "need at least one ring");
    return generate_disk(static_cast<int>(rings));
  }
  fail("/mesh/shape", "expected \"square\", \"disk\", or a \"path\" entry");
}

// Representative element size: h of the structured square mesh, and the
// analogous uniform-triangle scale elsewhere.  Used for discretization-error
// floors in slope comparisons.
double mesh_scale(const Mesh& mesh) {
  return std::sqrt(2.0 * total_area(mesh) / std::max(1, mesh.num_triangles()));
}

struct Spectrum {
  SparseMatrix K, M;
  std::vector<EigenPair> pairs;
  std::vector<EigenCluster> clusters;
};

Spectrum solve_spectrum(const Mesh& mesh, const MetricField& g, int k, double cluster_tol) {
  Spectrum s;
  s.K = assemble_stiffness(mesh, g);
  s.M = assemble_mass(mesh, g);
  s.pairs = solve_gevp(s.K, s.M, std::min(k, mesh.num_vertices()));
  s.clusters = cluster(s.pairs, s.M, cluster_tol);
  return s;
}

EigenCluster select_cluster(const json& config, const Spectrum& s) {
  const json spec = config.value("cluster", json{{"index", 1}});
  if (!spec.is_object()) fail("/cluster", "expected an object");

  if (spec.contains("window")) {
    const json& w = spec["window"];
    if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number())
      fail("/cluster/window", "expected [lo, hi]");
    const double lo = w[0].get<double>(), hi = w[1].get<double>();
    if (!(lo < hi)) fail("/cluster/window", "needs lo < hi");
    std::vector<EigenPair> inside;
    int offset = -1;
    for (int i = 0; i < static_cast<int>(s.pairs.size()); ++i) {
      if (s.pairs[i].lambda < lo || s.pairs[i].lambda > hi) continue;
      if (offset < 0) offset = i;
      inside.push_back(s.pairs[i]);
    }
    if (inside.empty())
      fail("/cluster/window", "no computed eigenvalue in [" + format_double(lo) + ", " +
                                  format_double(hi) + "]");
    std::vector<EigenCluster> one =
        cluster(inside, s.M, std::numeric_limits<double>::infinity());
    one[0].first_index = offset;
    return one[0];
  }

  const long idx = integer_or(spec, "/cluster", "index", 1);
  if (idx < 0 || idx >= static_cast<long>(s.clusters.size()))
    fail("/cluster/index", "cluster index " + std::to_string(idx) + " out of range (have " +
                               std::to_string(s.clusters.size()) + ")");
  return s.clusters[static_cast<size_t>(idx)];
}

// Resolves the perturbation block, including the "splitting" type which
// needs the cluster in hand.
SymTensorField perturbation_from_config(const json& config, const Mesh& mesh,
                                        const MetricField& g, const EigenCluster& cluster) {
  auto it = config.find("perturbation");
  if (it == config.end()) fail("/perturbation", "missing perturbation block");
  if (it->is_object() && it->value("type", "") == "splitting")
    return splitting_perturbation(mesh, g, cluster);
  return tensor_from_json(mesh, *it, g, "/perturbation");
}

// Symmetric grid containing 0, built by mirroring so both properties hold
// exactly in floating point.
std::vector<double> symmetric_grid(const json& spec, const std::string& path) {
  const double tmax = number_or(spec, path, "tmax", 0.05);
  const double tmin = number_or(spec, path, "tmin", -tmax);
  const long steps = integer_or(spec, path, "steps", 11);
  if (tmin != -tmax) fail(path, "branch grids must have tmin = -tmax");
  if (steps < 3 || steps % 2 == 0) fail(path + "/steps", "expected an odd count >= 3");
  if (!(tmax > 0.0)) fail(path + "/tmax", "expected a positive endpoint");
  const long half = (steps - 1) / 2;
  std::vector<double> grid(static_cast<size_t>(steps));
  for (long i = 1; i <= half; ++i) {
    const double v = tmax * static_cast<double>(i) / static_cast<double>(half);
    grid[static_cast<size_t>(half - i)] = -v;
    grid[static_cast<size_t>(half + i)] = v;
  }
  grid[static_cast<size_t>(half)] = 0.0;
  return grid;
}

std::vector<double> t_list(const json& spec, const std::string& path) {
  auto it = spec.find("t");
  if (it == spec.end()) return {0.02};
  if (it->is_number()) return {it->get<double>()};
  if (it->is_array()) {
    std::vector<double> out;
    for (const auto& v : *it) {
      if (!v.is_number()) fail(path + "/t", "expected numbers");
      out.push_back(v.get<double>());
    }
    if (out.empty()) fail(path + "/t", "empty t list");
    return out;
  }
  if (it->is_object()) {
    const double tmin = number_or(*it, path + "/t", "tmin", -0.02);
    const double tmax = number_or(*it, path + "/t", "tmax", 0.02);
    const long steps = integer_or(*it, path + "/t", "steps", 5);
    if (!(tmin <= tmax) || steps < 1) fail(path + "/t", "expected tmin <= tmax, steps >= 1");
    std::vector<double> out;
    for (long i = 0; i < steps; ++i)
      out.push_back(steps == 1 ? tmin
                               : tmin + (tmax - tmin) * static_cast<double>(i) /
                                            static_cast<double>(steps - 1));
    return out;
  }
  fail(path + "/t", "expected a number, list, or {tmin,tmax,steps}");
}

// Every module prefixes its own errors ("mesh: ...", "eigensolver: ...",
// "config: /path: ..."); the runner adds the active stage only to messages
// that lack one, so the failing module is always named exactly once.
std::string name_stage(const std::string& stage, const char* what) {
  static const char* kTags[] = {"mesh:",          "metric:",           "config:",
                                "fem:",           "eigensolver:",      "chart_calculus:",
                                "perturbation:",  "liapunov_schmidt:", "cli:"};
  const std::string text(what);
  for (const char* tag : kTags)
    if (text.rfind(tag, 0) == 0) return text;
  return stage + ": " + text;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

void write_report(const RunContext& ctx, json report) {
  report["deterministic"] = ctx.deterministic;
  if (!ctx.deterministic) {
    char buf[32] = {0};
    const std::time_t now = std::time(nullptr);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    report["generated_at"] = buf;
  }
  const fs::path path = fs::path(ctx.out_dir) / "report.json";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << report.dump(2) << '\n';
  if (!out) throw ValidationError("failed writing " + path.string());
}

std::string out_file(const RunContext& ctx, const std::string& name) {
  return (fs::path(ctx.out_dir) / name).string();
}

json run_mesh_gen(const json& config, const RunContext& ctx) {
  const Mesh mesh = mesh_from_config(config);
  std::string name = "mesh.txt";
  if (auto it = config.find("out"); it != config.end()) {
    if (!it->is_string()) fail("/out", "expected a string");
    name = it->get<std::string>();
  }
  const fs::path target = fs::path(name).is_absolute() ? fs::path(name)
                                                       : fs::path(ctx.out_dir) / name;
  save_mesh(mesh, target.string());
  json report;
  report["command"] = "mesh-gen";
  // Record the name as given, not the resolved path: reports stay
  // byte-identical across output directories.
  report["outputs"] = json::array({name});
  report["summary"] = {{"vertices", mesh.num_vertices()},
                       {"triangles", mesh.num_triangles()},
                       {"boundary_edges", static_cast<int>(mesh.boundary_edges.size())},
                       {"euler_characteristic", euler_characteristic(mesh)},
                       {"area", total_area(mesh)}};
  return report;
}

json run_eigs(const RunContext& ctx, const Mesh& mesh, const MetricField& g, int k,
              double cluster_tol) {
  const Spectrum s = solve_spectrum(mesh, g, k, cluster_tol);
  write_spectrum_csv(out_file(ctx, "spectrum.csv"), s.pairs, s.clusters);

  json eigenvalues = json::array();
  for (const auto& p : s.pairs) eigenvalues.push_back(p.lambda);
  json clusters = json::array();
  for (const auto& c : s.clusters)
    clusters.push_back({{"lambda_bar", c.lambda_bar},
                        {"multiplicity", c.multiplicity},
                        {"first_index", c.first_index}});
  json report;
  report["command"] = "eigs";
  report["outputs"] = json::array({"spectrum.csv"});
  report["summary"] = {{"eigenvalues", eigenvalues},
                       {"clusters", clusters},
                       {"cluster_tol", cluster_tol}};
  return report;
}

json run_hadamard(const json& config, const RunContext& ctx, const Mesh& mesh,
                  const MetricField& g, int k, double cluster_tol) {
  const Spectrum s = solve_spectrum(mesh, g, k, cluster_tol);
  const EigenCluster cl = select_cluster(config, s);
  const SymTensorField T = perturbation_from_config(config, mesh, g, cl);

  const BranchMatrix B = hadamard_matrix(mesh, g, cl, T);
  write_branch_matrix_csv(out_file(ctx, "matrix.csv"), B);
  json outputs = json::array({"matrix.csv"});

  json summary = {{"lambda_bar", cl.lambda_bar},
                  {"multiplicity", cl.multiplicity},
                  {"provenance", B.provenance},
                  {"slopes", vector_to_json(B.slopes())}};

  const json options = config.value("hadamard", json::object());
  if (options.value("oracle", false)) {
    const BranchMatrix O = discrete_branch_matrix(cl, s.M, assemble_derivatives(mesh, g, T));
    write_branch_matrix_csv(out_file(ctx, "matrix_oracle.csv"), O);
    outputs.push_back("matrix_oracle.csv");
    summary["oracle_slopes"] = vector_to_json(O.slopes());
    summary["max_slope_diff"] =
        (B.slopes() - O.slopes()).cwiseAbs().maxCoeff();
  }

  json report;
  report["command"] = "hadamard";
  report["outputs"] = outputs;
  report["summary"] = summary;
  return report;
}

json run_branches(const json& config, const RunContext& ctx, const Mesh& mesh,
                  const MetricField& g, int k, double cluster_tol) {
  const Spectrum s = solve_spectrum(mesh, g, k, cluster_tol);
  const EigenCluster cl = select_cluster(config, s);
  const SymTensorField T = perturbation_from_config(config, mesh, g, cl);

  const std::vector<double> grid =
      symmetric_grid(config.value("branches", json::object()), "/branches");
  // Pre-validate that the endpoints keep the metric SPD; metric_at_t names
  // the offending vertex.
  metric_at_t(g, T, grid.front());
  metric_at_t(g, T, grid.back());

  TrackOptions options;
  options.k = k;
  options.cluster_tol = cluster_tol;
  options.threads = ctx.threads;
  const BranchCurves curves = track_branches(mesh, g, T, cl.lambda_bar, grid, options);
  write_branches_csv(out_file(ctx, "branches.csv"), curves);

  const BranchMatrix B = hadamard_matrix(mesh, g, cl, T);
  write_branch_matrix_csv(out_file(ctx, "matrix.csv"), B);

  const Eigen::VectorXd fd = curves.central_slopes();
  const Eigen::VectorXd predicted = B.slopes();
  const double h = mesh_scale(mesh);
  double max_diff = 0.0, tolerance = 0.0;
  bool match = true;
  for (int b = 0; b < fd.size(); ++b) {
    const double diff = std::abs(fd[b] - predicted[b]);
    const double tol = std::max(0.02 * std::max(1.0, std::abs(predicted[b])), 3.0 * h * h);
    max_diff = std::max(max_diff, diff);
    tolerance = std::max(tolerance, tol);
    if (diff > tol) match = false;
  }

  json report;
  report["command"] = "branches";
  report["outputs"] = json::array({"branches.csv", "matrix.csv"});
  report["summary"] = {{"lambda_bar", curves.lambda_bar},
                       {"anchor", curves.anchor},
                       {"fd_slopes", vector_to_json(fd)},
                       {"hadamard_slopes", vector_to_json(predicted)},
                       {"max_abs_slope_diff", max_diff},
                       {"slope_tolerance", tolerance},
                       {"slopes_match", match},
                       {"min_overlap", curves.overlap.minCoeff()}};
  return report;
}

json run_ls(const json& config, const RunContext& ctx, const Mesh& mesh,
            const MetricField& g, int k, double cluster_tol) {
  const Spectrum s = solve_spectrum(mesh, g, k, cluster_tol);
  const EigenCluster cl = select_cluster(config, s);
  const SymTensorField T = perturbation_from_config(config, mesh, g, cl);

  const json options = config.value("ls", json::object());
  const std::vector<double> ts = t_list(options, "/ls");
  const double window = number_or(options, "/ls", "window", 1.0);

  const Reduction red(mesh, g, T, cl);
  const std::string path = out_file(ctx, "roots.csv");
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out << "t,root_index,lambda_root,pencil_eigenvalue,abs_difference\n";

  double worst = 0.0;
  json per_t = json::array();
  for (const double t : ts) {
    const std::vector<double> roots = red.det_roots(t, cl.lambda_bar, window);
    const MetricField gt = metric_at_t(g, T, t);
    const std::vector<EigenPair> pencil =
        solve_gevp(assemble_stiffness(mesh, gt), assemble_mass(mesh, gt),
                   std::min(k, mesh.num_vertices()));
    double t_worst = 0.0;
    for (size_t i = 0; i < roots.size(); ++i) {
      double nearest = pencil.front().lambda;
      for (const auto& p : pencil)
        if (std::abs(p.lambda - roots[i]) < std::abs(nearest - roots[i])) nearest = p.lambda;
      const double diff = std::abs(roots[i] - nearest);
      t_worst = std::max(t_worst, diff);
      out << format_double(t) << ',' << i << ',' << format_double(roots[i]) << ','
          << format_double(nearest) << ',' << format_double(diff) << '\n';
    }
    worst = std::max(worst, t_worst);
    per_t.push_back({{"t", t},
                     {"roots", roots},
                     {"max_abs_difference", t_worst}});
  }
  if (!out) throw ValidationError("failed writing " + path);
  out.close();

  json report;
  report["command"] = "ls";
  report["outputs"] = json::array({"roots.csv"});
  report["summary"] = {{"lambda0", cl.lambda_bar},
                       {"multiplicity", cl.multiplicity},
                       {"window", window},
                       {"per_t", per_t},
                       {"max_abs_difference", worst}};
  return report;
}

json run_generic(const json& config, const RunContext& ctx, const Mesh& mesh,
                 const MetricField& g, int k, double cluster_tol) {
  const Spectrum s = solve_spectrum(mesh, g, k, cluster_tol);
  const EigenCluster cl = select_cluster(config, s);

  const json options = config.value("generic", json::object());
  const long samples = integer_or(options, "/generic", "samples", 20);
  const long seed = integer_or(options, "/generic", "seed", 1234);
  const double t_probe = number_or(options, "/generic", "t_probe", 0.01);
  const std::string family = string_or(options, "/generic", "family", "random");
  if (samples < 1) fail("/generic/samples", "need at least one sample");

  GenericityResult result;
  if (family == "random") {
    result = genericity_experiment(mesh, g, cl, static_cast<int>(samples),
                                   static_cast<std::uint64_t>(seed), t_probe);
  } else if (family == "conformal") {
    const double scale = number_or(options, "/generic", "scale", 0.3);
    SymTensorField direction(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) direction.at(v) = g.at(v) * scale;
    result = genericity_experiment(mesh, g, cl, static_cast<int>(samples),
                                   static_cast<std::uint64_t>(seed), t_probe,
                                   [&direction](std::uint64_t) { return direction; });
  } else {
    fail("/generic/family", "expected \"random\" or \"conformal\"");
  }
  write_genericity_csv(out_file(ctx, "generic.csv"), result);

  int confirmed = 0, refuted = 0, unprobed = 0;
  for (const auto& sample : result.samples) {
    if (sample.confirmed == 1) ++confirmed;
    else if (sample.confirmed == 0) ++refuted;
    else ++unprobed;
  }
  json report;
  report["command"] = "generic";
  report["outputs"] = json::array({"generic.csv"});
  report["summary"] = {{"lambda_bar", cl.lambda_bar},
                       {"samples", static_cast<int>(result.samples.size())},
                       {"family", family},
                       {"split_fraction", result.split_fraction},
                       {"gap_tol", result.gap_tol},
                       {"confirmed", confirmed},
                       {"refuted", refuted},
                       {"unprobed", unprobed}};
  return report;
}

json run_verify_calculus(const json& config, const RunContext& ctx) {
  const json options = config.value("calculus", json::object());
  const std::string suite = string_or(options, "/calculus", "suite", "all");
  std::vector<double> steps;
  if (auto it = options.find("steps"); it != options.end()) {
    if (!it->is_array()) fail("/calculus/steps", "expected a list of steps");
    for (const auto& v : *it) {
      if (!v.is_number() || v.get<double>() <= 0.0)
        fail("/calculus/steps", "steps must be positive numbers");
      steps.push_back(v.get<double>());
    }
  }

  const CalculusReport rep = run_calculus_suite(suite, steps);
  write_calculus_csv(out_file(ctx, "report.csv"), rep);

  json groups = json::array();
  std::string failing;
  for (const auto& g : rep.groups) {
    groups.push_back({{"identity", g.identity},
                      {"point", g.point},
                      {"fitted_order", g.fitted_order},
                      {"max_residual", g.max_residual},
                      {"pass", g.pass}});
    if (!g.pass && failing.empty()) failing = g.identity + " at " + g.point;
  }
  json report;
  report["command"] = "verify-calculus";
  report["outputs"] = json::array({"report.csv"});
  report["summary"] = {{"suite", suite}, {"groups", groups}, {"all_pass", rep.all_pass}};
  write_report(ctx, report);  // evidence lands on disk before the throw below
  if (!rep.all_pass)
    throw NumericalError("calculus identity check failed: " + failing +
                         " (see report.csv)");
  return report;
}

std::vector<std::string> split_fields(const std::string& text, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t end = text.find(sep, start);
    parts.push_back(text.substr(start, end == std::string::npos ? end : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return parts;
}

double parse_number(const std::string& text, const std::string& context) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(context + ": not a number: \"" + text + "\"");
  }
}

long parse_integer(const std::string& text, const std::string& context) {
  try {
    size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(context + ": not an integer: \"" + text + "\"");
  }
}

}  // namespace

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config: " + path + ": expected a JSON object");
  return doc;
}

json mesh_spec(const std::string& text) {
  const size_t colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string shape = text.substr(0, colon);
    if (shape == "square" || shape == "disk") {
      const long n = parse_integer(text.substr(colon + 1), "--mesh " + text);
      return json{{"shape", shape}, {"n", n}};
    }
  }
  if (text == "square" || text == "disk") return json{{"shape", text}};
  return json{{"path", text}};
}

json metric_spec(const std::string& text) {
  if (text == "identity") return json{{"type", "identity"}};
  const size_t colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "diag") {
    const std::vector<std::string> parts = split_fields(tail, ',');
    if (parts.size() != 2)
      throw ValidationError("--metric diag needs two entries, e.g. diag:4,9");
    return json{{"type", "diag"},
                {"a", parse_number(parts[0], "--metric " + text)},
                {"b", parse_number(parts[1], "--metric " + text)}};
  }
  if (head == "conformal") {
    json spec{{"type", "conformal"}, {"rho", "sinxy"}};
    if (!tail.empty()) spec["scale"] = parse_number(tail, "--metric " + text);
    return spec;
  }
  throw ValidationError("unknown metric spec \"" + text + "\"");
}

json tensor_spec(const std::string& text) {
  if (text == "zero" || text == "identity" || text == "splitting")
    return json{{"type", text}};
  const size_t colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "diag") {
    const std::vector<std::string> parts = split_fields(tail, ',');
    if (parts.size() != 2)
      throw ValidationError("--perturb diag needs two entries, e.g. diag:1,2");
    return json{{"type", "diag"},
                {"a", parse_number(parts[0], "--perturb " + text)},
                {"b", parse_number(parts[1], "--perturb " + text)}};
  }
  if (head == "random") {
    const std::vector<std::string> parts = split_fields(tail, ',');
    if (parts.empty() || parts.size() > 3)
      throw ValidationError("--perturb random needs seed[,amplitude,frequency_cap]");
    json spec{{"type", "random"},
              {"seed", parse_integer(parts[0], "--perturb " + text)}};
    if (parts.size() > 1) spec["amplitude"] = parse_number(parts[1], "--perturb " + text);
    if (parts.size() > 2)
      spec["frequency_cap"] = parse_integer(parts[2], "--perturb " + text);
    return spec;
  }
  if (head == "metric") {
    json spec{{"type", "metric"}};
    if (!tail.empty()) spec["scale"] = parse_number(tail, "--perturb " + text);
    return spec;
  }
  throw ValidationError("unknown perturbation spec \"" + text + "\"");
}

json run_experiment(const std::string& command, const json& config, const RunContext& ctx) {
  if (!config.is_object()) throw ValidationError("config: expected a JSON object");
  std::string stage = "cli";
  try {
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec)
      throw ValidationError("cannot create output directory " + ctx.out_dir + ": " +
                            ec.message());

    if (command == "verify-calculus") {
      stage = "chart_calculus";
      return run_verify_calculus(config, ctx);  // writes its own report
    }

    stage = "mesh";
    if (command == "mesh-gen") {
      const json report = run_mesh_gen(config, ctx);
      write_report(ctx, report);
      return report;
    }

    const Mesh mesh = mesh_from_config(config);
    stage = "metric";
    const MetricField g =
        metric_from_json(mesh, config.value("metric", json{{"type", "identity"}}), "/metric");

    const long k = integer_or(config, "", "k", 12);
    if (k < 1) fail("/k", "need at least one eigenpair");
    const double cluster_tol = number_or(config, "", "cluster_tol", 1e-3);
    if (cluster_tol <= 0.0) fail("/cluster_tol", "tolerance must be positive");

    json report;
    if (command == "eigs") {
      stage = "eigensolver";
      report = run_eigs(ctx, mesh, g, static_cast<int>(k), cluster_tol);
    } else if (command == "hadamard") {
      stage = "perturbation";
      report = run_hadamard(config, ctx, mesh, g, static_cast<int>(k), cluster_tol);
    } else if (command == "branches") {
      stage = "perturbation";
      report = run_branches(config, ctx, mesh, g, static_cast<int>(k), cluster_tol);
    } else if (command == "ls") {
      stage = "liapunov_schmidt";
      report = run_ls(config, ctx, mesh, g, static_cast<int>(k), cluster_tol);
    } else if (command == "generic") {
      stage = "perturbation";
      report = run_generic(config, ctx, mesh, g, static_cast<int>(k), cluster_tol);
    } else {
      stage = "cli";
      throw ValidationError("unknown command \"" + command + "\"");
    }
    write_report(ctx, report);
    return report;
  } catch (const ValidationError& e) {
    throw ValidationError(name_stage(stage, e.what()));
  } catch (const NumericalError& e) {
    throw NumericalError(name_stage(stage, e.what()));
  } catch (const json::exception& e) {
    // Config fields of the wrong JSON type surface here.
    throw ValidationError("config: " + std::string(e.what()) + " (while running " + stage +
                          ")");
  }
}

}  // namespace specdeform

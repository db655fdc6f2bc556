#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "specdeform/common.hpp"
#include "specdeform/experiment.hpp"

using nlohmann::json;
using specdeform::NumericalError;
using specdeform::RunContext;
using specdeform::ValidationError;

namespace {

// Parses "0.02" or "tmin:tmax:steps" into the config's "t" forms.
json parse_t_spec(const std::string& text) {
  const size_t first = text.find(':');
  if (first == std::string::npos) {
    try {
      size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return json(v);
    } catch (const std::exception&) {
      throw ValidationError("--t: not a number: \"" + text + "\"");
    }
  }
  const size_t second = text.find(':', first + 1);
  if (second == std::string::npos)
    throw ValidationError("--t range needs tmin:tmax:steps, got \"" + text + "\"");
  try {
    return json{{"tmin", std::stod(text.substr(0, first))},
                {"tmax", std::stod(text.substr(first + 1, second - first - 1))},
                {"steps", std::stol(text.substr(second + 1))}};
  } catch (const std::exception&) {
    throw ValidationError("--t range needs numbers, got \"" + text + "\"");
  }
}

std::vector<double> parse_step_list(const std::string& text) {
  std::vector<double> steps;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t end = text.find(',', start);
    const std::string field =
        text.substr(start, end == std::string::npos ? end : end - start);
    try {
      steps.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ValidationError("--steps: not a number: \"" + field + "\"");
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return steps;
}

}  // namespace

int main(int argc, char** argv) {
  // BLAS threading is nondeterministic across runs; pin it unless the caller
  // already chose.
  setenv("OPENBLAS_NUM_THREADS", "1", 0);

  CLI::App app{"Neumann eigenvalue deformation workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  RunContext ctx;
  app.add_option("--config", config_path, "JSON experiment config file");
  app.add_option("--out", ctx.out_dir, "output directory (default .)");
  app.add_flag("--deterministic", ctx.deterministic,
               "suppress the timestamp in report.json so reruns are byte-identical");
  app.add_option("--threads", ctx.threads, "worker threads for t-grid eigensolves")
      ->check(CLI::PositiveNumber);

  // Per-command overrides collected as config fragments; flags win over the
  // config file.
  std::string mesh_text, metric_text, perturb_text;
  auto add_geometry = [&](CLI::App* cmd, bool with_perturb) {
    cmd->add_option("--mesh", mesh_text, "square:N | disk:R | mesh file path");
    cmd->add_option("--metric", metric_text, "identity | diag:a,b | conformal:scale");
    if (with_perturb)
      cmd->add_option("--perturb", perturb_text,
                      "zero | identity | diag:a,b | random:seed[,amp,cap] | "
                      "metric:scale | splitting");
  };

  long cluster_index = -1;
  auto add_cluster = [&](CLI::App* cmd) {
    cmd->add_option("--cluster-index", cluster_index,
                    "cluster position in the ascending spectrum (default 1)");
  };

  CLI::App* mesh_cmd = app.add_subcommand("mesh", "mesh utilities");
  mesh_cmd->require_subcommand(1);
  CLI::App* gen = mesh_cmd->add_subcommand("gen", "generate a mesh file");
  std::string gen_shape = "square", gen_out = "mesh.txt";
  long gen_n = 16;
  gen->add_option("--shape", gen_shape, "square | disk")
      ->check(CLI::IsMember({"square", "disk"}));
  gen->add_option("--n", gen_n, "subdivisions per side (square) or rings (disk)");
  gen->add_option("--out", gen_out, "mesh file to write (default mesh.txt)");

  CLI::App* eigs = app.add_subcommand("eigs", "lowest Neumann eigenvalues and clusters");
  add_geometry(eigs, false);
  long eigs_k = -1;
  double eigs_tol = -1.0;
  eigs->add_option("--k", eigs_k, "how many eigenpairs (default 12)");
  eigs->add_option("--cluster-tol", eigs_tol, "relative clustering gap (default 1e-3)");

  CLI::App* hadamard = app.add_subcommand(
      "hadamard", "first-order eigenvalue response matrix of a cluster");
  add_geometry(hadamard, true);
  add_cluster(hadamard);
  bool hadamard_oracle = false;
  hadamard->add_flag("--oracle", hadamard_oracle,
                     "also emit the discrete K'/M' oracle matrix");

  CLI::App* branches = app.add_subcommand(
      "branches", "continue eigenvalue branches over a symmetric t-grid");
  add_geometry(branches, true);
  add_cluster(branches);
  double tmin = 1.0, tmax = -1.0;
  long grid_steps = -1;
  branches->add_option("--tmin", tmin, "left grid endpoint (default -0.05)");
  branches->add_option("--tmax", tmax, "right grid endpoint (default 0.05)");
  branches->add_option("--steps", grid_steps, "odd grid size (default 11)");

  CLI::App* ls_cmd = app.add_subcommand(
      "ls", "reduced-equation determinant roots vs the deformed pencil");
  add_geometry(ls_cmd, true);
  add_cluster(ls_cmd);
  std::string t_text;
  double ls_window = -1.0;
  ls_cmd->add_option("--t", t_text, "deformation parameter: value or tmin:tmax:steps");
  ls_cmd->add_option("--window", ls_window, "half-width of the root window (default 1.0)");

  CLI::App* generic = app.add_subcommand(
      "generic", "splitting fraction over sampled perturbation directions");
  add_geometry(generic, false);
  add_cluster(generic);
  long samples = -1, seed = -1;
  double t_probe = -1.0, conformal_scale = -1.0;
  std::string family;
  generic->add_option("--samples", samples, "directions to draw (default 20)");
  generic->add_option("--seed", seed, "base RNG seed (default 1234)");
  generic->add_option("--t-probe", t_probe,
                      "eigensolve confirmation offset (default 0.01, 0 disables)");
  generic->add_option("--family", family, "random | conformal")
      ->check(CLI::IsMember({"random", "conformal"}));
  generic->add_option("--scale", conformal_scale, "conformal family factor (default 0.3)");

  CLI::App* verify = app.add_subcommand(
      "verify-calculus", "finite-difference checks of the calculus identities");
  std::string suite;
  std::string steps_text;
  verify->add_option("--suite", suite, "lemma1 | lemma2 | props | prop3 | htilde | all")
      ->check(CLI::IsMember({"lemma1", "lemma2", "props", "prop3", "htilde", "all"}));
  verify->add_option("--steps", steps_text, "comma list of FD steps, e.g. 8e-3,4e-3,2e-3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    json config = config_path.empty() ? json::object() : specdeform::load_config(config_path);

    auto given = [](CLI::App* cmd, const std::string& name) {
      const CLI::Option* option = cmd->get_option_no_throw(name);
      return option != nullptr && option->count() > 0;
    };
    auto apply_common = [&](CLI::App* cmd) {
      if (given(cmd, "--mesh")) config["mesh"] = specdeform::mesh_spec(mesh_text);
      if (given(cmd, "--metric")) config["metric"] = specdeform::metric_spec(metric_text);
      if (given(cmd, "--perturb"))
        config["perturbation"] = specdeform::tensor_spec(perturb_text);
      if (given(cmd, "--cluster-index")) config["cluster"] = {{"index", cluster_index}};
    };

    std::string command;
    if (gen->parsed()) {
      command = "mesh-gen";
      json spec{{"shape", gen_shape}, {"n", gen_n}};
      if (gen->count("--shape") || gen->count("--n") || !config.contains("mesh"))
        config["mesh"] = spec;
      if (gen->count("--out") || !config.contains("out")) config["out"] = gen_out;
    } else if (eigs->parsed()) {
      command = "eigs";
      apply_common(eigs);
      if (eigs->count("--k")) config["k"] = eigs_k;
      if (eigs->count("--cluster-tol")) config["cluster_tol"] = eigs_tol;
    } else if (hadamard->parsed()) {
      command = "hadamard";
      apply_common(hadamard);
      if (hadamard_oracle) config["hadamard"] = {{"oracle", true}};
    } else if (branches->parsed()) {
      command = "branches";
      apply_common(branches);
      json grid = config.value("branches", json::object());
      if (branches->count("--tmin")) grid["tmin"] = tmin;
      if (branches->count("--tmax")) grid["tmax"] = tmax;
      if (branches->count("--steps")) grid["steps"] = grid_steps;
      if (!grid.empty()) config["branches"] = grid;
    } else if (ls_cmd->parsed()) {
      command = "ls";
      apply_common(ls_cmd);
      json opts = config.value("ls", json::object());
      if (ls_cmd->count("--t")) opts["t"] = parse_t_spec(t_text);
      if (ls_cmd->count("--window")) opts["window"] = ls_window;
      if (!opts.empty()) config["ls"] = opts;
    } else if (generic->parsed()) {
      command = "generic";
      apply_common(generic);
      json opts = config.value("generic", json::object());
      if (generic->count("--samples")) opts["samples"] = samples;
      if (generic->count("--seed")) opts["seed"] = seed;
      if (generic->count("--t-probe")) opts["t_probe"] = t_probe;
      if (generic->count("--family")) opts["family"] = family;
      if (generic->count("--scale")) opts["scale"] = conformal_scale;
      if (!opts.empty()) config["generic"] = opts;
    } else if (verify->parsed()) {
      command = "verify-calculus";
      json opts = config.value("calculus", json::object());
      if (verify->count("--suite")) opts["suite"] = suite;
      if (verify->count("--steps")) opts["steps"] = parse_step_list(steps_text);
      if (!opts.empty()) config["calculus"] = opts;
    }

    const json report = specdeform::run_experiment(command, config, ctx);
    for (const auto& name : report.value("outputs", json::array()))
      std::printf("wrote %s\n", name.get<std::string>().c_str());
    std::printf("wrote %s/report.json\n", ctx.out_dir.c_str());
    return 0;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "specdeform: validation error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "specdeform: numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "specdeform: %s\n", e.what());
    return 3;
  }
}

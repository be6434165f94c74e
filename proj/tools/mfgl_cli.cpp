// mfgl: plan high-fidelity acquisition, estimate multi-fidelity corrections,
// and run synthetic benchmarks.
//
// Exit codes: 0 ok, 1 internal error, 2 I/O error, 3 validation error,
// 4 numerical failure. Errors are also written to stderr as one JSON object.

#include "mfgl/mfgl.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mfgl::Index;
using mfgl::Matrix;
using mfgl::RunConfig;

namespace {

int exit_code(mfgl::ErrorCategory c) {
  switch (c) {
    case mfgl::ErrorCategory::Io: return 2;
    case mfgl::ErrorCategory::Validation: return 3;
    case mfgl::ErrorCategory::Numerical: return 4;
  }
  return 1;
}

std::string category_name(mfgl::ErrorCategory c) {
  switch (c) {
    case mfgl::ErrorCategory::Io: return "io";
    case mfgl::ErrorCategory::Validation: return "validation";
    case mfgl::ErrorCategory::Numerical: return "numerical";
  }
  return "internal";
}

int report_error(const std::string& code, const std::string& category, const std::string& message,
                 int status, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json err = {{"code", code},
                        {"category", category},
                        {"message", message},
                        {"exit_code", status}};
  err.update(extra);
  std::cerr << nlohmann::json{{"error", err}}.dump() << '\n';
  return status;
}

/// Registers a flag whose value is applied to the config only when given on
/// the command line, so explicit flags override --config.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <class T>
  void add(const std::string& name, const std::string& help,
           std::function<void(RunConfig&, const T&)> set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(name, *value, help);
    setters_.push_back([opt, value, set](RunConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
  }

  void flag(const std::string& name, const std::string& help,
            std::function<void(RunConfig&)> set) {
    CLI::Option* opt = app_->add_flag(name, help);
    setters_.push_back([opt, set](RunConfig& c) {
      if (opt->count() > 0) set(c);
    });
  }

  void apply(RunConfig& c) const {
    for (const auto& s : setters_) s(c);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(RunConfig&)>> setters_;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Flags> flags;
  std::string config_path;
};

void add_common_flags(Command& cmd) {
  Flags& f = *cmd.flags;
  cmd.app->add_option("--config", cmd.config_path, "JSON config; explicit flags take precedence");
  f.add<std::string>("--lf-path", "low-fidelity matrix (csv or bin)",
                     [](RunConfig& c, const std::string& v) { c.lf_path = v; });
  f.add<std::string>("--ids-path", "parameter ids, one per lf row",
                     [](RunConfig& c, const std::string& v) { c.ids_path = v; });
  f.add<std::string>("--output-dir", "directory for outputs",
                     [](RunConfig& c, const std::string& v) { c.output_dir = v; });
  f.add<std::string>("--format", "matrix format: csv or bin", [](RunConfig& c, const std::string& v) {
    c.format = mfgl::format_from_string(v);
  });
  f.flag("--csv-header", "CSV inputs carry a header row", [](RunConfig& c) { c.csv_header = true; });
  f.add<std::string>("--normalization", "none, standardize or unit-norm",
                     [](RunConfig& c, const std::string& v) {
                       c.normalization = mfgl::normalization_from_string(v);
                     });
  f.add<double>("--p", "left Laplacian exponent", [](RunConfig& c, const double& v) { c.p = v; });
  f.add<double>("--q", "right Laplacian exponent", [](RunConfig& c, const double& v) { c.q = v; });
  f.add<Index>("--knn-k", "neighbour index for the kernel scales",
               [](RunConfig& c, const Index& v) { c.knn_k = v; });
  f.add<std::string>("--solver", "dense, truncated or nystrom", [](RunConfig& c, const std::string& v) {
    c.solver = mfgl::solver_from_string(v);
  });
  f.add<Index>("--k", "truncation size or landmark count",
               [](RunConfig& c, const Index& v) { c.k = v; });
  f.add<Index>("--m", "number of high-fidelity points", [](RunConfig& c, const Index& v) { c.m = v; });
  f.add<Index>("--embed-dim", "embedding dimension for acquisition (default M)",
               [](RunConfig& c, const Index& v) { c.embed_dim = v; });
  f.add<std::uint64_t>("--seed", "random seed",
                       [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
  f.add<Index>("--rank-r", "keep the r largest eigenvalues of W(X, X)",
               [](RunConfig& c, const Index& v) { c.rank_r = v; });
  f.add<unsigned>("--threads", "worker threads (0 = all cores); overrides MFGL_THREADS",
                  [](RunConfig& c, const unsigned& v) { c.threads = v; });
}

std::optional<double> auto_or_number(const std::string& v, const std::string& flag) {
  if (v == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw mfgl::Error(mfgl::ErrorCode::InvalidArgument, flag + " must be 'auto' or a number");
}

void add_estimate_flags(Command& cmd) {
  Flags& f = *cmd.flags;
  f.add<double>("--sigma", "high-fidelity noise std (normalized units)",
                [](RunConfig& c, const double& v) { c.sigma = v; });
  f.add<double>("--beta", "prior exponent", [](RunConfig& c, const double& v) { c.beta = v; });
  f.add<double>("--r", "calibration ratio", [](RunConfig& c, const double& v) { c.r = v; });
  f.add<std::string>("--omega", "'auto' or a fixed value", [](RunConfig& c, const std::string& v) {
    c.omega = auto_or_number(v, "--omega");
  });
  f.add<std::string>("--tau", "'auto' or a fixed value", [](RunConfig& c, const std::string& v) {
    c.tau = auto_or_number(v, "--tau");
  });
  f.add<std::string>("--saddle-method", "symmetric, unsymmetric or woodbury",
                     [](RunConfig& c, const std::string& v) {
                       c.saddle_method = mfgl::saddle_method_from_string(v);
                     });
}

RunConfig resolve_config(const Command& cmd) {
  RunConfig c;
  if (!cmd.config_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(mfgl::io::read_text(cmd.config_path));
    } catch (const nlohmann::json::exception& e) {
      throw mfgl::Error(mfgl::ErrorCode::FileFormat,
                        "config " + cmd.config_path + " is not valid JSON: " + e.what());
    }
    mfgl::merge_json(c, j);
  }
  cmd.flags->apply(c);
  mfgl::validate(c);
  return c;
}

void apply_threads(const RunConfig& c) {
  if (c.threads > 0) {
    mfgl::set_thread_count(c.threads);
  } else if (const char* env = std::getenv("MFGL_THREADS")) {
    try {
      mfgl::set_thread_count(static_cast<unsigned>(std::stoul(env)));
    } catch (const std::exception&) {
      throw mfgl::Error(mfgl::ErrorCode::InvalidArgument, "MFGL_THREADS must be an integer");
    }
  }
}

mfgl::io::MatrixFormat matrix_format(const RunConfig& c) {
  return c.format.value_or(mfgl::io::format_from_path(c.lf_path));
}

Matrix read_input(const std::string& path, const RunConfig& c) {
  return mfgl::io::read_matrix(path, c.format.value_or(mfgl::io::format_from_path(path)),
                               c.csv_header);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  mfgl::io::write_text(path, j.dump(2) + "\n");
}

fs::path output_dir(const RunConfig& c) {
  fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw mfgl::Error(mfgl::ErrorCode::FileOpen, "cannot create " + dir.string());
  return dir;
}

void write_stddevs(const fs::path& path, const mfgl::Vector& s) {
  mfgl::io::write_text(path, mfgl::io::format_csv(Matrix(s), {"stddev"}));
}

int cmd_plan(const Command& cmd) {
  const RunConfig c = resolve_config(cmd);
  apply_threads(c);
  mfgl::detail::require(!c.lf_path.empty(), mfgl::ErrorCode::InvalidArgument, "--lf-path is required");
  mfgl::detail::require(c.m >= 1, mfgl::ErrorCode::InvalidArgument, "--m must be >= 1 to plan");
  const Matrix lf = read_input(c.lf_path, c);
  std::optional<std::vector<std::string>> ids;
  if (!c.ids_path.empty()) ids = mfgl::io::read_ids(c.ids_path);
  const mfgl::Dataset data(lf, std::nullopt, ids);

  const mfgl::PlanStageResult planned = mfgl::plan_stage(lf, c);
  const mfgl::Dataset permuted = mfgl::apply_permutation(data, planned.plan);
  const fs::path dir = output_dir(c);
  const auto fmt = matrix_format(c);
  write_json(dir / "plan.json", mfgl::to_json(planned.plan));
  mfgl::io::write_matrix(dir / (std::string("lf_permuted") + std::string(mfgl::io::extension(fmt))),
                         permuted.lf(), fmt);
  if (permuted.param_ids()) {
    std::string text;
    for (const auto& id : *permuted.param_ids()) text += id + "\n";
    mfgl::io::write_text(dir / "ids_permuted.txt", text);
  }
  for (Index i : planned.plan.selected_indices) {
    if (ids)
      std::cout << (*ids)[static_cast<std::size_t>(i)] << '\n';
    else
      std::cout << i << '\n';
  }
  return 0;
}

int cmd_estimate(const Command& cmd) {
  const RunConfig c = resolve_config(cmd);
  apply_threads(c);
  mfgl::detail::require(!c.lf_path.empty(), mfgl::ErrorCode::InvalidArgument, "--lf-path is required");
  mfgl::detail::require(!c.hf_path.empty(), mfgl::ErrorCode::InvalidArgument, "--hf-path is required");
  const Matrix lf = read_input(c.lf_path, c);
  const Matrix hf = read_input(c.hf_path, c);
  if (c.m > 0 && hf.rows() != c.m)
    throw mfgl::Error(mfgl::ErrorCode::RowCountMismatch,
                      "hf has " + std::to_string(hf.rows()) + " rows, expected M = " +
                          std::to_string(c.m));
  if (!c.plan_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(mfgl::io::read_text(c.plan_path));
    } catch (const nlohmann::json::exception& e) {
      throw mfgl::Error(mfgl::ErrorCode::FileFormat, std::string("plan is not valid JSON: ") + e.what());
    }
    const mfgl::AcquisitionPlan plan = mfgl::plan_from_json(j);
    if (plan.n() != lf.rows() || plan.m() != hf.rows())
      throw mfgl::Error(mfgl::ErrorCode::RowCountMismatch,
                        "plan expects N = " + std::to_string(plan.n()) + ", M = " +
                            std::to_string(plan.m()) + "; got N = " + std::to_string(lf.rows()) +
                            ", M = " + std::to_string(hf.rows()));
  }
  const mfgl::Dataset data(lf, hf);
  const mfgl::EstimateResult est = mfgl::estimate_stage(data, c);

  const fs::path dir = output_dir(c);
  const auto fmt = matrix_format(c);
  mfgl::io::write_matrix(dir / (std::string("mf_estimates") + std::string(mfgl::io::extension(fmt))),
                         est.posterior.mf_estimates, fmt);
  write_stddevs(dir / "stddevs.csv", est.posterior.stddevs);
  nlohmann::json hp = est.hyperparameters ? mfgl::to_json(*est.hyperparameters) : nlohmann::json::object();
  hp["solver"] = std::string(mfgl::to_string(est.posterior.solver_tag));
  hp["dropped_columns"] = est.dropped_columns;
  if (est.calibration) {
    hp["calibration"] = {{"target", est.calibration->target},
                         {"achieved", est.calibration->achieved},
                         {"evaluations", est.calibration->trace.size()}};
  }
  write_json(dir / "hyperparameters.json", hp);
  write_json(dir / "timings.json", mfgl::to_json(est.timings));
  if (est.embedding.size() > 0)
    mfgl::io::write_text(dir / "embedding.csv", mfgl::io::format_csv(est.embedding));
  return 0;
}

struct BenchFlags {
  std::string generator = "clustered-shift";
  Index n = 1000;
  Index d = 5;
  Index clusters = 10;
  double noise_fraction = 0.01;
  double displacement_fraction = 0.3;
  double cluster_std = 0.5;
  std::uint64_t generator_seed = 1;
  std::string metric = "component";
};

int cmd_bench(const Command& cmd, const BenchFlags& b) {
  RunConfig c = resolve_config(cmd);
  apply_threads(c);
  mfgl::GeneratorSpec spec;
  spec.id = mfgl::generator_from_string(b.generator);
  spec.n = b.n;
  spec.d = b.d;
  spec.clusters = b.clusters;
  spec.noise_fraction = b.noise_fraction;
  spec.displacement_fraction = b.displacement_fraction;
  spec.cluster_std = b.cluster_std;
  spec.seed = b.generator_seed;
  const mfgl::ErrorMetric metric = mfgl::metric_from_string(b.metric);
  const mfgl::SyntheticProblem problem = mfgl::generate(spec);
  if (!c.sigma) c.sigma = mfgl::normalized_sigma(problem, c.normalization);
  if (c.m == 0 && !cmd.app->get_option("--m")->count()) c.m = spec.clusters;

  const mfgl::PipelineRun run = mfgl::run_pipeline(problem, c, metric);

  const fs::path dir = output_dir(c);
  nlohmann::json report = mfgl::to_json(run.report);
  report["generator"] = std::string(mfgl::to_string(spec.id));
  report["n"] = spec.n;
  report["d"] = spec.d;
  report["m"] = c.m;
  report["solver"] = std::string(mfgl::to_string(c.solver));
  report["hf_noise_sigma"] = problem.hf_noise_sigma;
  report["selected_indices"] = run.plan.selected_indices;
  if (run.estimate.hyperparameters) report["hyperparameters"] = mfgl::to_json(*run.estimate.hyperparameters);
  report["timings"] = mfgl::to_json(run.timings);
  write_json(dir / "report.json", report);

  const Index cols = run.report.per_point.cols();
  const bool has_stddev = run.estimate.posterior.stddevs.size() == problem.n();
  Matrix table(problem.n(), 2 * cols + 1 + (has_stddev ? 1 : 0));
  std::vector<std::string> header{"original_index"};
  for (Index i = 0; i < problem.n(); ++i)
    table(i, 0) = static_cast<double>(run.plan.permutation[static_cast<std::size_t>(i)]);
  table.middleCols(1, cols) = run.report.per_point_lf;
  table.middleCols(1 + cols, cols) = run.report.per_point;
  for (Index k = 0; k < cols; ++k) header.push_back("lf_error_" + std::to_string(k));
  for (Index k = 0; k < cols; ++k) header.push_back("mf_error_" + std::to_string(k));
  if (has_stddev) {
    table.col(2 * cols + 1) = run.estimate.posterior.stddevs;
    header.push_back("stddev");
  }
  mfgl::io::write_text(dir / "per_point.csv", mfgl::io::format_csv(table, header));
  if (run.estimate.embedding.size() > 0)
    mfgl::io::write_text(dir / "embedding.csv", mfgl::io::format_csv(run.estimate.embedding));

  std::cout << "mean lf error " << run.report.mean_lf << "%, mean mf error " << run.report.mean_mf
            << "%, reduction " << run.report.reduction << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity estimation with graph-Laplacian priors"};
  app.require_subcommand(1);

  Command plan{app.add_subcommand("plan", "choose the points to evaluate with the high-fidelity model")};
  plan.flags = std::make_unique<Flags>(plan.app);
  add_common_flags(plan);

  Command estimate{app.add_subcommand("estimate", "compute multi-fidelity estimates")};
  estimate.flags = std::make_unique<Flags>(estimate.app);
  add_common_flags(estimate);
  add_estimate_flags(estimate);
  estimate.flags->add<std::string>("--hf-path", "high-fidelity rows for the first M points",
                                   [](RunConfig& c, const std::string& v) { c.hf_path = v; });
  estimate.flags->add<std::string>("--plan-path", "plan.json to check row counts against",
                                   [](RunConfig& c, const std::string& v) { c.plan_path = v; });

  Command bench{app.add_subcommand("bench", "run a synthetic benchmark end to end")};
  bench.flags = std::make_unique<Flags>(bench.app);
  add_common_flags(bench);
  add_estimate_flags(bench);
  BenchFlags bf;
  bench.app->add_option("--generator", bf.generator, "clustered-shift, smooth-manifold or beam-like-1d");
  bench.app->add_option("--n", bf.n, "number of points");
  bench.app->add_option("--d", bf.d, "components per point");
  bench.app->add_option("--clusters", bf.clusters, "clusters (clustered-shift)");
  bench.app->add_option("--noise-fraction", bf.noise_fraction, "hf noise relative to the displacement");
  bench.app->add_option("--displacement-fraction", bf.displacement_fraction,
                        "displacement relative to the data scale");
  bench.app->add_option("--cluster-std", bf.cluster_std, "within-cluster spread");
  bench.app->add_option("--generator-seed", bf.generator_seed, "seed for the synthetic data");
  bench.app->add_option("--metric", bf.metric, "component or field");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", "validation", e.what(), 3);
  }

  try {
    if (*plan.app) return cmd_plan(plan);
    if (*estimate.app) return cmd_estimate(estimate);
    if (*bench.app) return cmd_bench(bench, bf);
  } catch (const mfgl::Error& e) {
    nlohmann::json extra = nlohmann::json::object();
    if (e.index()) extra["index"] = *e.index();
    if (e.value()) extra["value"] = *e.value();
    return report_error(std::string(mfgl::to_string(e.code())), category_name(e.category()), e.what(),
                        exit_code(e.category()), extra);
  } catch (const std::exception& e) {
    return report_error("Internal", "internal", e.what(), 1);
  }
  return 1;
}

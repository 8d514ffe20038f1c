// Command-line front end: learn-dict, train, embed, eval, export-features,
// check-grad. Exit codes: 0 success, 2 validation error, 3 numerical error,
// 4 I/O error.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sparlow/sparlow.hpp"

namespace {

struct CommonArgs {
  std::string data;
  std::string labels;
  std::string format = "csv";
  std::string variant = "pca";
  int atoms = 64;
  int dim = 2;
  double lambda1 = 0.2;
  double lambda2 = 1e-3;
  double sigma = 1e-3;
  double mu1 = 2.5e-4;
  double mu2 = 5e-3;
  int knn = 5;
  double heat_t = 0.0;
  int k1 = 3;
  int k2 = 5;
  double alpha = 0.1;
  double alpha1 = 0.1;
  double alpha2 = 0.01;
  double mu_mvr = 1.0;
  double rho1 = 1.0;
  double rho2 = 0.1;
  int max_iter = 200;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  std::string model;
  std::string out;
  bool verbose = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--data", args->data, "input data file");
  cmd->add_option("--labels", args->labels, "label file (one integer per line, -1 unlabeled)");
  cmd->add_option("--format", args->format, "data format: csv|raw")->default_str("csv");
  cmd->add_option("--variant", args->variant,
                  "pca|lle|lap|lda|mfa|mvr|sda|slap|smvr");
  cmd->add_option("--atoms", args->atoms, "dictionary size r");
  cmd->add_option("--dim", args->dim, "target dimension l");
  cmd->add_option("--lambda1", args->lambda1, "elastic net l1 weight");
  cmd->add_option("--lambda2", args->lambda2, "elastic net l2 weight");
  cmd->add_option("--sigma", args->sigma, "trace-quotient denominator guard");
  cmd->add_option("--mu1", args->mu1, "coherence barrier weight");
  cmd->add_option("--mu2", args->mu2, "anchor regularizer weight");
  cmd->add_option("--knn", args->knn, "neighborhood size");
  cmd->add_option("--heat-t", args->heat_t, "heat kernel scale (<=0: data-driven)");
  cmd->add_option("--k1", args->k1, "MFA same-label neighbors");
  cmd->add_option("--k2", args->k2, "MFA different-label neighbors");
  cmd->add_option("--alpha", args->alpha, "SDA graph mixing weight");
  cmd->add_option("--alpha1", args->alpha1, "SLap numerator graph weight");
  cmd->add_option("--alpha2", args->alpha2, "SLap denominator graph weight");
  cmd->add_option("--mu-mvr", args->mu_mvr, "MVR ridge weight");
  cmd->add_option("--rho1", args->rho1, "SMVR ridge weight");
  cmd->add_option("--rho2", args->rho2, "SMVR manifold weight");
  cmd->add_option("--max-iter", args->max_iter, "CG iteration cap");
  cmd->add_option("--tol", args->tol, "CG step tolerance");
  cmd->add_option("--seed", args->seed, "RNG seed");
  cmd->add_option("--model", args->model, "model file path");
  cmd->add_option("--out", args->out, "output file path");
  cmd->add_flag("--verbose", args->verbose, "per-iteration log on stderr");
}

sparlow::TrainConfig make_train_config(const CommonArgs& args) {
  sparlow::TrainConfig cfg;
  cfg.graph.variant = sparlow::variant_from_name(args.variant);
  cfg.graph.knn = args.knn;
  cfg.graph.heat_t = args.heat_t;
  cfg.graph.k1 = args.k1;
  cfg.graph.k2 = args.k2;
  cfg.graph.alpha = args.alpha;
  cfg.graph.alpha1 = args.alpha1;
  cfg.graph.alpha2 = args.alpha2;
  cfg.graph.mu_mvr = args.mu_mvr;
  cfg.graph.rho1 = args.rho1;
  cfg.graph.rho2 = args.rho2;
  cfg.prior = {args.lambda1, args.lambda2};
  cfg.sigma = args.sigma;
  cfg.mu1 = args.mu1;
  cfg.mu2 = args.mu2;
  cfg.atoms = args.atoms;
  cfg.dim = args.dim;
  cfg.seed = args.seed;
  cfg.cg.max_iters = args.max_iter;
  cfg.cg.step_tol = args.tol;
  cfg.cg.seed = args.seed;
  if (args.verbose) {
    cfg.cg.on_iteration = [](const sparlow::IterRecord& rec) {
      std::cerr << sparlow::format_iter_record(rec) << '\n';
    };
  }
  return cfg;
}

sparlow::Dataset load_from_args(const CommonArgs& args) {
  if (args.data.empty()) throw sparlow::ValidationError("--data is required");
  return sparlow::load_dataset(args.data, sparlow::format_from_name(args.format),
                               args.labels);
}

int run_learn_dict(const CommonArgs& args) {
  sparlow::Dataset ds = load_from_args(args);
  if (args.out.empty()) throw sparlow::ValidationError("--out is required");
  sparlow::ElasticNetPrior prior{args.lambda1, args.lambda2};
  std::vector<double> recon;
  const int iters = std::min(args.max_iter, 50);
  sparlow::Dictionary d = [&] {
    if (ds.labels.has_value() && !args.labels.empty()) {
      return sparlow::init_dictionary_per_class(ds.x, *ds.labels, args.atoms, prior,
                                                iters, args.seed);
    }
    return sparlow::init_dictionary(ds.x, args.atoms, prior, iters, args.seed, &recon);
  }();
  sparlow::save_matrix_raw(args.out, d.matrix());
  if (args.verbose && !recon.empty()) {
    std::cerr << "reconstruction error per alternation:";
    for (double e : recon) std::cerr << ' ' << e;
    std::cerr << '\n';
  }
  std::cout << "dictionary " << d.dim() << "x" << d.atoms() << " written to " << args.out
            << '\n';
  return 0;
}

int run_train(const CommonArgs& args) {
  sparlow::Dataset ds = load_from_args(args);
  const std::string out = !args.out.empty() ? args.out : args.model;
  if (out.empty()) throw sparlow::ValidationError("--out (or --model) is required");
  sparlow::TrainConfig cfg = make_train_config(args);
  sparlow::TrainResult res = sparlow::train(ds, cfg);
  sparlow::save_model(res.model, out);
  std::cout << "variant " << sparlow::variant_name(cfg.graph.variant) << ": J "
            << res.initial.J_value << " -> " << res.final.J_value << " in "
            << res.trace.accepted_steps() << " accepted steps"
            << (res.trace.stagnated ? " (stagnated)" : "") << "; model written to " << out
            << '\n';
  return 0;
}

int run_embed(const CommonArgs& args) {
  if (args.model.empty()) throw sparlow::ValidationError("--model is required");
  if (args.out.empty()) throw sparlow::ValidationError("--out is required");
  sparlow::Model model = sparlow::load_model(args.model);
  sparlow::Dataset ds = load_from_args(args);
  sparlow::Matrix y = sparlow::embed(model, ds.x);
  // one embedded sample per row, matching the dataset convention
  sparlow::save_matrix_csv(args.out, y.transpose());
  std::cout << "embedded " << y.cols() << " samples to dimension " << y.rows()
            << "; written to " << args.out << '\n';
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& test_data,
             const std::string& test_labels) {
  if (args.model.empty()) throw sparlow::ValidationError("--model is required");
  sparlow::Model model = sparlow::load_model(args.model);
  sparlow::Dataset train_ds = load_from_args(args);
  if (!train_ds.labels.has_value()) {
    throw sparlow::ValidationError("eval: training data needs labels");
  }
  sparlow::Dataset test_ds = train_ds;
  if (!test_data.empty()) {
    test_ds = sparlow::load_dataset(test_data, sparlow::format_from_name(args.format),
                                    test_labels);
  }
  if (!test_ds.labels.has_value()) {
    throw sparlow::ValidationError("eval: test data needs labels");
  }
  sparlow::Matrix train_embed = sparlow::embed(model, train_ds.x);
  sparlow::Matrix test_embed = sparlow::embed(model, test_ds.x);
  const double acc = sparlow::evaluate_1nn(train_embed, train_ds.labels->labels,
                                           test_embed, test_ds.labels->labels);
  std::printf("1nn-accuracy %.6f\n", acc);
  return 0;
}

int run_export_features(const CommonArgs& args) {
  if (args.model.empty()) throw sparlow::ValidationError("--model is required");
  if (args.out.empty()) throw sparlow::ValidationError("--out is required");
  sparlow::Model model = sparlow::load_model(args.model);
  sparlow::export_features(model, args.out);
  std::cout << "feature matrix " << model.d.dim() << "x" << model.p.rank()
            << " written to " << args.out << '\n';
  return 0;
}

int run_check_grad(const CommonArgs& args, int probes) {
  sparlow::Dataset ds;
  CommonArgs local = args;
  if (args.data.empty()) {
    // default verification instance
    ds = sparlow::synthetic_blobs(8, 20, 4, args.seed + 7);
    local.atoms = 12;
    local.dim = 3;
  } else {
    ds = load_from_args(args);
  }
  sparlow::TrainConfig cfg = make_train_config(local);
  cfg.dict_iters = 3;
  sparlow::CheckGradOptions opts;
  opts.probes = probes;
  opts.seed = args.seed + 1;
  sparlow::CheckGradReport rep = sparlow::check_grad(ds, cfg, opts);
  std::printf("grad-D     max relative error %.3e\n", rep.err_grad_d);
  std::printf("grad-P     max relative error %.3e\n", rep.err_grad_p);
  std::printf("riemannian max relative error %.3e\n", rep.err_riemannian);
  std::printf("jacobian   max relative error %.3e\n", rep.err_jacobian);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"SparLow: joint sparse coding and trace-quotient dimensionality reduction"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string test_data, test_labels;
  int probes = 5;

  CLI::App* learn = app.add_subcommand("learn-dict", "MOD-style dictionary initialization");
  add_common_flags(learn, &args);
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common_flags(train, &args);
  CLI::App* embed = app.add_subcommand("embed", "embed samples with a trained model");
  add_common_flags(embed, &args);
  CLI::App* eval = app.add_subcommand("eval", "1NN accuracy of a trained model");
  add_common_flags(eval, &args);
  eval->add_option("--test-data", test_data, "held-out data (defaults to --data)");
  eval->add_option("--test-labels", test_labels, "held-out labels");
  CLI::App* exportf = app.add_subcommand("export-features", "write D*U as CSV");
  add_common_flags(exportf, &args);
  CLI::App* check = app.add_subcommand("check-grad", "finite-difference gradient check");
  add_common_flags(check, &args);
  check->add_option("--probes", probes, "directions per gradient block");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (learn->parsed()) return run_learn_dict(args);
    if (train->parsed()) return run_train(args);
    if (embed->parsed()) return run_embed(args);
    if (eval->parsed()) return run_eval(args, test_data, test_labels);
    if (exportf->parsed()) return run_export_features(args);
    if (check->parsed()) return run_check_grad(args, probes);
  } catch (const sparlow::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const sparlow::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const sparlow::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

// Copyright 2026 The dgpflow Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: synthesize toy data, train deep sparse GP models
// with either the flow or the mean-field posterior, evaluate checkpoints on
// held-out data, and run depth/posterior comparison sweeps.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgpflow/dgpflow.hpp"

namespace {

using namespace dgpflow;

std::vector<std::size_t> parse_size_list(const std::string& s,
                                         const char* what) {
  std::vector<std::size_t> out;
  std::string cur;
  const auto flush = [&] {
    if (cur.empty()) throw ConfigError(std::string(what) + ": empty entry");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(cur.c_str(), &end, 10);
    if (end != cur.c_str() + cur.size())
      throw ConfigError(std::string(what) + ": bad entry '" + cur + "'");
    out.push_back(static_cast<std::size_t>(v));
    cur.clear();
  };
  for (char c : s) {
    if (c == ',')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return out;
}

std::string dataset_csv(const Matrix& x, const std::vector<double>& y,
                        const std::vector<std::string>& features,
                        const std::string& target) {
  std::ostringstream out;
  for (const std::string& f : features) out << f << ',';
  out << target << "\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j)
      out << format_double(x(i, j)) << ',';
    out << format_double(y[i]) << "\n";
  }
  return out.str();
}

// Layer widths from --layers/--dims: the last layer is always scalar; the
// hidden widths come from --dims (single value broadcasts) or default to
// the input dimension.
std::vector<std::size_t> resolve_widths(std::size_t layers,
                                        const std::string& dims,
                                        std::size_t input_dim) {
  if (layers == 0) throw ConfigError("--layers must be at least 1");
  std::vector<std::size_t> hidden;
  if (!dims.empty()) {
    hidden = parse_size_list(dims, "--dims");
    if (hidden.size() == 1 && layers > 2)
      hidden.assign(layers - 1, hidden[0]);
    if (hidden.size() != layers - 1)
      throw ConfigError("--dims must give " + std::to_string(layers - 1) +
                        " hidden widths for --layers " +
                        std::to_string(layers));
  } else {
    hidden.assign(layers - 1, input_dim);
  }
  hidden.push_back(1);
  return hidden;
}

struct CommonTrainFlags {
  std::string data, target, dims, out = "run";
  std::size_t layers = 2, inducing = 16, iters = 1000, batch = 0;
  std::size_t mc_samples = 1, eval_samples = 100, flow_steps = 1;
  std::uint64_t seed = 0;
  double lr = 0.005, split = 0.9, jitter = 1e-8;
  bool activation = false;
  std::string posterior = "cnf";
  std::string config;
};

// Applies a flat key=value config file to a subcommand's options. Values
// given on the command line (or via an environment variable) win; file
// values fill in the rest. Unknown keys and unreadable files are
// configuration errors.
void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  std::vector<CLI::ConfigItem> items;
  try {
    items = cmd->get_config_formatter()->from_file(path);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const CLI::ConfigItem& item : items) {
    if (!item.parents.empty())
      throw ConfigError("config: sections are not supported near '" +
                        item.fullname() + "'");
    CLI::Option* op = cmd->get_option_no_throw("--" + item.name);
    if (op == nullptr)
      throw ConfigError("config: unknown key '" + item.name + "'");
    if (op->count() > 0) continue;  // command line and environment override
    if (item.inputs.empty()) {
      op->add_result("true");  // bare flag line
    } else {
      for (const std::string& v : item.inputs) op->add_result(v);
    }
    op->run_callback();
  }
}

void add_common_train_flags(CLI::App* cmd, CommonTrainFlags* f,
                            bool with_posterior) {
  cmd->add_option("--data", f->data, "Input CSV (header row, numeric body)")
      ->required();
  cmd->add_option("--target", f->target,
                  "Target column name (default: last column)");
  cmd->add_option("--layers", f->layers, "Number of GP layers");
  cmd->add_option("--dims", f->dims,
                  "Comma-separated hidden layer widths (default: input dim)");
  cmd->add_option("--inducing", f->inducing, "Inducing points per layer");
  cmd->add_option("--iters", f->iters, "Training iterations");
  cmd->add_option("--seed", f->seed, "Random seed")->envname("DGPFLOW_SEED");
  if (with_posterior)
    cmd->add_option("--posterior", f->posterior,
                    "Posterior family: cnf or meanfield");
  cmd->add_option("--flow-steps", f->flow_steps, "Mixing steps in the flow");
  cmd->add_flag("--activation", f->activation,
                "Enable the invertible activation between flow steps");
  cmd->add_option("--lr", f->lr, "Adam learning rate");
  cmd->add_option("--batch", f->batch, "Minibatch size (0 = full batch)");
  cmd->add_option("--mc-samples", f->mc_samples,
                  "Monte-Carlo samples per training iteration");
  cmd->add_option("--eval-samples", f->eval_samples,
                  "Posterior samples for held-out evaluation");
  cmd->add_option("--split", f->split, "Training fraction of the data");
  cmd->add_option("--jitter", f->jitter, "Diagonal jitter for K_ZZ factors");
  cmd->add_option("--out", f->out, "Output file prefix");
  cmd->add_option("--config", f->config, "Config file with key=value lines");
}

TrainConfig build_config(const CommonTrainFlags& f, std::size_t input_dim,
                         PosteriorKind posterior) {
  TrainConfig c;
  c.widths = resolve_widths(f.layers, f.dims, input_dim);
  c.num_inducing = f.inducing;
  c.posterior = posterior;
  c.flow_steps = f.flow_steps;
  c.flow_activation = f.activation;
  c.iterations = f.iters;
  c.learning_rate = f.lr;
  c.minibatch = f.batch;
  c.mc_samples = f.mc_samples;
  c.seed = f.seed;
  c.jitter = f.jitter;
  return c;
}

int run_train(const CommonTrainFlags& f) {
  Dataset raw = ingest_csv(f.data, f.target);
  for (const std::string& w : raw.warnings) std::cerr << "warning: " << w << "\n";
  if (raw.rejected_rows > 0)
    std::cerr << "warning: rejected " << raw.rejected_rows
              << " rows with missing values\n";
  SplitResult sp = split_standardize(raw, f.split, f.seed);

  TrainConfig cfg =
      build_config(f, sp.train.x.cols(), posterior_from_name(f.posterior));
  DgpModel model = make_dgp_model(sp.train.x, cfg);
  TrainTrace trace = train(model, sp.train.x, sp.train.y, cfg);

  SeededRng prng = SeededRng(cfg.seed).split(streams::kPredict);
  PredictResult pred = predict_mll(model, sp.test.x, sp.test.y,
                                   f.eval_samples, prng, sp.stats.y_std);

  RunReport rep;
  rep.config = cfg;
  rep.data_path = f.data;
  rep.n_train = sp.train.x.rows();
  rep.n_test = sp.test.x.rows();
  rep.final_elbo = trace.rows.back().elbo;
  rep.smoothed_elbo = smoothed_elbo(trace, 50);
  rep.test_mll = pred.mean_mll;
  rep.train_seconds = trace.rows.back().seconds;

  save_checkpoint(f.out + ".ckpt", model, cfg, sp.stats, raw.feature_names,
                  raw.target_name);
  atomic_write(f.out + ".trace.csv", trace_csv(trace));
  atomic_write(f.out + ".report.txt", report_text(rep));
  atomic_write(f.out + ".test.csv",
               dataset_csv(sp.test_raw.x, sp.test_raw.y, raw.feature_names,
                           raw.target_name));

  std::cout << "n_train " << rep.n_train << "\n"
            << "n_test " << rep.n_test << "\n"
            << "final_elbo " << format_double(rep.final_elbo) << "\n"
            << "smoothed_elbo " << format_double(rep.smoothed_elbo) << "\n"
            << "test_mll " << format_double(rep.test_mll) << "\n"
            << "train_seconds " << format_double(rep.train_seconds) << "\n"
            << "wrote " << f.out << ".ckpt " << f.out << ".trace.csv "
            << f.out << ".report.txt " << f.out << ".test.csv\n";
  return 0;
}

int run_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& target, std::size_t samples,
                 std::uint64_t seed, bool seed_given,
                 const std::string& out_path) {
  LoadedCheckpoint ck = load_checkpoint(ckpt_path);
  Dataset d =
      ingest_csv(data_path, target.empty() ? ck.target_name : target);
  for (const std::string& w : d.warnings) std::cerr << "warning: " << w << "\n";
  if (d.feature_names.size() == ck.feature_names.size()) {
    for (std::size_t j = 0; j < d.feature_names.size(); ++j)
      if (d.feature_names[j] != ck.feature_names[j])
        std::cerr << "warning: feature " << j << " is '" << d.feature_names[j]
                  << "', checkpoint expects '" << ck.feature_names[j] << "'\n";
  }
  standardize_with(&d, ck.stats);

  SeededRng rng =
      SeededRng(seed_given ? seed : ck.config.seed).split(streams::kPredict);
  PredictResult pred =
      predict_mll(ck.model, d.x, d.y, samples, rng, ck.stats.y_std);

  if (!out_path.empty()) atomic_write(out_path, mll_csv(pred.per_point));
  std::cout << "n_points " << d.x.rows() << "\n"
            << "mean_mll " << format_double(pred.mean_mll) << "\n";
  if (!out_path.empty()) std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_compare(const CommonTrainFlags& f, const std::string& depths_str) {
  Dataset raw = ingest_csv(f.data, f.target);
  for (const std::string& w : raw.warnings) std::cerr << "warning: " << w << "\n";
  SplitResult sp = split_standardize(raw, f.split, f.seed);
  std::vector<std::size_t> depths = parse_size_list(depths_str, "--depths");

  std::vector<CompareRow> rows;
  for (std::size_t depth : depths) {
    for (PosteriorKind kind :
         {PosteriorKind::kFlow, PosteriorKind::kMeanField}) {
      CommonTrainFlags g = f;
      g.layers = depth;
      TrainConfig cfg = build_config(g, sp.train.x.cols(), kind);
      DgpModel model = make_dgp_model(sp.train.x, cfg);
      TrainTrace trace = train(model, sp.train.x, sp.train.y, cfg);
      SeededRng prng = SeededRng(cfg.seed).split(streams::kPredict);
      PredictResult pred = predict_mll(model, sp.test.x, sp.test.y,
                                       f.eval_samples, prng, sp.stats.y_std);
      rows.push_back(CompareRow{depth, kind, smoothed_elbo(trace, 50),
                                pred.mean_mll});
      std::cout << depth << ',' << posterior_name(kind) << ','
                << format_double(rows.back().smoothed_elbo) << ','
                << format_double(rows.back().test_mll) << "\n";
    }
  }
  atomic_write(f.out + ".compare.csv", compare_csv(rows));
  std::cout << "wrote " << f.out << ".compare.csv\n";
  return 0;
}

int run_synth(const std::string& kind, std::size_t n, double noise,
              std::uint64_t seed, const std::string& out_path) {
  Dataset d = make_synthetic(kind, n, noise, seed);
  atomic_write(out_path, dataset_csv(d.x, d.y, d.feature_names,
                                     d.target_name));
  std::cout << "wrote " << out_path << " (" << n << " rows)\n";
  return 0;
}

int classify_exit(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const EmptyDataset*>(&e) ||
      dynamic_cast<const TooFewRows*>(&e) ||
      dynamic_cast<const SchemaMismatch*>(&e) ||
      dynamic_cast<const CheckpointError*>(&e))
    return 3;
  return 4;  // numerical or internal
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep sparse GP regression with a flow posterior"};
  app.require_subcommand(1);

  CommonTrainFlags train_flags;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Split, standardize, train, checkpoint");
  add_common_train_flags(train_cmd, &train_flags, true);

  std::string eval_ckpt, eval_data, eval_target, eval_out, eval_config;
  std::size_t eval_samples = 100;
  std::uint64_t eval_seed = 0;
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "Score a checkpoint on a CSV");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--data", eval_data, "CSV to score")->required();
  eval_cmd->add_option("--target", eval_target,
                       "Target column (default: checkpoint's)");
  eval_cmd->add_option("--samples", eval_samples, "Posterior samples");
  CLI::Option* eval_seed_opt =
      eval_cmd->add_option("--seed", eval_seed,
                           "Sampling seed (default: checkpoint's)")
          ->envname("DGPFLOW_SEED");
  eval_cmd->add_option("--out", eval_out, "Per-point log-likelihood CSV");
  eval_cmd->add_option("--config", eval_config,
                       "Config file with key=value lines");

  CommonTrainFlags cmp_flags;
  std::string cmp_depths = "2,3";
  CLI::App* cmp_cmd = app.add_subcommand(
      "compare", "Train both posteriors across depths, equal budgets");
  add_common_train_flags(cmp_cmd, &cmp_flags, false);
  cmp_cmd->add_option("--depths", cmp_depths, "Comma-separated layer counts");

  std::string synth_kind = "sine", synth_out = "synth.csv", synth_config;
  std::size_t synth_n = 100;
  double synth_noise = 0.1;
  std::uint64_t synth_seed = 0;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Write a 1-D toy dataset CSV");
  synth_cmd->add_option("--kind", synth_kind, "sine or step");
  synth_cmd->add_option("--n", synth_n, "Rows");
  synth_cmd->add_option("--noise", synth_noise, "Noise standard deviation");
  synth_cmd->add_option("--seed", synth_seed, "Random seed")
      ->envname("DGPFLOW_SEED");
  synth_cmd->add_option("--out", synth_out, "Output CSV path");
  synth_cmd->add_option("--config", synth_config,
                        "Config file with key=value lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      apply_config(train_cmd, train_flags.config);
      return run_train(train_flags);
    }
    if (eval_cmd->parsed()) {
      apply_config(eval_cmd, eval_config);
      return run_evaluate(eval_ckpt, eval_data, eval_target, eval_samples,
                          eval_seed, eval_seed_opt->count() > 0 ||
                              std::getenv("DGPFLOW_SEED") != nullptr,
                          eval_out);
    }
    if (cmp_cmd->parsed()) {
      apply_config(cmp_cmd, cmp_flags.config);
      return run_compare(cmp_flags, cmp_depths);
    }
    if (synth_cmd->parsed()) {
      apply_config(synth_cmd, synth_config);
      return run_synth(synth_kind, synth_n, synth_noise, synth_seed,
                       synth_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify_exit(e);
  }
  return 0;
}

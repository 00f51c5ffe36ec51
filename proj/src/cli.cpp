// Copyright 2026 The xfnet Authors. All Rights Reserved.
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

#include "xfnet/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "xfnet/gradsuite.hpp"
#include "xfnet/train.hpp"
#include "xfnet/weights.hpp"

namespace fs = std::filesystem;

namespace xfnet {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

struct TrainFlags {
  std::size_t epochs = TrainConfig{}.epochs;
  std::size_t batch_size = TrainConfig{}.batch_size;
  double lr = TrainConfig{}.initial_lr;
  std::size_t lr_period = TrainConfig{}.lr_halving_period;

  void add_to(CLI::App& app) {
    app.add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app.add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--lr", lr, "Initial learning rate")->capture_default_str();
    app.add_option("--lr-period", lr_period, "Epochs between learning-rate halvings")->capture_default_str();
  }

  TrainConfig make(std::uint64_t seed) const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.initial_lr = lr;
    tc.lr_halving_period = lr_period;
    tc.seed = seed;
    return tc;
  }
};

int cmd_train(const std::string& config, const std::string& train_dir, const std::string& val_dir,
              const std::string& weights, const std::string& history_path, const TrainFlags& flags,
              std::uint64_t seed, bool quiet, std::ostream& out) {
  const ModelConfig cfg = resolve_config(config);
  const TrainConfig tc = flags.make(seed);
  tc.validate();
  const Dataset tr = load_dataset(train_dir, cfg.input_height, cfg.input_width);
  const Dataset va = load_dataset(val_dir, cfg.input_height, cfg.input_width);
  Model model(cfg, seed);
  const RunHistory h = train(model, tr, va, tc, [&](const EpochRecord& r) {
    if (!quiet)
      out << "epoch " << r.epoch << " lr " << fmt(r.lr) << " loss " << fmt(r.train_loss) << " train_acc "
          << fmt(r.train_acc) << " val_acc " << fmt(r.val_acc) << std::endl;
  });
  write_file_atomically(history_path, h.to_text());
  save_weights(model, weights);
  const auto& best = h.epochs[h.best_index()];
  out << "best epoch " << best.epoch << " val_acc " << fmt(best.val_acc) << '\n';
  return 0;
}

int cmd_eval(const std::string& config, const std::string& weights, const std::string& data_dir,
             std::size_t batch_size, bool allow_mismatch, std::ostream& out) {
  const ModelConfig cfg = resolve_config(config);
  Model model(cfg);
  load_weights(weights, model, allow_mismatch);
  const Dataset data = load_dataset(data_dir, cfg.input_height, cfg.input_width);
  const Evaluation ev = evaluate(model, data, batch_size);
  out << "samples " << data.size() << '\n';
  out << "accuracy " << fmt(ev.accuracy) << '\n';
  if (ev.auc) out << "auc " << fmt(*ev.auc) << '\n';
  else out << "auc undefined (" << ev.auc_note << ")\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps, double tolerance, std::ostream& out) {
  const auto checks = run_gradient_suite(seed, eps);
  const OpCheck* worst = &checks.front();
  for (const auto& c : checks) {
    out << pad(c.op, 26) << fmt(c.report.max_rel_error) << '\n';
    if (c.report.max_rel_error > worst->report.max_rel_error) worst = &c;
  }
  const bool ok = worst->report.max_rel_error < tolerance;
  out << "worst " << worst->op << ' ' << fmt(worst->report.max_rel_error) << (ok ? " ok" : " FAILED") << '\n';
  return ok ? 0 : 1;
}

int cmd_shapes(const std::string& config, std::ostream& out) {
  const ModelConfig cfg = resolve_config(config);
  out << "# parameters " << param_count(Model(cfg)) << '\n';
  out << format_trace(shape_trace(cfg));
  return 0;
}

int cmd_synth(const std::string& out_dir, const std::string& kind, std::size_t per_class, std::size_t size,
              std::uint64_t seed, std::ostream& out) {
  if (fs::exists(out_dir)) throw Error("output directory " + out_dir + " already exists");
  SynthSpec spec;
  spec.kind = parse_synth_kind(kind);
  spec.per_class = per_class;
  spec.height = spec.width = size;
  spec.seed = seed;
  const Dataset data = synth_dataset(spec);
  const std::string tmp = out_dir + ".tmp";
  fs::remove_all(tmp);
  try {
    write_dataset(data, tmp);
    fs::rename(tmp, out_dir);
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  out << "wrote " << data.size() << " images to " << out_dir << '\n';
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& train_dir, const std::string& val_dir,
               const TrainFlags& flags, const std::vector<std::uint64_t>& seeds, const std::string& table,
               const std::string& out_path, std::ostream& out) {
  const ModelConfig base = resolve_config(config);
  if (seeds.empty()) throw ConfigError("ablate needs at least one seed");
  const Dataset tr = load_dataset(train_dir, base.input_height, base.input_width);
  const Dataset va = load_dataset(val_dir, base.input_height, base.input_width);

  std::vector<std::pair<std::string, std::vector<Variant>>> tables;
  if (table == "attention" || table == "all") tables.emplace_back("attention", attention_ablation_variants(base));
  if (table == "middle" || table == "all") tables.emplace_back("middle", middle_flow_variants(base));
  if (tables.empty()) throw ConfigError("--table must be attention, middle or all");

  std::ostringstream report;
  report << "# " << seeds.size() << " seed(s), " << flags.epochs << " epoch(s) each; means over seeds\n";
  for (const auto& [name, variants] : tables) {
    report << "table " << name << '\n';
    report << pad("setup", 30) << pad("params", 10) << pad("final_train_loss", 18) << pad("final_train_acc", 17)
           << "best_val_acc\n";
    for (const auto& v : variants) {
      double loss = 0, acc = 0, val = 0;
      std::size_t params = 0;
      for (std::uint64_t seed : seeds) {
        Model model(v.config, seed);
        params = param_count(model);
        const RunHistory h = train(model, tr, va, flags.make(seed));
        loss += h.epochs.back().train_loss;
        acc += h.epochs.back().train_acc;
        val += h.epochs[h.best_index()].val_acc;
      }
      const double n = static_cast<double>(seeds.size());
      report << pad(v.label, 30) << pad(std::to_string(params), 10) << pad(fmt(loss / n), 18)
             << pad(fmt(acc / n), 17) << fmt(val / n) << '\n';
    }
  }
  out << report.str();
  if (!out_path.empty()) write_file_atomically(out_path, report.str());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"xfnet: attention-augmented Xception with fused middle flow"};
  app.require_subcommand(1);

  std::string config = "default";
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "Train on a dataset directory; writes weights and history");
  std::string train_dir, val_dir, weights, history;
  bool quiet = false;
  TrainFlags train_flags;
  train_cmd->add_option("--config", config, "Preset name or config file")->capture_default_str();
  train_cmd->add_option("--train", train_dir, "Training set root")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--val", val_dir, "Validation set root")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--weights", weights, "Output weight file")->required();
  train_cmd->add_option("--history", history, "Output history table")->required();
  train_cmd->add_option("--seed", seed, "Seed for initialization and shuffling")->capture_default_str();
  train_cmd->add_flag("--quiet", quiet, "Suppress per-epoch lines");
  train_flags.add_to(*train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Accuracy and AUC of saved weights on a dataset");
  std::string eval_data;
  std::size_t eval_batch = 64;
  bool allow_mismatch = false;
  eval_cmd->add_option("--config", config, "Preset name or config file")->capture_default_str();
  eval_cmd->add_option("--weights", weights, "Weight file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--batch-size", eval_batch, "Evaluation batch size")->capture_default_str();
  eval_cmd->add_flag("--allow-config-mismatch", allow_mismatch, "Load weights saved under another config");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::uint64_t grad_seed = 1;
  double eps = 1e-6, tolerance = 1e-3;
  grad_cmd->add_option("--seed", grad_seed, "Input seed")->capture_default_str();
  grad_cmd->add_option("--eps", eps, "Central-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  auto* shapes_cmd = app.add_subcommand("shapes", "Print the per-layer shape trace");
  shapes_cmd->add_option("--config", config, "Preset name or config file")->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic two-class dataset");
  std::string synth_out, kind = "frequency-texture";
  std::size_t per_class = 64, size = 64;
  synth_cmd->add_option("--out", synth_out, "Output directory (must not exist)")->required();
  synth_cmd->add_option("--kind", kind, "frequency-texture or blob-vs-stripe")->capture_default_str();
  synth_cmd->add_option("--per-class", per_class, "Images per class")->capture_default_str();
  synth_cmd->add_option("--size", size, "Square image size")->capture_default_str();
  synth_cmd->add_option("--seed", seed, "Generator seed")->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "Train every ablation variant and tabulate the results");
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string table = "all", ablate_out;
  TrainFlags ablate_flags;
  ablate_cmd->add_option("--config", config, "Base preset or config file")->capture_default_str();
  ablate_cmd->add_option("--train", train_dir, "Training set root")->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--val", val_dir, "Validation set root")->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--seeds", seeds, "Seeds to average over")->delimiter(',')->capture_default_str();
  ablate_cmd->add_option("--table", table, "attention, middle or all")->capture_default_str();
  ablate_cmd->add_option("--out", ablate_out, "Also write the table to this file");
  ablate_flags.add_to(*ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) return cmd_train(config, train_dir, val_dir, weights, history, train_flags, seed, quiet, out);
    if (*eval_cmd) return cmd_eval(config, weights, eval_data, eval_batch, allow_mismatch, out);
    if (*grad_cmd) return cmd_gradcheck(grad_seed, eps, tolerance, out);
    if (*shapes_cmd) return cmd_shapes(config, out);
    if (*synth_cmd) return cmd_synth(synth_out, kind, per_class, size, seed, out);
    if (*ablate_cmd) return cmd_ablate(config, train_dir, val_dir, ablate_flags, seeds, table, ablate_out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace xfnet

// Command-line front end: synthetic data generation, training, pairwise
// registration, dataset evaluation, and analytic model complexity reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "lkreg/analysis.hpp"
#include "lkreg/checkpoint.hpp"
#include "lkreg/config.hpp"
#include "lkreg/metrics.hpp"
#include "lkreg/parallel.hpp"
#include "lkreg/synth.hpp"
#include "lkreg/tensor_io.hpp"
#include "lkreg/train.hpp"

namespace fs = std::filesystem;
using namespace lkreg;

namespace {

struct SharedFlags {
  std::string config;
  std::uint64_t seed = 1;
  bool seed_set = false;
  bool sequential = false;
  std::string out;
};

void add_shared(CLI::App* cmd, SharedFlags& s) {
  cmd->add_option("--config", s.config, "key=value config file");
  cmd->add_option("--seed", s.seed, "RNG seed")
      ->each([&s](const std::string&) { s.seed_set = true; });
  cmd->add_flag("--sequential", s.sequential,
                "single-threaded, bit-reproducible execution");
  cmd->add_option("--out", s.out, "output directory");
}

void apply_shared(const SharedFlags& s) {
  if (s.sequential) set_sequential(true);
}

int run_synth(const SharedFlags& shared, int count, const std::string& extents,
              double max_disp) {
  if (shared.out.empty()) throw config_error("synth: --out is required");
  SynthConfig cfg;
  cfg.seed = shared.seed;
  cfg.count = count;
  cfg.extents = parse_extents(extents);
  cfg.max_disp = max_disp;
  write_synth_dataset(cfg, shared.out);
  std::printf("wrote %d pairs to %s\n", count, shared.out.c_str());
  return kExitOk;
}

int run_train(const SharedFlags& shared, const std::string& data,
              long long iters, long long checkpoint_every) {
  TrainConfig cfg;
  if (!shared.config.empty())
    cfg = TrainConfig::from_kv(parse_kv_file(shared.config));
  if (shared.seed_set) cfg.seed = shared.seed;
  if (iters >= 0) cfg.iterations = iters;
  if (checkpoint_every >= 0) cfg.checkpoint_interval = checkpoint_every;
  if (!data.empty()) cfg.data_dir = data;
  if (!shared.out.empty()) cfg.out_dir = shared.out;
  if (cfg.data_dir.empty()) throw config_error("train: --data is required");
  if (cfg.out_dir.empty()) throw config_error("train: --out is required");
  cfg.validate();

  const TrainResult res = train(cfg);
  std::printf("trained %lld iterations on %s\n",
              static_cast<long long>(cfg.iterations), cfg.data_dir.c_str());
  std::printf("checkpoint: %s\n", res.checkpoint_dir.c_str());
  std::printf("loss log:   %s\n", res.loss_log_path.c_str());
  if (!res.history.empty())
    std::printf("final loss: %.6f\n", res.history.back().parts.total);
  return kExitOk;
}

int run_register(const SharedFlags& shared, const std::string& fixed_path,
                 const std::string& moving_path,
                 const std::string& checkpoint) {
  if (shared.out.empty()) throw config_error("register: --out is required");
  Network<float> net = load_checkpoint(checkpoint);
  TensorF fixed = read_tns<float>(fixed_path);
  TensorF moving = read_tns<float>(moving_path);
  normalize_intensity(fixed);
  normalize_intensity(moving);

  const RegisterResult r = register_pair(net, fixed, moving);
  std::error_code ec;
  fs::create_directories(shared.out, ec);
  if (ec) throw data_error("register: cannot create " + shared.out);
  write_tns(shared.out + "/field.tns", r.field);
  write_tns(shared.out + "/warped.tns", r.warped);
  std::printf("field:   %s/field.tns\n", shared.out.c_str());
  std::printf("warped:  %s/warped.tns\n", shared.out.c_str());
  std::printf("fold_fraction: %.6f %%\n", r.fold_pct);
  std::printf("runtime: %.2f ms\n", r.runtime_ms);
  return kExitOk;
}

int run_evaluate(const SharedFlags& shared, const std::string& data,
                 const std::string& checkpoint, const std::string& metrics_csv,
                 long long quiver_stride) {
  Network<float> net = load_checkpoint(checkpoint);
  const auto pairs = load_dataset(data);
  const std::string checkpoint_id = fs::path(checkpoint).filename().string();

  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv, std::ios::trunc);
    if (!csv) throw data_error("evaluate: cannot open " + metrics_csv);
  }
  bool header_written = false;
  double dice_sum = 0.0, fold_sum = 0.0;
  int dice_count = 0;
  for (const auto& p : pairs) {
    const EvaluationArtifacts ev =
        evaluate_pair(net, p.fixed, p.moving, p.fixed_labels, p.moving_labels,
                      p.id, checkpoint_id);
    if (csv.is_open()) {
      if (!header_written) {
        csv << metrics_csv_header(ev.record.labels) << "\n";
        header_written = true;
      }
      csv << metrics_csv_row(ev.record) << "\n";
    }
    if (!shared.out.empty() && quiver_stride > 0) {
      std::error_code ec;
      fs::create_directories(shared.out, ec);
      write_quiver(shared.out + "/" + p.id + "_quiver.txt", ev.field,
                   quiver_stride);
    }
    std::printf("%s: dice=%.4f fold=%.4f%% sdlogj=%.4f hd95=%.3f (%.1f ms)\n",
                p.id.c_str(), ev.record.dice_mean, ev.record.fold_pct,
                ev.record.sdlogj, ev.record.hd95_mean, ev.record.runtime_ms);
    if (ev.record.has_dice) {
      dice_sum += ev.record.dice_mean;
      ++dice_count;
    }
    fold_sum += ev.record.fold_pct;
  }
  if (dice_count > 0)
    std::printf("mean dice: %.4f\n", dice_sum / dice_count);
  std::printf("mean fold: %.4f %%\n",
              fold_sum / static_cast<double>(pairs.size()));
  return kExitOk;
}

int run_analyze(const SharedFlags& shared, const std::string& net_config,
                const std::string& extents) {
  const NetConfig cfg = NetConfig::from_kv(parse_kv_file(net_config));
  const std::vector<index_t> spatial = parse_extents(extents);
  const ComplexityReport rep = analyze_network(cfg, spatial);

  std::printf("parameters: %lld\n",
              static_cast<long long>(rep.parameter_count));
  std::printf("mult_adds: %lld (%s G)\n",
              static_cast<long long>(rep.mult_adds),
              format_giga(rep.mult_adds).c_str());
  std::string rf;
  for (std::size_t i = 0; i < rep.receptive_field.size(); ++i)
    rf += (i ? "x" : "") + std::to_string(rep.receptive_field[i]);
  std::printf("receptive_field: %s\n", rf.c_str());
  std::printf("%-10s %-9s %5s %5s %3s %2s %12s %16s\n", "layer", "kind", "cin",
              "cout", "k", "s", "params", "mult_adds");
  for (const auto& l : rep.layers)
    std::printf("%-10s %-9s %5lld %5lld %3lld %2lld %12lld %16lld\n",
                l.name.c_str(), l.kind.c_str(), static_cast<long long>(l.cin),
                static_cast<long long>(l.cout),
                static_cast<long long>(l.kernel),
                static_cast<long long>(l.stride),
                static_cast<long long>(l.params),
                static_cast<long long>(l.mult_adds));

  if (!shared.out.empty()) {
    std::error_code ec;
    fs::create_directories(shared.out, ec);
    if (ec) throw data_error("analyze: cannot create " + shared.out);
    std::ofstream csv(shared.out + "/analysis.csv", std::ios::trunc);
    csv << "layer,kind,cin,cout,kernel,stride,params,mult_adds\n";
    for (const auto& l : rep.layers)
      csv << l.name << "," << l.kind << "," << l.cin << "," << l.cout << ","
          << l.kernel << "," << l.stride << "," << l.params << ","
          << l.mult_adds << "\n";
    csv << "total,,,,,," << rep.parameter_count << "," << rep.mult_adds
        << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lkreg: large-kernel U-Net deformable image registration"};
  app.require_subcommand(1);

  SharedFlags synth_s, train_s, reg_s, eval_s, ana_s;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  add_shared(synth_cmd, synth_s);
  int synth_count = 1;
  std::string synth_extents = "96x96";
  double synth_max_disp = 4.0;
  synth_cmd->add_option("--count", synth_count, "number of pairs");
  synth_cmd->add_option("--extents", synth_extents, "e.g. 96x96 or 32x32x32");
  synth_cmd->add_option("--max-disp", synth_max_disp,
                        "peak ground-truth displacement (voxels)");

  auto* train_cmd = app.add_subcommand("train", "train a registration network");
  add_shared(train_cmd, train_s);
  std::string train_data;
  long long train_iters = -1, train_ckpt_every = -1;
  train_cmd->add_option("--data", train_data, "dataset directory");
  train_cmd->add_option("--iters", train_iters, "training iterations");
  train_cmd->add_option("--checkpoint-every", train_ckpt_every,
                        "checkpoint interval (iterations)");

  auto* reg_cmd = app.add_subcommand("register", "register one image pair");
  add_shared(reg_cmd, reg_s);
  std::string reg_fixed, reg_moving, reg_checkpoint;
  reg_cmd->add_option("--fixed", reg_fixed, "fixed image (tns)")->required();
  reg_cmd->add_option("--moving", reg_moving, "moving image (tns)")->required();
  reg_cmd->add_option("--checkpoint", reg_checkpoint, "checkpoint directory")
      ->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate on a dataset");
  add_shared(eval_cmd, eval_s);
  std::string eval_data, eval_checkpoint, eval_csv;
  long long eval_quiver = 0;
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")
      ->required();
  eval_cmd->add_option("--metrics-csv", eval_csv, "metrics CSV output path");
  eval_cmd->add_option("--quiver-stride", eval_quiver,
                       "quiver export stride (0 = off)");

  auto* ana_cmd = app.add_subcommand("analyze", "model complexity report");
  add_shared(ana_cmd, ana_s);
  std::string ana_net_config, ana_extents = "160x192x224";
  ana_cmd->add_option("--net-config", ana_net_config, "network config file")
      ->required();
  ana_cmd->add_option("--extents", ana_extents, "input extents, e.g. 160x192x224");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      apply_shared(synth_s);
      return run_synth(synth_s, synth_count, synth_extents, synth_max_disp);
    }
    if (train_cmd->parsed()) {
      apply_shared(train_s);
      return run_train(train_s, train_data, train_iters, train_ckpt_every);
    }
    if (reg_cmd->parsed()) {
      apply_shared(reg_s);
      return run_register(reg_s, reg_fixed, reg_moving, reg_checkpoint);
    }
    if (eval_cmd->parsed()) {
      apply_shared(eval_s);
      return run_evaluate(eval_s, eval_data, eval_checkpoint, eval_csv,
                          eval_quiver);
    }
    if (ana_cmd->parsed()) {
      apply_shared(ana_s);
      return run_analyze(ana_s, ana_net_config, ana_extents);
    }
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const usage_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitOk;
}

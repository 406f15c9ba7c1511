#pragma once

#include <optional>

#include "lkreg/loss.hpp"
#include "lkreg/network.hpp"

namespace lkreg {

struct TrainConfig {
  NetConfig net;
  LossConfig loss;
  double lr = 1e-4;
  int batch_size = 1;  // the pipeline iterates single pairs
  index_t iterations = 1000;
  std::uint64_t seed = 1;
  index_t checkpoint_interval = 0;  // 0 = final checkpoint only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string data_dir;
  std::string out_dir;

  void validate() const;
  // Reads train keys plus net.* and loss.* prefixed sub-configs.
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct RegistrationPair {
  std::string id;
  TensorF fixed;
  TensorF moving;
  std::optional<TensorF> fixed_labels;
  std::optional<TensorF> moving_labels;
  std::optional<TensorF> gt_field;
};

// Min-max to [0,1]; constant volumes become zero.
void normalize_intensity(TensorF& t);

// Scans dir/pair_* (sorted) and loads + normalizes each pair.
std::vector<RegistrationPair> load_dataset(const std::string& dir);

struct IterationLog {
  index_t iter = 0;
  LossBreakdown parts;
};

struct TrainResult {
  std::string checkpoint_dir;  // final checkpoint (empty if out_dir empty)
  std::string loss_log_path;
  std::vector<IterationLog> history;
};

// Core loop: round-robin over pairs, forward -> loss -> backward -> Adam.
// Deterministic for a fixed (seed, config) in sequential mode. Writes the
// loss CSV and interval checkpoints when cfg.out_dir is set.
TrainResult train_network(const TrainConfig& cfg,
                          const std::vector<RegistrationPair>& pairs,
                          Network<float>& net);

// Builds the network from cfg.seed, loads cfg.data_dir, trains, and writes
// outputs under cfg.out_dir.
TrainResult train(const TrainConfig& cfg);

struct RegisterResult {
  TensorF field;
  TensorF warped;
  double fold_pct = 0.0;
  double runtime_ms = 0.0;
};

RegisterResult register_pair(const Network<float>& net, const TensorF& fixed,
                             const TensorF& moving);

}  // namespace lkreg

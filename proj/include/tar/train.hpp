#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "tar/config.hpp"
#include "tar/data_synth.hpp"
#include "tar/model.hpp"

namespace tar {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss_coarse = 0.0;  // mean over the epoch's pairs
  double loss_fine = 0.0;
  double val_rmse = 0.0;
  std::array<double, 3> val_cmr{};
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mini-batch training with Adam. Batches are drawn from a per-epoch seeded
// permutation; the batch loss is the mean of the per-pair losses. `val` is
// evaluated after every epoch (skipped when empty). Throws ConfigError for an
// empty training set.
TrainResult train(Model& model, const std::vector<PairSample>& data,
                  const std::vector<PairSample>& val, const RunConfig& cfg,
                  const EpochCallback& on_epoch = {});

inline constexpr const char* kTrainLogHeader =
    "epoch,loss_coarse,loss_fine,val_rmse,val_cmr1,val_cmr3,val_cmr5";
std::string format_epoch(const EpochLog& e);

}  // namespace tar

#include "tar/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tar/errors.hpp"
#include "tar/evaluate.hpp"
#include "tar/optim.hpp"

namespace tar {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kNegativeStream = 0x4E4547ULL;

}  // namespace

TrainResult train(Model& model, const std::vector<PairSample>& data,
                  const std::vector<PairSample>& val, const RunConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  const TrainConfig& tc = cfg.train;
  PrecisionScope precision(tc.precision);
  model.params().round_values();

  std::vector<Tensor> optical, sar;
  std::vector<Supervision> base;
  for (const auto& p : data) {
    if (p.optical.width % 8 || p.optical.height % 8) {
      throw ConfigError("training pair '" + p.id + "' is not a multiple of 8 in size");
    }
    optical.push_back(image_to_tensor(p.optical));
    sar.push_back(image_to_tensor(p.sar));
  }

  const std::size_t batches = (data.size() + tc.batch - 1) / tc.batch;
  const std::size_t total = batches * tc.epochs;
  Adam adam(model.params(), tc.beta1, tc.beta2, tc.adam_eps);
  TrainResult result;
  std::vector<std::size_t> order(data.size());

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(hash_combine(hash_combine(tc.seed, kShuffleStream), epoch));
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double sum_c = 0.0, sum_f = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * tc.batch, hi = std::min(data.size(), lo + tc.batch);
      const TextContext text = model.text_context();
      Tensor batch_loss;
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t idx = order[k];
        const PairSample& p = data[idx];
        const std::size_t gw = p.optical.width / 8, gh = p.optical.height / 8;
        Supervision probe = build_supervision(p.gt, gw, gh, cfg.model.fine_window, 0);
        const std::size_t cap = cfg.loss.neg_ratio * std::max<std::size_t>(1, probe.positives.size());
        const Supervision sup = build_supervision(
            p.gt, gw, gh, cfg.model.fine_window, cap,
            hash_combine(hash_combine(tc.seed, kNegativeStream), result.steps * data.size() + idx));
        const LossTerms t = model.training_loss(optical[idx], sar[idx], sup, cfg.loss, text);
        sum_c += t.coarse.item();
        sum_f += t.fine.item();
        batch_loss = batch_loss.defined() ? add(batch_loss, t.total) : t.total;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(hi - lo));
      if (!std::isfinite(batch_loss.item())) {
        throw NumericalError("non-finite loss at step " + std::to_string(result.steps));
      }
      model.params().zero_grad();
      batch_loss.backward();
      adam.step(lr_schedule(result.steps, total, tc));
      ++result.steps;
    }
    model.params().zero_grad();

    EpochLog log;
    log.epoch = epoch + 1;
    log.loss_coarse = sum_c / static_cast<double>(data.size());
    log.loss_fine = sum_f / static_cast<double>(data.size());
    if (!val.empty()) {
      const EvalReport rep = evaluate(model, val, cfg.eval, tc.precision);
      log.val_rmse = rep.rmse_mean;
      log.val_cmr = rep.cmr;
    } else {
      log.val_rmse = std::nan("");
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

std::string format_epoch(const EpochLog& e) {
  auto f = [](double v) {
    if (std::isinf(v)) return std::string("inf");
    if (std::isnan(v)) return std::string("nan");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  return std::to_string(e.epoch) + "," + f(e.loss_coarse) + "," + f(e.loss_fine) + "," +
         f(e.val_rmse) + "," + f(e.val_cmr[0]) + "," + f(e.val_cmr[1]) + "," + f(e.val_cmr[2]);
}

}  // namespace tar

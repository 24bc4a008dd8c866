#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "tactile/dataset.hpp"
#include "tactile/features.hpp"
#include "tactile/psnn.hpp"

namespace tactile {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 4096;
  int epochs = 200;
  std::uint64_t seed = 0;
  ChannelMode channel_mode = ChannelMode::RgbNir;
  double background_sample_fraction = 0.25;
  std::array<int, kHiddenLayers> hidden_widths{128, 128, 128};
  double dropout_rate = 0.1;
  PositionalEncodingConfig encoding;
  // Cosine decay of the learning rate over the epochs, down to this fraction.
  // 1.0 keeps the rate constant.
  double final_learning_rate_fraction = 1.0;

  void validate() const {
    require(learning_rate > 0.0, "train: learning_rate must be positive");
    require(background_sample_fraction >= 0.0 && background_sample_fraction <= 1.0,
            "train: background_sample_fraction must lie in [0, 1]");
    require(batch_size >= 2, "train: batch_size must be >= 2 (batch norm)");
    require(epochs >= 1, "train: epochs must be >= 1");
    require(final_learning_rate_fraction > 0.0 && final_learning_rate_fraction <= 1.0,
            "train: final_learning_rate_fraction must lie in (0, 1]");
  }
};

struct TrainResult {
  PsnnModel model;
  std::vector<double> history;  // mean training loss per epoch
};

namespace detail {

struct PixelRef {
  std::uint32_t sample;
  std::uint32_t pixel;
};

}  // namespace detail

/// Trains a PSNN on the contact pixels of the training split, mixing in
/// background pixels so they make up `background_sample_fraction` of each
/// epoch. Single-threaded and deterministic for a fixed seed.
inline TrainResult psnn_train(const CalibrationDataset& dataset, const TrainConfig& config) {
  config.validate();
  const auto train = dataset.indices(Split::Train);
  std::vector<detail::PixelRef> contact;
  std::size_t background_total = 0;
  for (auto s : train) {
    const auto& smp = dataset.samples[s];
    check_frame_mode(smp.frame, config.channel_mode);
    const Mask cm = extract_contact_mask(smp);
    for (std::size_t i = 0; i < cm.size(); ++i) {
      if (cm[i]) contact.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(i)});
      else if (smp.frame.mask[i]) ++background_total;
    }
  }
  if (contact.empty() && background_total == 0) throw ContractViolation("psnn_train: no valid training pixels");

  const double f = config.background_sample_fraction;
  std::size_t n_background = 0;
  if (contact.empty()) n_background = std::min<std::size_t>(background_total, 4 * static_cast<std::size_t>(config.batch_size));
  else if (f >= 1.0) n_background = contact.size();
  else n_background = static_cast<std::size_t>(std::llround(static_cast<double>(contact.size()) * f / (1.0 - f)));
  n_background = std::min(n_background, background_total);

  std::mt19937_64 rng(config.seed);
  TrainResult res;
  res.model = make_psnn(config.channel_mode, config.encoding, config.hidden_widths, config.dropout_rate, rng());
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.epsilon = config.adam_epsilon;

  auto& model = res.model;
  const int width = model.input_width();
  std::vector<double> feat(static_cast<std::size_t>(width));
  std::vector<detail::PixelRef> epoch_pixels;

  auto draw_background = [&]() {
    for (;;) {
      const auto s = train[rng() % train.size()];
      const auto& smp = dataset.samples[s];
      const auto pix = static_cast<std::uint32_t>(rng() % smp.frame.mask.size());
      if (smp.frame.mask[pix] && !smp.contact_mask[pix]) return detail::PixelRef{static_cast<std::uint32_t>(s), pix};
    }
  };

  constexpr double pi = 3.14159265358979323846;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double progress = config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1) : 0.0;
    const double floor_frac = config.final_learning_rate_fraction;
    adam.learning_rate =
        config.learning_rate * (floor_frac + (1.0 - floor_frac) * 0.5 * (1.0 + std::cos(pi * progress)));
    epoch_pixels = contact;
    for (std::size_t i = 0; i < n_background; ++i) epoch_pixels.push_back(draw_background());
    for (std::size_t i = epoch_pixels.size(); i > 1; --i) std::swap(epoch_pixels[i - 1], epoch_pixels[rng() % i]);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < epoch_pixels.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b = std::min<std::size_t>(config.batch_size, epoch_pixels.size() - start);
      if (b < 2) break;
      PsnnBatch batch{Eigen::MatrixXd(width, static_cast<Eigen::Index>(b)), Eigen::MatrixXd(3, static_cast<Eigen::Index>(b))};
      for (std::size_t j = 0; j < b; ++j) {
        const auto ref = epoch_pixels[start + j];
        const auto& smp = dataset.samples[ref.sample];
        const int x = static_cast<int>(ref.pixel % static_cast<std::uint32_t>(smp.frame.width()));
        const int y = static_cast<int>(ref.pixel / static_cast<std::uint32_t>(smp.frame.width()));
        pixel_features(smp.frame, x, y, config.channel_mode, config.encoding, feat);
        for (int r = 0; r < width; ++r) batch.inputs(r, static_cast<Eigen::Index>(j)) = feat[static_cast<std::size_t>(r)];
        batch.targets.col(static_cast<Eigen::Index>(j)) = smp.gt_normals.at(x, y);
      }
      const PsnnLossGrad lg = psnn_loss_grad(model, batch, rng());
      adam.apply(model.params, lg.gradients);
      for (int k = 0; k < kHiddenLayers; ++k) {
        model.running_mean[k] = model.bn_momentum * model.running_mean[k] + (1.0 - model.bn_momentum) * lg.batch_mean[k];
        model.running_var[k] = (model.bn_momentum * model.running_var[k] + (1.0 - model.bn_momentum) * lg.batch_var[k])
                                   .cwiseMax(1e-30);  // stays representable in the float32 checkpoint
      }
      loss_sum += lg.loss * static_cast<double>(b);
      seen += b;
    }
    res.history.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
  }
  return res;
}

}  // namespace tactile

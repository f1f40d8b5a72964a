#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/nn/checkpoint.hpp"
#include "rpg/nn/optim.hpp"
#include "rpg/recog/embedding.hpp"

namespace rpg::recog {

enum class TrainMode { pretrain, finetune };

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "pretrain") return TrainMode::pretrain;
  if (s == "finetune") return TrainMode::finetune;
  throw ConfigError("unknown recognizer mode '" + s + "' (expected pretrain or finetune)");
}

struct RecognizerOptions {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  double lr_max = 1e-2;
  double lr_min = 1e-6;
  std::size_t warmup_epochs = 1;
  nn::SgdConfig sgd;
  double margin = 0.5;
  double scale = 48.0;
  std::uint64_t init_seed = 0;     // backbone and head initialization
  std::uint64_t shuffle_seed = 0;  // per-epoch permutation stream
};

template <class T>
struct Recognizer {
  EmbeddingModel<T> backbone;
  std::unique_ptr<ClassHead<T>> head;

  Recognizer(const EmbeddingConfig& cfg, std::size_t num_classes, std::uint64_t init_seed)
      : backbone(cfg, derive_seed(init_seed, seed_domain::init, 0)),
        head(std::make_unique<ClassHead<T>>(num_classes, cfg.embedding_dim, derive_seed(init_seed, seed_domain::init, 1))) {}

  void reset_head(std::size_t num_classes, std::uint64_t seed) {
    head = std::make_unique<ClassHead<T>>(num_classes, backbone.config().embedding_dim, seed);
  }

  std::vector<nn::NamedTensor> checkpoint() const {
    auto out = nn::snapshot(backbone.params());
    auto h = nn::snapshot(head->params());
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;
};

inline std::size_t count_classes(std::span<const std::size_t> labels) {
  if (labels.empty()) throw ConfigError("recognizer: empty training set");
  const std::set<std::size_t> distinct(labels.begin(), labels.end());
  const std::size_t k = *distinct.rbegin() + 1;
  if (distinct.size() != k) throw ConfigError("recognizer: class labels are not contiguous from 0");
  if (k < 2) throw ConfigError("recognizer: need at least 2 classes");
  return k;
}

/// Mini-batch SGD on the ArcFace objective with a warmup + cosine schedule.
template <class T>
TrainLog fit(Recognizer<T>& model, std::span<const GrayImage> images, std::span<const std::size_t> labels,
             const RecognizerOptions& opt) {
  if (images.size() != labels.size()) throw ConfigError("recognizer: image/label count mismatch");
  const std::size_t k = count_classes(labels);
  if (k != model.head->num_classes())
    throw ConfigError("recognizer: dataset has " + std::to_string(k) + " classes but head has " +
                      std::to_string(model.head->num_classes()));
  const std::size_t bs = std::max<std::size_t>(1, std::min(opt.batch_size, images.size()));
  const std::size_t steps_per_epoch = (images.size() + bs - 1) / bs;
  const std::size_t total = steps_per_epoch * opt.epochs;
  const std::size_t warmup = std::min(total, steps_per_epoch * opt.warmup_epochs);

  auto params = model.backbone.params().all();
  for (auto* p : model.head->params().all()) params.push_back(p);
  for (auto* p : params) p->reset_optimizer();

  TrainLog log;
  std::vector<std::size_t> order(images.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(derive_seed(opt.shuffle_seed, seed_domain::shuffle, epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);

    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = b * bs, hi = std::min(order.size(), lo + bs);
      std::vector<GrayImage> batch;
      std::vector<std::size_t> batch_labels;
      for (std::size_t i = lo; i < hi; ++i) {
        batch.push_back(images[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      nn::Tape<T> tape;
      const nn::Binder<T> bind{tape, true};
      auto feats = model.backbone.forward(bind, tape.constant(model::images_to_tensor<T>(batch)));
      auto loss = nn::arcface_loss(feats, bind(model.head->weight()), std::span<const std::size_t>(batch_labels),
                                   static_cast<T>(opt.margin), static_cast<T>(opt.scale));
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) throw TrainingError(step, "arcface");
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
      nn::sgd_step<T>(params, nn::warmup_cosine(step, total, warmup, opt.lr_max, opt.lr_min), opt.sgd);
      log.step_loss.push_back(lv);
      epoch_sum += lv;
    }
    log.epoch_loss.push_back(epoch_sum / static_cast<double>(steps_per_epoch));
  }
  return log;
}

/// Pretrain: fresh model (or full init when given). Finetune: backbone from
/// `init`, class head re-initialized for the new label set.
template <class T>
std::unique_ptr<Recognizer<T>> train_recognizer(std::span<const GrayImage> images, std::span<const std::size_t> labels,
                                                TrainMode mode, const std::vector<nn::NamedTensor>* init,
                                                const EmbeddingConfig& cfg, const RecognizerOptions& opt,
                                                TrainLog* log_out = nullptr) {
  const std::size_t k = count_classes(labels);
  auto model = std::make_unique<Recognizer<T>>(cfg, k, opt.init_seed);
  if (init) {
    if (nn::restore(model->backbone.params(), *init, "backbone.") != model->backbone.params().size())
      throw ConfigError("recognizer init checkpoint lacks backbone tensors");
    if (mode == TrainMode::pretrain) {
      auto it = std::find_if(init->begin(), init->end(), [](const auto& t) { return t.name == "head.weight"; });
      if (it != init->end() && it->value.shape() == model->head->weight().value.shape())
        nn::restore(model->head->params(), *init, "head.");
    }
  }
  auto log = fit(*model, images, labels, opt);
  if (log_out) *log_out = std::move(log);
  return model;
}

}  // namespace rpg::recog

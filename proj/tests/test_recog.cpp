#include <catch_amalgamated.hpp>

#include "rpg/crease/toy_palm.hpp"
#include "rpg/nn/checkpoint.hpp"
#include "rpg/recog/trainer.hpp"

using namespace rpg;
using namespace rpg::recog;

namespace {

struct Toy {
  std::vector<GrayImage> images;
  std::vector<std::size_t> labels;
};

Toy toy_set(std::size_t ids, std::size_t per, std::size_t size, std::uint64_t seed) {
  Toy t;
  for (std::size_t id = 0; id < ids; ++id) {
    const auto spec = crease::sample_crease_spec(derive_seed(seed, seed_domain::crease, id), {});
    for (std::size_t s = 0; s < per; ++s) {
      t.images.push_back(crease::render_toy_palm(spec, derive_seed(seed, seed_domain::jitter, id * per + s), size));
      t.labels.push_back(id);
    }
  }
  return t;
}

const EmbeddingConfig kSmall{4, 16};

RecognizerOptions quick(std::size_t epochs) {
  RecognizerOptions o;
  o.epochs = epochs;
  o.batch_size = 8;
  o.lr_max = 0.05;
  o.margin = 0.2;
  o.scale = 16.0;
  o.init_seed = 3;
  o.shuffle_seed = 4;
  return o;
}

}  // namespace

TEST_CASE("embeddings are unit norm and deterministic") {
  EmbeddingModel<float> m(kSmall, 1);
  const auto t = toy_set(2, 2, 32, 1);
  for (const auto& img : t.images) {
    const auto e = m.embed(img);
    REQUIRE(e.size() == 16);
    double sq = 0.0;
    for (float v : e) sq += double(v) * v;
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-6);
    CHECK(e == m.embed(img));
  }
}

TEST_CASE("train mode parsing") {
  CHECK(parse_train_mode("pretrain") == TrainMode::pretrain);
  CHECK(parse_train_mode("finetune") == TrainMode::finetune);
  CHECK_THROWS_AS(parse_train_mode("scratch"), ConfigError);
}

TEST_CASE("label validation") {
  const std::vector<std::size_t> gap{0, 2, 2};
  CHECK_THROWS_AS(count_classes(gap), ConfigError);
  const std::vector<std::size_t> one{0, 0};
  CHECK_THROWS_AS(count_classes(one), ConfigError);
  CHECK_THROWS_AS(count_classes(std::vector<std::size_t>{}), ConfigError);
  CHECK(count_classes(std::vector<std::size_t>{1, 0, 2, 1}) == 3);

  const auto t = toy_set(2, 2, 32, 2);
  const std::vector<std::size_t> bad{0, 0, 2, 2};
  CHECK_THROWS_AS(train_recognizer<float>(t.images, bad, TrainMode::pretrain, nullptr, kSmall, quick(1)), ConfigError);
}

TEST_CASE("zero epochs returns the initialization") {
  const auto t = toy_set(3, 2, 32, 3);
  auto m = train_recognizer<float>(t.images, t.labels, TrainMode::pretrain, nullptr, kSmall, quick(0));
  const Recognizer<float> fresh(kSmall, 3, quick(0).init_seed);
  CHECK(nn::encode_checkpoint(m->checkpoint()) == nn::encode_checkpoint(fresh.checkpoint()));
}

TEST_CASE("training lowers the loss and is reproducible") {
  const auto t = toy_set(4, 4, 32, 4);
  TrainLog log;
  auto m = train_recognizer<float>(t.images, t.labels, TrainMode::pretrain, nullptr, kSmall, quick(12), &log);
  REQUIRE(log.epoch_loss.size() == 12);
  CHECK(log.step_loss.size() == 12 * 2);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
  auto again = train_recognizer<float>(t.images, t.labels, TrainMode::pretrain, nullptr, kSmall, quick(12));
  CHECK(nn::encode_checkpoint(m->checkpoint()) == nn::encode_checkpoint(again->checkpoint()));
}

TEST_CASE("checkpoint round-trip reproduces embeddings bit for bit") {
  const auto t = toy_set(3, 3, 32, 5);
  auto m = train_recognizer<float>(t.images, t.labels, TrainMode::pretrain, nullptr, kSmall, quick(2));
  const auto bytes = nn::encode_checkpoint(m->checkpoint());
  Recognizer<float> loaded(kSmall, 3, 999);
  nn::restore(loaded.backbone.params(), nn::decode_checkpoint(bytes), "backbone.");
  nn::restore(loaded.head->params(), nn::decode_checkpoint(bytes), "head.");
  for (const auto& img : t.images) CHECK(loaded.backbone.embed(img) == m->backbone.embed(img));
  CHECK(nn::encode_checkpoint(loaded.checkpoint()) == bytes);
}

TEST_CASE("finetuning starts from the pretrained backbone with a fresh head") {
  const auto pre = toy_set(4, 3, 32, 6);
  auto base = train_recognizer<float>(pre.images, pre.labels, TrainMode::pretrain, nullptr, kSmall, quick(2));
  const auto init = base->checkpoint();
  const auto tuned_set = toy_set(3, 3, 32, 7);
  auto tuned = train_recognizer<float>(tuned_set.images, tuned_set.labels, TrainMode::finetune, &init, kSmall, quick(0));
  CHECK(tuned->head->num_classes() == 3);
  for (const auto& img : tuned_set.images) CHECK(tuned->backbone.embed(img) == base->backbone.embed(img));

  const std::vector<nn::NamedTensor> partial(init.begin(), init.begin() + 1);
  CHECK_THROWS_AS(train_recognizer<float>(tuned_set.images, tuned_set.labels, TrainMode::finetune, &partial, kSmall,
                                          quick(0)),
                  ConfigError);
}

TEST_CASE("embeddings ignore global brightness and contrast") {
  EmbeddingModel<float> m({4, 16}, 8);
  const auto t = toy_set(3, 1, 32, 8);
  for (const auto& img : t.images) {
    GrayImage dim(img.width(), img.height());
    for (std::size_t i = 0; i < img.pixels().size(); ++i) dim.pixels()[i] = 0.1f + 0.6f * img.pixels()[i];
    const auto a = m.embed(img), b = m.embed(dim);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-3);
  }
}

TEST_CASE("a pretrained start reaches lower loss than scratch in equal steps") {
  const auto pre = toy_set(10, 4, 32, 10);
  auto base = train_recognizer<float>(pre.images, pre.labels, TrainMode::pretrain, nullptr, kSmall, quick(12));
  const auto init = base->checkpoint();
  const auto real = toy_set(10, 3, 32, 9);
  TrainLog tuned_log, scratch_log;
  train_recognizer<float>(real.images, real.labels, TrainMode::finetune, &init, kSmall, quick(4), &tuned_log);
  train_recognizer<float>(real.images, real.labels, TrainMode::finetune, nullptr, kSmall, quick(4), &scratch_log);
  REQUIRE(tuned_log.step_loss.size() == scratch_log.step_loss.size());
  CHECK(tuned_log.epoch_loss.back() < scratch_log.epoch_loss.back());
}

#include <catch_amalgamated.hpp>

#include <set>

#include "rpg/crease/raster.hpp"
#include "rpg/crease/toy_palm.hpp"
#include "rpg/model/dataset.hpp"
#include "rpg/model/trainer.hpp"
#include "support/gradcheck.hpp"

using namespace rpg;
using namespace rpg::model;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.image_size = 16;
  c.base_channels = 2;
  c.num_scales = 2;
  c.latent_dim = 3;
  c.control_dim = 4;
  c.disc_channels = 2;
  return c;
}

struct Batch {
  std::vector<GrayImage> real, crease;
};

Batch make_batch(std::size_t n, std::size_t size, std::uint64_t seed) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    const auto spec = crease::sample_crease_spec(derive_seed(seed, seed_domain::crease, i), {});
    b.crease.push_back(crease::rasterize(spec, size, size));
    const auto other = crease::sample_crease_spec(derive_seed(seed + 1, seed_domain::crease, i), {});
    b.real.push_back(crease::render_toy_palm(other, i, size));
  }
  return b;
}

template <class T>
std::vector<std::vector<T>> values(const nn::ParamStore<T>& store) {
  std::vector<std::vector<T>> out;
  for (const auto* p : store.all()) out.push_back(p->value.vec());
  return out;
}

}  // namespace

TEST_CASE("network output shapes") {
  const auto cfg = tiny_config();
  RpgModel<double> m(cfg, 1);
  nn::Tape<double> tape;
  const nn::Binder<double> bind{tape, false};
  auto a = tape.constant(nn::Tensor<double>({3, 1, 16, 16}, 0.5));
  auto z = tape.constant(nn::Tensor<double>({3, 3}, 0.1));
  CHECK(m.generator().forward(bind, a, z, 4).shape() == nn::Shape{3, 1, 16, 16});
  const auto e = m.encoder().forward(bind, a);
  CHECK(e.mu.shape() == nn::Shape{3, 3});
  CHECK(e.logvar.shape() == nn::Shape{3, 3});
  CHECK(m.discriminator().forward(bind, a).shape() == nn::Shape{3, 1, 4, 4});
  CHECK_THROWS_AS(m.generator().forward(bind, tape.constant(nn::Tensor<double>({1, 1, 8, 8})), z, 4),
                  std::invalid_argument);
}

TEST_CASE("generator config validation") {
  auto c = tiny_config();
  c.image_size = 18;
  CHECK_THROWS_AS(RpgModel<float>(c, 0), std::invalid_argument);
  c = tiny_config();
  c.latent_dim = 0;
  CHECK_THROWS_AS(RpgModel<float>(c, 0), std::invalid_argument);
  c = tiny_config();
  c.noise_std = -1.0;
  CHECK_THROWS_AS(RpgModel<float>(c, 0), std::invalid_argument);
}

TEST_CASE("generation is deterministic and bounded") {
  RpgModel<float> m(tiny_config(), 3);
  const auto a = crease::rasterize(crease::sample_crease_spec(5, {}), 16, 16);
  const std::vector<float> z{0.1f, -0.4f, 1.2f};
  const auto g1 = m.generate(a, z, 9);
  CHECK(g1 == m.generate(a, z, 9));
  CHECK(mean_abs_difference(g1, m.generate(a, z, 10)) > 0.0);
  for (float v : g1.pixels()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK_THROWS_AS(m.generate(a, std::vector<float>{0.0f}, 9), std::invalid_argument);
}

TEST_CASE("full generator objective passes finite differences") {
  RpgModel<double> m(tiny_config(), 11);
  recog::EmbeddingModel<double> extractor({2, 6}, 12);
  const auto batch = make_batch(2, 16, 40);
  TrainOptions opt;
  opt.adversarial_on_prior = true;
  const auto seeds = step_seeds(5, 0);
  auto params = m.params().with_prefix("gen.");
  for (auto* p : m.params().with_prefix("enc.")) params.push_back(p);
  const auto res = rpg::testing::check_parameter_gradients(
      params,
      [&](nn::Tape<double>& tape, const nn::Binder<double>&) {
        return build_generator_objective(tape, m, extractor, std::span<const GrayImage>(batch.real),
                                         std::span<const GrayImage>(batch.crease), opt, seeds)
            .total;
      },
      77, 3);
  INFO(res.worst);
  CHECK(res.probes >= 20);
  CHECK(res.ok(1e-4));
}

TEST_CASE("discriminator objective passes finite differences") {
  RpgModel<double> m(tiny_config(), 13);
  const auto batch = make_batch(2, 16, 41);
  const auto real = images_to_tensor<double>(std::span<const GrayImage>(batch.real));
  const auto fake = images_to_tensor<double>(std::span<const GrayImage>(batch.crease));
  const auto res = rpg::testing::check_parameter_gradients(
      m.params().with_prefix("disc."),
      [&](nn::Tape<double>& tape, const nn::Binder<double>& bind) {
        return nn::lsgan_discriminator_loss(m.discriminator().forward(bind, tape.constant(real)),
                                            m.discriminator().forward(bind, tape.constant(fake)));
      },
      78, 10);
  INFO(res.worst);
  CHECK(res.probes >= 20);
  CHECK(res.ok(1e-4));
}

TEST_CASE("identity loss vanishes when both branches share latent and noise") {
  RpgModel<double> m(tiny_config(), 14);
  recog::EmbeddingModel<double> extractor({2, 6}, 15);
  const auto batch = make_batch(2, 16, 42);
  TrainOptions opt;
  opt.prior_uses_encoded_latent = true;
  nn::Tape<double> tape;
  const auto o = build_generator_objective(tape, m, extractor, std::span<const GrayImage>(batch.real),
                                           std::span<const GrayImage>(batch.crease), opt, step_seeds(1, 0));
  CHECK(std::abs(o.id.value().item()) < 1e-6);
  opt.prior_uses_encoded_latent = false;
  nn::Tape<double> tape2;
  const auto o2 = build_generator_objective(tape2, m, extractor, std::span<const GrayImage>(batch.real),
                                            std::span<const GrayImage>(batch.crease), opt, step_seeds(1, 0));
  CHECK(o2.id.value().item() > 0.0);
}

TEST_CASE("zero loss weights leave every parameter unchanged") {
  RpgModel<float> m(tiny_config(), 16);
  recog::EmbeddingModel<float> extractor({2, 6}, 17);
  const auto batch = make_batch(2, 16, 43);
  TrainOptions opt;
  opt.weights = {0.0, 0.0, 0.0, 0.0};
  const auto before = values(m.params());
  train_step(m, extractor, std::span<const GrayImage>(batch.real), std::span<const GrayImage>(batch.crease), opt,
             step_seeds(2, 0), 1e-3, 0);
  CHECK(values(m.params()) == before);
}

TEST_CASE("training updates the model but never the extractor") {
  RpgModel<float> m(tiny_config(), 18);
  recog::EmbeddingModel<float> extractor({2, 6}, 19);
  const auto batch = make_batch(2, 16, 44);
  const auto ext_before = values(extractor.params());
  const auto model_before = values(m.params());
  const TrainOptions opt;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto r = train_step(m, extractor, std::span<const GrayImage>(batch.real),
                              std::span<const GrayImage>(batch.crease), opt, step_seeds(3, s), 1e-3, s);
    CHECK(std::isfinite(r.total));
    CHECK(r.total == Catch::Approx(opt.weights.adversarial * r.adversarial + opt.weights.l1 * r.l1 +
                                   opt.weights.kl * r.kl + opt.weights.id * r.id)
                         .epsilon(1e-5));
  }
  CHECK(values(extractor.params()) == ext_before);
  CHECK(values(m.params()) != model_before);
}

TEST_CASE("non-finite losses raise TrainingError") {
  RpgModel<float> m(tiny_config(), 20);
  recog::EmbeddingModel<float> extractor({2, 6}, 21);
  const auto batch = make_batch(2, 16, 45);
  m.params().with_prefix("gen.").front()->value[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train_step(m, extractor, std::span<const GrayImage>(batch.real),
                             std::span<const GrayImage>(batch.crease), TrainOptions{}, step_seeds(4, 0), 1e-3, 7),
                  TrainingError);
  CHECK_THROWS_AS(train_step(m, extractor, std::span<const GrayImage>(batch.real),
                             std::span<const GrayImage>(batch.crease).first(1), TrainOptions{}, step_seeds(4, 0), 1e-3, 7),
                  std::invalid_argument);
  TrainOptions neg;
  neg.weights.kl = -1.0;
  CHECK_THROWS_AS(train_step(m, extractor, std::span<const GrayImage>(batch.real),
                             std::span<const GrayImage>(batch.crease), neg, step_seeds(4, 0), 1e-3, 7),
                  ConfigError);
}

TEST_CASE("step seeds and learning rate") {
  const auto a = step_seeds(9, 0), b = step_seeds(9, 1);
  const std::set<std::uint64_t> all{a.posterior, a.prior, a.noise_encoded, a.noise_prior,
                                    b.posterior, b.prior, b.noise_encoded, b.noise_prior};
  CHECK(all.size() == 8);
  CHECK(rpg_learning_rate(0, 200) == 2e-4);
  CHECK(rpg_learning_rate(99, 200) == 2e-4);
  CHECK(rpg_learning_rate(199, 200) == Catch::Approx(1e-8));
}

TEST_CASE("dataset generation") {
  RpgModel<float> m(tiny_config(), 22);
  std::vector<crease::CreaseSpec> specs;
  for (std::uint64_t i = 0; i < 4; ++i) specs.push_back(crease::sample_crease_spec(derive_seed(1, seed_domain::crease, i), {}));
  DatasetOptions opt;
  opt.samples_per_id = 3;
  opt.master_seed = 5;
  const auto d1 = generate_dataset(m, std::span<const crease::CreaseSpec>(specs), opt);
  REQUIRE(d1.size() == 12);
  for (std::size_t k = 0; k < d1.size(); ++k) {
    CHECK(d1[k].identity == k / 3);
    CHECK(d1[k].sample == k % 3);
  }
  opt.threads = 3;
  const auto d2 = generate_dataset(m, std::span<const crease::CreaseSpec>(specs), opt);
  for (std::size_t k = 0; k < d1.size(); ++k) CHECK(d1[k].image == d2[k].image);
  std::set<std::vector<std::uint8_t>> distinct;
  for (const auto& s : d1) distinct.insert(encode_pgm(s.image));
  CHECK(distinct.size() == d1.size());
  opt.samples_per_id = 0;
  CHECK_THROWS_AS(generate_dataset(m, std::span<const crease::CreaseSpec>(specs), opt), std::invalid_argument);
}

TEST_CASE("sample seeds separate identities and samples") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t id = 0; id < 20; ++id)
    for (std::uint64_t s = 0; s < 20; ++s) seen.insert(sample_seed(3, seed_domain::latent, id, s));
  CHECK(seen.size() == 400);
  CHECK(sample_seed(3, seed_domain::latent, 1, 2) != sample_seed(3, seed_domain::noise, 1, 2));
}

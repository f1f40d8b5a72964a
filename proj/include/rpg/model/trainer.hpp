#pragma once

// Unpaired training of the crease-to-palmprint model.
//
//   B'  = G(A, z_enc),  z_enc ~ Q(z | B) via the encoder and reparameterization
//   B'' = G(A, z_prior), z_prior ~ N(0, I)
//   total = lambda_D * L_adv(B') + lambda_1 * L1(B, B') + lambda_KL * KL + lambda_ID * (1 - cos(D_id(B'), D_id(B'')))
//
// The identity extractor D_id is frozen: it is bound as constants, so the
// gradient reaches B' and B'' but never its weights.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/model/networks.hpp"
#include "rpg/nn/optim.hpp"
#include "rpg/recog/embedding.hpp"

namespace rpg::model {

struct LossWeights {
  double adversarial = 1.0;   // lambda_D
  double l1 = 10.0;           // lambda_1
  double kl = 0.01;           // lambda_KL
  double id = 5.0;            // lambda_ID
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline void validate(const LossWeights& w) {
  if (!(w.adversarial >= 0 && w.l1 >= 0 && w.kl >= 0 && w.id >= 0))
    throw ConfigError("loss weights must be >= 0");
}

struct TrainOptions {
  LossWeights weights;
  nn::AdamConfig adam;
  bool adversarial_on_prior = false;   // also push B'' through the discriminator
  bool prior_uses_encoded_latent = false;  // B'' reuses z_enc and the B' noise seed (diagnostic)
};

/// Per-step seeds; derive them from the master seed with the "latent" / "noise" domains.
struct StepSeeds {
  std::uint64_t posterior = 0;  // reparameterization epsilon
  std::uint64_t prior = 0;      // z for B''
  std::uint64_t noise_encoded = 0;
  std::uint64_t noise_prior = 0;
};

inline StepSeeds step_seeds(std::uint64_t master, std::uint64_t step) {
  return {derive_seed(master, seed_domain::latent, 2 * step), derive_seed(master, seed_domain::latent, 2 * step + 1),
          derive_seed(master, seed_domain::noise, 2 * step), derive_seed(master, seed_domain::noise, 2 * step + 1)};
}

struct LossReport {
  double l1 = 0.0;
  double adversarial = 0.0;  // generator side
  double kl = 0.0;
  double id = 0.0;
  double total = 0.0;
  double discriminator = 0.0;
};

template <class T>
struct GeneratorObjective {
  nn::Var<T> real;
  nn::Var<T> encoded_output, prior_output;
  EncoderOutput<T> posterior;
  nn::Var<T> total, l1, adversarial, kl, id;
};

/// Records both generator branches on `tape` (loss terms are added by finish_generator_objective).
template <class T>
GeneratorObjective<T> build_generator_branches(nn::Tape<T>& tape, RpgModel<T>& model,
                                               std::span<const GrayImage> real_b, std::span<const GrayImage> crease_a,
                                               const TrainOptions& opt, const StepSeeds& seeds) {
  if (real_b.size() != crease_a.size() || real_b.empty())
    throw std::invalid_argument("train batch: need equally many palmprints and creases");
  const nn::Binder<T> train{tape, true};
  const auto& cfg = model.config();
  const std::size_t n = real_b.size();

  GeneratorObjective<T> o;
  o.real = tape.constant(images_to_tensor<T>(real_b));
  auto a = tape.constant(images_to_tensor<T>(crease_a));
  o.posterior = model.encoder().forward(train, o.real);
  const auto z_enc = reparameterize(o.posterior, seeds.posterior);
  o.encoded_output = model.generator().forward(train, a, z_enc, seeds.noise_encoded);
  if (opt.prior_uses_encoded_latent) {
    o.prior_output = model.generator().forward(train, a, z_enc, seeds.noise_encoded);
  } else {
    auto z_prior = tape.constant(standard_normal<T>({n, cfg.latent_dim}, seeds.prior));
    o.prior_output = model.generator().forward(train, a, z_prior, seeds.noise_prior);
  }
  return o;
}

/// Adds the four weighted terms. The discriminator is bound frozen with its
/// current weights, so it must not be updated again before backward().
template <class T>
void finish_generator_objective(nn::Tape<T>& tape, RpgModel<T>& model, const recog::EmbeddingModel<T>& extractor,
                                GeneratorObjective<T>& o, const TrainOptions& opt) {
  const nn::Binder<T> frozen{tape, false};
  o.l1 = nn::l1_loss(o.encoded_output, o.real);
  o.adversarial = nn::lsgan_generator_loss(model.discriminator().forward(frozen, o.encoded_output));
  if (opt.adversarial_on_prior)
    o.adversarial = nn::scale(
        nn::add(o.adversarial, nn::lsgan_generator_loss(model.discriminator().forward(frozen, o.prior_output))), T(0.5));
  o.kl = nn::kl_loss(o.posterior.mu, o.posterior.logvar);
  o.id = nn::cosine_distance_loss(extractor.forward(frozen, o.encoded_output),
                                  extractor.forward(frozen, o.prior_output), T(1e-8));
  const auto& w = opt.weights;
  o.total = nn::add(nn::add(nn::scale(o.adversarial, T(w.adversarial)), nn::scale(o.l1, T(w.l1))),
                    nn::add(nn::scale(o.kl, T(w.kl)), nn::scale(o.id, T(w.id))));
}

template <class T>
GeneratorObjective<T> build_generator_objective(nn::Tape<T>& tape, RpgModel<T>& model,
                                                const recog::EmbeddingModel<T>& extractor,
                                                std::span<const GrayImage> real_b, std::span<const GrayImage> crease_a,
                                                const TrainOptions& opt, const StepSeeds& seeds) {
  auto o = build_generator_branches(tape, model, real_b, crease_a, opt, seeds);
  finish_generator_objective(tape, model, extractor, o, opt);
  return o;
}

/// One alternating update: discriminator on (B real, B' fake) with the
/// least-squares objective, then generator + encoder on the weighted total
/// against the updated discriminator. With lambda_D = 0 the adversarial term
/// is inactive and the discriminator is left untouched.
template <class T>
LossReport train_step(RpgModel<T>& model, const recog::EmbeddingModel<T>& extractor,
                      std::span<const GrayImage> real_b, std::span<const GrayImage> crease_a, const TrainOptions& opt,
                      const StepSeeds& seeds, double lr, std::size_t step_index) {
  validate(opt.weights);
  auto& store = model.params();
  auto gen_params = store.with_prefix("gen.");
  auto enc_params = store.with_prefix("enc.");
  gen_params.insert(gen_params.end(), enc_params.begin(), enc_params.end());
  const auto disc_params = store.with_prefix("disc.");

  auto check = [&](double v, const char* name) {
    if (!std::isfinite(v)) throw TrainingError(step_index, name);
    return v;
  };

  LossReport report;
  nn::Tape<T> tape;
  auto obj = build_generator_branches(tape, model, real_b, crease_a, opt, seeds);

  if (opt.weights.adversarial > 0.0) {
    nn::Tape<T> dtape;
    const nn::Binder<T> bind{dtape, true};
    auto d_fake = model.discriminator().forward(bind, dtape.constant(obj.encoded_output.value()));
    if (opt.adversarial_on_prior)
      d_fake = nn::concat_channels(d_fake, model.discriminator().forward(bind, dtape.constant(obj.prior_output.value())));
    auto d_real = model.discriminator().forward(bind, dtape.constant(obj.real.value()));
    auto d_loss = nn::lsgan_discriminator_loss(d_real, d_fake);
    report.discriminator = check(d_loss.value().item(), "discriminator");
    for (auto* p : disc_params) p->zero_grad();
    dtape.backward(d_loss);
    nn::adam_step<T>(disc_params, lr, opt.adam);
  }

  finish_generator_objective(tape, model, extractor, obj, opt);
  report.l1 = check(obj.l1.value().item(), "l1");
  report.adversarial = check(obj.adversarial.value().item(), "adversarial");
  report.kl = check(obj.kl.value().item(), "kl");
  report.id = check(obj.id.value().item(), "id");
  report.total = check(obj.total.value().item(), "total");

  for (auto* p : gen_params) p->zero_grad();
  tape.backward(obj.total);
  nn::adam_step<T>(gen_params, lr, opt.adam);
  return report;
}

/// Learning rate held at `base` for the first half of training, then linearly decayed to `final_lr`.
inline double rpg_learning_rate(std::size_t step, std::size_t total_steps, double base = 2e-4,
                                double final_lr = 1e-8) {
  return nn::hold_then_linear_decay(step, total_steps, base, final_lr);
}

}  // namespace rpg::model

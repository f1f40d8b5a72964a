#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rpg/core/parallel.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/crease/bezier.hpp"
#include "rpg/crease/raster.hpp"
#include "rpg/model/networks.hpp"

namespace rpg::model {

struct DatasetOptions {
  std::size_t samples_per_id = 10;
  double jitter = 0.01;  // crease control-point perturbation, unit square coordinates
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;
};

struct GeneratedSample {
  std::size_t identity = 0;  // index into the accepted spec list
  std::size_t sample = 0;
  GrayImage image;
};

/// Seed for (identity, sample) within one domain: a two-level derivation so
/// each identity owns an independent stream.
inline std::uint64_t sample_seed(std::uint64_t master, std::string_view domain, std::uint64_t identity,
                                 std::uint64_t sample) {
  return derive_seed(derive_seed(master, domain, identity), domain, sample);
}

/// For every identity: jitter its crease, rasterize, draw a fresh prior latent
/// and generate one palmprint per sample. Output order is (identity, sample).
template <class T>
std::vector<GeneratedSample> generate_dataset(const RpgModel<T>& model, std::span<const crease::CreaseSpec> specs,
                                              const DatasetOptions& opt) {
  if (opt.samples_per_id == 0) throw std::invalid_argument("generate_dataset: samples_per_id must be >= 1");
  const std::size_t size = model.config().image_size;
  const std::size_t per = opt.samples_per_id;
  std::vector<GeneratedSample> out(specs.size() * per);
  parallel_for(specs.size(), opt.threads, [&](std::size_t id) {
    for (std::size_t s = 0; s < per; ++s) {
      const auto spec = crease::jitter_spec(specs[id], opt.jitter, sample_seed(opt.master_seed, seed_domain::jitter, id, s));
      const auto a = crease::rasterize(spec, size, size);
      const auto z = standard_normal<T>({model.config().latent_dim}, sample_seed(opt.master_seed, seed_domain::latent, id, s));
      auto& slot = out[id * per + s];
      slot.identity = id;
      slot.sample = s;
      slot.image = model.generate(a, z.span(), sample_seed(opt.master_seed, seed_domain::noise, id, s));
    }
  });
  return out;
}

}  // namespace rpg::model

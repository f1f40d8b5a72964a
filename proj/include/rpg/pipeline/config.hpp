#pragma once

// Flat key=value pipeline configuration. One key per line, '#' starts a
// comment, blank lines are ignored and unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/crease/bezier.hpp"
#include "rpg/crease/toy_palm.hpp"
#include "rpg/eval/metrics.hpp"
#include "rpg/eval/split.hpp"
#include "rpg/model/networks.hpp"
#include "rpg/model/trainer.hpp"
#include "rpg/recog/trainer.hpp"
#include "rpg/rloc/rloc.hpp"

namespace rpg::pipeline {

struct PipelineConfig {
  std::uint64_t master_seed = 0;
  std::size_t image_size = 64;

  // Identity key ranges. Every identity is addressed by a global key; the
  // three sources never overlap, which the isolation guard relies on.
  std::uint64_t synth_id_base = 0;
  std::uint64_t extractor_id_base = 1'000'000;
  std::uint64_t real_id_base = 2'000'000;

  // crease synthesis
  std::size_t synth_ids = 50;
  int wrinkle_min = 4;
  int wrinkle_max = 12;
  double wrinkle_length_min = 0.08;
  double wrinkle_length_max = 0.30;
  double bend_fraction = 0.15;

  // independence filter
  int rloc_orientations = 6;
  int rloc_line_length = 9;
  int rloc_stride = 4;
  int rloc_max_shift = 2;
  double rloc_threshold = 0.9;
  bool filter_principal_only = false;

  // generator / encoder / discriminator
  std::size_t model_base_channels = 16;
  std::size_t model_num_scales = 3;
  std::size_t model_latent_dim = 8;
  std::size_t model_control_dim = 32;
  double model_noise_std = 0.02;
  std::size_t model_disc_channels = 16;

  double loss_adversarial = 1.0;
  double loss_l1 = 10.0;
  double loss_kl = 0.01;
  double loss_id = 5.0;
  bool loss_adversarial_on_prior = false;

  std::size_t rpg_steps = 200;
  std::size_t rpg_batch_size = 4;
  double rpg_lr = 2e-4;
  double rpg_final_lr = 1e-8;

  // frozen identity extractor, trained on crease classes
  std::string extractor_checkpoint;  // empty: train one in train-rpg
  std::size_t extractor_ids = 20;
  std::size_t extractor_samples_per_id = 8;
  std::size_t extractor_epochs = 5;

  // toy "real" palmprints
  std::size_t real_ids = 20;
  std::size_t real_samples_per_id = 6;
  std::string real_split = "1:1";
  double real_jitter = 0.012;

  // synthetic dataset
  std::size_t dataset_samples_per_id = 10;
  double dataset_jitter = 0.01;

  // recognizer
  std::string recog_mode = "pretrain";
  std::string recog_init;  // checkpoint path; empty: from scratch
  std::string recog_tag;   // output name; empty: the mode
  std::size_t recog_epochs = 25;
  std::size_t recog_batch_size = 32;
  double recog_lr_max = 1e-2;
  double recog_lr_min = 1e-6;
  std::size_t recog_warmup_epochs = 1;
  double recog_margin = 0.5;
  double recog_scale = 48.0;
  std::size_t recog_base_channels = 16;
  std::size_t recog_embedding_dim = 64;

  // evaluation
  std::string eval_model;        // recognizer checkpoint; empty: recognizer/finetune.ckpt under --out
  std::string eval_scores_file;  // evaluate an existing score dump instead
  std::string eval_far_levels = "1e-3,1e-2,1e-1";
  std::size_t eval_impostor_cap = 1'000'000;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Calls f(key, member) for every field in serialization order.
template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  f("master_seed", c.master_seed);
  f("image_size", c.image_size);
  f("synth_id_base", c.synth_id_base);
  f("extractor_id_base", c.extractor_id_base);
  f("real_id_base", c.real_id_base);
  f("synth.ids", c.synth_ids);
  f("crease.wrinkle_min", c.wrinkle_min);
  f("crease.wrinkle_max", c.wrinkle_max);
  f("crease.wrinkle_length_min", c.wrinkle_length_min);
  f("crease.wrinkle_length_max", c.wrinkle_length_max);
  f("crease.bend_fraction", c.bend_fraction);
  f("rloc.orientations", c.rloc_orientations);
  f("rloc.line_length", c.rloc_line_length);
  f("rloc.stride", c.rloc_stride);
  f("rloc.max_shift", c.rloc_max_shift);
  f("rloc.threshold", c.rloc_threshold);
  f("filter.principal_only", c.filter_principal_only);
  f("model.base_channels", c.model_base_channels);
  f("model.num_scales", c.model_num_scales);
  f("model.latent_dim", c.model_latent_dim);
  f("model.control_dim", c.model_control_dim);
  f("model.noise_std", c.model_noise_std);
  f("model.disc_channels", c.model_disc_channels);
  f("loss.adversarial", c.loss_adversarial);
  f("loss.l1", c.loss_l1);
  f("loss.kl", c.loss_kl);
  f("loss.id", c.loss_id);
  f("loss.adversarial_on_prior", c.loss_adversarial_on_prior);
  f("rpg.steps", c.rpg_steps);
  f("rpg.batch_size", c.rpg_batch_size);
  f("rpg.lr", c.rpg_lr);
  f("rpg.final_lr", c.rpg_final_lr);
  f("extractor.checkpoint", c.extractor_checkpoint);
  f("extractor.ids", c.extractor_ids);
  f("extractor.samples_per_id", c.extractor_samples_per_id);
  f("extractor.epochs", c.extractor_epochs);
  f("real.ids", c.real_ids);
  f("real.samples_per_id", c.real_samples_per_id);
  f("real.split", c.real_split);
  f("real.jitter", c.real_jitter);
  f("dataset.samples_per_id", c.dataset_samples_per_id);
  f("dataset.jitter", c.dataset_jitter);
  f("recog.mode", c.recog_mode);
  f("recog.init", c.recog_init);
  f("recog.tag", c.recog_tag);
  f("recog.epochs", c.recog_epochs);
  f("recog.batch_size", c.recog_batch_size);
  f("recog.lr_max", c.recog_lr_max);
  f("recog.lr_min", c.recog_lr_min);
  f("recog.warmup_epochs", c.recog_warmup_epochs);
  f("recog.margin", c.recog_margin);
  f("recog.scale", c.recog_scale);
  f("recog.base_channels", c.recog_base_channels);
  f("recog.embedding_dim", c.recog_embedding_dim);
  f("eval.model", c.eval_model);
  f("eval.scores_file", c.eval_scores_file);
  f("eval.far_levels", c.eval_far_levels);
  f("eval.impostor_cap", c.eval_impostor_cap);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if constexpr (std::is_signed_v<Int>) {
      const long long x = std::stoll(v, &used);
      if (used == v.size()) return static_cast<Int>(x);
    } else {
      if (!v.empty() && v[0] != '-') {
        const unsigned long long x = std::stoull(v, &used);
        if (used == v.size()) return static_cast<Int>(x);
      }
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
}

inline void parse_value(const std::string& key, const std::string& v, std::string& out) { out = v; }
inline void parse_value(const std::string& key, const std::string& v, bool& out) {
  if (v == "true" || v == "1") out = true;
  else if (v == "false" || v == "0") out = false;
  else throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}
inline void parse_value(const std::string& key, const std::string& v, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    if (used == v.size() && std::isfinite(out)) return;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a finite number, got '" + v + "'");
}
template <class Int>
  requires std::is_integral_v<Int>
void parse_value(const std::string& key, const std::string& v, Int& out) {
  out = parse_integer<Int>(key, v);
}

inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
template <class Int>
  requires std::is_integral_v<Int>
std::string format_value(Int v) {
  return std::to_string(v);
}

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    bool known = false;
    visit_fields(cfg, [&](const char* name, auto& member) {
      if (key == name) {
        detail::parse_value(key, value, member);
        known = true;
      }
    });
    if (!known) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

inline std::string serialize_config(const PipelineConfig& cfg) {
  std::string out;
  visit_fields(cfg, [&](const char* name, const auto& member) {
    out += name;
    out += '=';
    out += detail::format_value(member);
    out += '\n';
  });
  return out;
}

inline std::uint64_t config_hash(const PipelineConfig& cfg) { return fnv1a64(serialize_config(cfg)); }

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

inline std::vector<double> parse_far_levels(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    double v = 0.0;
    detail::parse_value("eval.far_levels", detail::trim(item), v);
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError("eval.far_levels: each level must lie in (0, 1]");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("eval.far_levels is empty");
  return out;
}

// Conversions into the module configs.

inline crease::LayoutConfig layout_config(const PipelineConfig& c) {
  crease::LayoutConfig l;
  l.wrinkle_min = c.wrinkle_min;
  l.wrinkle_max = c.wrinkle_max;
  l.wrinkle_length = {c.wrinkle_length_min, c.wrinkle_length_max};
  l.bend_fraction = c.bend_fraction;
  return l;
}

inline rloc::FilterConfig filter_config(const PipelineConfig& c) {
  rloc::FilterConfig f;
  f.threshold = c.rloc_threshold;
  f.rloc = {c.rloc_orientations, c.rloc_line_length, c.rloc_stride, c.rloc_max_shift};
  f.raster_size = c.image_size;
  f.principal_only = c.filter_principal_only;
  return f;
}

inline model::GeneratorConfig generator_config(const PipelineConfig& c) {
  model::GeneratorConfig g;
  g.image_size = c.image_size;
  g.base_channels = c.model_base_channels;
  g.num_scales = c.model_num_scales;
  g.latent_dim = c.model_latent_dim;
  g.control_dim = c.model_control_dim;
  g.noise_std = c.model_noise_std;
  g.disc_channels = c.model_disc_channels;
  return g;
}

inline model::TrainOptions train_options(const PipelineConfig& c) {
  model::TrainOptions o;
  o.weights = {c.loss_adversarial, c.loss_l1, c.loss_kl, c.loss_id};
  o.adversarial_on_prior = c.loss_adversarial_on_prior;
  return o;
}

inline recog::EmbeddingConfig embedding_config(const PipelineConfig& c) {
  recog::EmbeddingConfig e;
  e.base_channels = c.recog_base_channels;
  e.embedding_dim = c.recog_embedding_dim;
  return e;
}

inline recog::RecognizerOptions recognizer_options(const PipelineConfig& c, std::size_t epochs,
                                                   std::uint64_t stream) {
  recog::RecognizerOptions o;
  o.epochs = epochs;
  o.batch_size = c.recog_batch_size;
  o.lr_max = c.recog_lr_max;
  o.lr_min = c.recog_lr_min;
  o.warmup_epochs = c.recog_warmup_epochs;
  o.margin = c.recog_margin;
  o.scale = c.recog_scale;
  o.init_seed = derive_seed(c.master_seed, seed_domain::init, stream);
  o.shuffle_seed = derive_seed(c.master_seed, seed_domain::shuffle, stream);
  return o;
}

inline crease::ToyPalmStyle toy_palm_style(const PipelineConfig& c) {
  crease::ToyPalmStyle s;
  s.jitter = c.real_jitter;
  return s;
}

/// Value checks that need no filesystem access; referenced paths are checked
/// by the subcommand that reads them.
inline void validate(const PipelineConfig& c) {
  try {
    crease::validate(layout_config(c));
    model::validate(generator_config(c));
    model::validate(train_options(c).weights);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.image_size < 16) throw ConfigError("image_size must be >= 16");
  if (!(c.rloc_threshold > 0.0 && c.rloc_threshold <= 1.0)) throw ConfigError("rloc.threshold must lie in (0, 1]");
  if (c.rloc_orientations < 2 || c.rloc_line_length < 1 || c.rloc_stride < 1 || c.rloc_max_shift < 0)
    throw ConfigError("invalid RLOC parameters");
  if (static_cast<std::size_t>(c.rloc_line_length) > c.image_size)
    throw ConfigError("rloc.line_length exceeds image_size");
  if (c.rpg_batch_size == 0 || c.recog_batch_size == 0) throw ConfigError("batch sizes must be >= 1");
  if (!(c.rpg_lr > 0.0) || c.rpg_final_lr < 0.0 || c.rpg_final_lr > c.rpg_lr) throw ConfigError("invalid rpg learning rates");
  if (!(c.recog_lr_max > 0.0) || c.recog_lr_min < 0.0 || c.recog_lr_min > c.recog_lr_max)
    throw ConfigError("invalid recognizer learning rates");
  if (c.recog_margin < 0.0 || !(c.recog_scale > 0.0)) throw ConfigError("invalid ArcFace margin/scale");
  if (c.recog_base_channels == 0 || c.recog_embedding_dim == 0) throw ConfigError("recognizer widths must be >= 1");
  if (c.dataset_samples_per_id == 0 || c.real_samples_per_id == 0 || c.extractor_samples_per_id == 0)
    throw ConfigError("samples per identity must be >= 1");
  if (c.dataset_jitter < 0.0 || c.real_jitter < 0.0) throw ConfigError("jitter must be >= 0");
  if (c.eval_impostor_cap == 0) throw ConfigError("eval.impostor_cap must be >= 1");
  recog::parse_train_mode(c.recog_mode);
  eval::parse_ratio(c.real_split);
  parse_far_levels(c.eval_far_levels);
  for (const auto* tag : {&c.recog_tag})
    if (tag->find_first_of("/\\") != std::string::npos) throw ConfigError("recog.tag must be a plain name");

  // key ranges must not overlap
  struct Span {
    std::uint64_t base, count;
    const char* name;
  };
  const Span spans[] = {{c.synth_id_base, c.synth_ids, "synth"},
                        {c.extractor_id_base, c.extractor_ids, "extractor"},
                        {c.real_id_base, c.real_ids, "real"}};
  for (const auto& a : spans)
    for (const auto& b : spans)
      if (&a < &b && a.base < b.base + b.count && b.base < a.base + a.count)
        throw ConfigError(std::string("identity key ranges overlap: ") + a.name + " and " + b.name);
}

}  // namespace rpg::pipeline

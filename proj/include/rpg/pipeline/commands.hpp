#pragma once

// The six pipeline stages. Every artifact lives under the output directory:
//
//   creases/   manifest.csv, id_NNNNN.pgm            synth-creases
//   filter/    accepted.txt, report.txt              filter-ids
//   real/      manifest.csv, images                  train-rpg (toy real palms, split tagged)
//   rpg/       extractor.ckpt, rpg.ckpt, losses.csv,
//              training_keys.txt                     train-rpg
//   dataset/   manifest.csv, images                  generate-dataset
//   recognizer/<tag>.ckpt, <tag>_loss.csv,
//              <tag>_keys.txt                        train-recognizer
//   eval/      report.txt, curve.csv, scores.csv     evaluate
//   logs/      <command>.log

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/image.hpp"
#include "rpg/core/parallel.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/crease/bezier.hpp"
#include "rpg/crease/raster.hpp"
#include "rpg/crease/toy_palm.hpp"
#include "rpg/eval/metrics.hpp"
#include "rpg/eval/split.hpp"
#include "rpg/model/dataset.hpp"
#include "rpg/model/trainer.hpp"
#include "rpg/nn/checkpoint.hpp"
#include "rpg/pipeline/config.hpp"
#include "rpg/pipeline/log.hpp"
#include "rpg/pipeline/manifest.hpp"
#include "rpg/recog/trainer.hpp"
#include "rpg/rloc/rloc.hpp"

namespace rpg::pipeline {

namespace fs = std::filesystem;

// init / shuffle stream indices per trained component
inline constexpr std::uint64_t kStreamExtractor = 0;
inline constexpr std::uint64_t kStreamRpg = 1;
inline constexpr std::uint64_t kStreamPretrain = 2;
inline constexpr std::uint64_t kStreamFinetune = 3;
inline constexpr std::uint64_t kStreamRpgBatches = 4;

struct Context {
  PipelineConfig cfg;
  fs::path out = "out";
  std::size_t threads = 1;
  LogLevel level = LogLevel::info;
};

// ---- shared helpers -------------------------------------------------------

inline crease::CreaseSpec identity_spec(const PipelineConfig& c, std::uint64_t key) {
  return crease::sample_crease_spec(derive_seed(c.master_seed, seed_domain::crease, key), layout_config(c));
}

inline std::string fmt(double v) { return eval::format_double(v); }

inline std::vector<std::uint64_t> read_keys(const fs::path& path) {
  std::vector<std::uint64_t> keys;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      keys.push_back(std::stoull(line));
    } catch (const std::exception&) {
      throw ConfigError("bad key line in " + path.string());
    }
  }
  return keys;
}

inline void write_keys(const fs::path& path, const std::vector<std::uint64_t>& keys) {
  std::string s;
  for (auto k : keys) s += std::to_string(k) + "\n";
  eval::write_text(path, s);
}

/// Training identities recorded as "<source> <key>" lines.
inline std::vector<std::pair<std::string, std::uint64_t>> read_tagged_keys(const fs::path& path) {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  std::istringstream in(read_text(path));
  std::string source;
  std::uint64_t key = 0;
  while (in >> source >> key) out.emplace_back(source, key);
  return out;
}

inline void write_tagged_keys(const fs::path& path, const std::vector<std::pair<std::string, std::uint64_t>>& keys) {
  std::string s;
  for (const auto& [src, k] : keys) s += src + " " + std::to_string(k) + "\n";
  eval::write_text(path, s);
}

inline fs::path require_file(const fs::path& p, const std::string& hint) {
  if (!fs::is_regular_file(p)) throw ConfigError("missing " + p.string() + " (" + hint + ")");
  return p;
}

struct LabeledImages {
  std::vector<GrayImage> images;
  std::vector<std::size_t> labels;     // contiguous from 0
  std::vector<std::uint64_t> keys;     // per label
};

/// Toy real palmprints for `keys` (sorted), real_samples_per_id each, labels by position.
inline LabeledImages render_real(const PipelineConfig& c, const std::vector<std::uint64_t>& keys, std::size_t threads) {
  LabeledImages d;
  d.keys = keys;
  const std::size_t per = c.real_samples_per_id;
  d.images.resize(keys.size() * per);
  d.labels.resize(keys.size() * per);
  const auto style = toy_palm_style(c);
  parallel_for(keys.size(), threads, [&](std::size_t i) {
    const auto spec = identity_spec(c, keys[i]);
    for (std::size_t s = 0; s < per; ++s) {
      d.images[i * per + s] = crease::render_toy_palm(
          spec, model::sample_seed(c.master_seed, seed_domain::jitter, keys[i], s), c.image_size, style);
      d.labels[i * per + s] = i;
    }
  });
  return d;
}

/// Jittered crease rasters for the extractor's identity classes.
inline LabeledImages render_crease_classes(const PipelineConfig& c, const std::vector<std::uint64_t>& keys,
                                           std::size_t per, std::size_t threads) {
  LabeledImages d;
  d.keys = keys;
  d.images.resize(keys.size() * per);
  d.labels.resize(keys.size() * per);
  parallel_for(keys.size(), threads, [&](std::size_t i) {
    const auto spec = identity_spec(c, keys[i]);
    for (std::size_t s = 0; s < per; ++s) {
      const auto j = crease::jitter_spec(spec, c.dataset_jitter,
                                         model::sample_seed(c.master_seed, seed_domain::jitter, keys[i], s));
      d.images[i * per + s] = crease::rasterize(j, c.image_size, c.image_size);
      d.labels[i * per + s] = i;
    }
  });
  return d;
}

inline std::vector<std::uint64_t> key_range(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = base + i;
  return k;
}

inline eval::SplitPlan real_split(const PipelineConfig& c) {
  auto plan = eval::make_split(key_range(c.real_id_base, c.real_ids), eval::parse_ratio(c.real_split), c.master_seed);
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

inline void write_labeled(const fs::path& dir, const LabeledImages& d, const std::string& split,
                          std::vector<ManifestRow>& rows) {
  std::vector<std::size_t> sample_of(d.keys.size(), 0);
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const std::size_t id = d.labels[i];
    const std::size_t s = sample_of[id]++;
    char name[64];
    std::snprintf(name, sizeof name, "images/%s_%07llu_s%03zu.pgm", split.c_str(),
                  static_cast<unsigned long long>(d.keys[id]), s);
    write_image(dir / name, d.images[i]);
    rows.push_back({name, id, s, split, d.keys[id]});
  }
}

inline std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) s += (s.empty() ? "" : ",") + c;
  return s + "\n";
}

// ---- subcommands ----------------------------------------------------------

inline void synth_creases(const Context& ctx, RunLog& log) {
  const auto& c = ctx.cfg;
  const auto keys = key_range(c.synth_id_base, c.synth_ids);
  std::vector<GrayImage> images(keys.size());
  parallel_for(keys.size(), ctx.threads, [&](std::size_t i) {
    images[i] = crease::rasterize(identity_spec(c, keys[i]), c.image_size, c.image_size);
  });
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "id_%05zu.pgm", i);
    write_image(ctx.out / "creases" / name, images[i]);
    rows.push_back({name, i, 0, "synth", keys[i]});
  }
  write_manifest(ctx.out / "creases" / "manifest.csv", rows);
  log.info("crease identities: " + std::to_string(keys.size()));
}

inline void filter_ids(const Context& ctx, RunLog& log) {
  const auto& c = ctx.cfg;
  const auto rows = read_manifest(require_file(ctx.out / "creases" / "manifest.csv", "run synth-creases first"));
  const auto fcfg = filter_config(c);
  std::vector<rloc::OrientationCode> codes(rows.size());
  parallel_for(rows.size(), ctx.threads,
               [&](std::size_t i) { codes[i] = rloc::encode_spec(identity_spec(c, rows[i].key), fcfg); });
  const auto res = rloc::filter_codes(codes, fcfg.threshold, fcfg.rloc.max_shift);
  std::vector<std::uint64_t> accepted;
  for (auto i : res.accepted) accepted.push_back(rows[i].key);
  write_keys(ctx.out / "filter" / "accepted.txt", accepted);
  std::string report = "candidates=" + std::to_string(rows.size()) + "\naccepted=" + std::to_string(res.accepted.size()) +
                       "\nrejected=" + std::to_string(res.rejected.size()) +
                       "\nacceptance_rate=" + fmt(res.acceptance_rate()) + "\nthreshold=" + fmt(fcfg.threshold) +
                       "\nrejected_keys=";
  for (std::size_t n = 0; n < res.rejected.size(); ++n)
    report += (n ? "," : "") + std::to_string(rows[res.rejected[n]].key);
  eval::write_text(ctx.out / "filter" / "report.txt", report + "\n");
  log.info("accepted " + std::to_string(res.accepted.size()) + " of " + std::to_string(rows.size()) +
           " identities at threshold " + fmt(fcfg.threshold));
}

inline std::vector<nn::NamedTensor> train_extractor(const PipelineConfig& c, std::size_t threads, RunLog& log) {
  const auto data = render_crease_classes(c, key_range(c.extractor_id_base, c.extractor_ids),
                                          c.extractor_samples_per_id, threads);
  recog::TrainLog tl;
  auto rec = recog::train_recognizer<float>(data.images, data.labels, recog::TrainMode::pretrain, nullptr,
                                            embedding_config(c), recognizer_options(c, c.extractor_epochs, kStreamExtractor), &tl);
  if (!tl.epoch_loss.empty())
    log.info("extractor loss " + fmt(tl.epoch_loss.front()) + " -> " + fmt(tl.epoch_loss.back()));
  return rec->checkpoint();
}

inline void train_rpg(const Context& ctx, RunLog& log) {
  const auto& c = ctx.cfg;
  const auto accepted = read_keys(require_file(ctx.out / "filter" / "accepted.txt", "run filter-ids first"));
  if (accepted.empty()) throw ConfigError("no accepted crease identities");
  std::vector<std::pair<std::string, std::uint64_t>> training_keys;

  // frozen identity extractor
  std::vector<nn::NamedTensor> ext_ckpt;
  if (!c.extractor_checkpoint.empty()) {
    ext_ckpt = nn::load_checkpoint(require_file(c.extractor_checkpoint, "extractor.checkpoint"));
    log.info("extractor loaded from checkpoint");
  } else {
    ext_ckpt = train_extractor(c, ctx.threads, log);
    for (auto k : key_range(c.extractor_id_base, c.extractor_ids)) training_keys.emplace_back("extractor", k);
  }
  nn::save_checkpoint(ctx.out / "rpg" / "extractor.ckpt", ext_ckpt);
  recog::EmbeddingModel<float> extractor(embedding_config(c), 0);
  if (nn::restore(extractor.params(), ext_ckpt, "backbone.") != extractor.params().size())
    throw ConfigError("extractor checkpoint does not match the recognizer architecture");

  // toy real palmprints; only the train split reaches the model
  const auto split = real_split(c);
  if (split.train.empty()) throw ConfigError("real split leaves no training identities");
  const auto real_train = render_real(c, split.train, ctx.threads);
  const auto real_test = render_real(c, split.test, ctx.threads);
  std::vector<ManifestRow> rows;
  write_labeled(ctx.out / "real", real_train, "train", rows);
  write_labeled(ctx.out / "real", real_test, "test", rows);
  write_manifest(ctx.out / "real" / "manifest.csv", rows);
  for (auto k : split.train) training_keys.emplace_back("real", k);

  std::vector<GrayImage> creases(accepted.size());
  parallel_for(accepted.size(), ctx.threads, [&](std::size_t i) {
    creases[i] = crease::rasterize(identity_spec(c, accepted[i]), c.image_size, c.image_size);
  });
  for (auto k : accepted) training_keys.emplace_back("condition", k);

  model::RpgModel<float> rpg(generator_config(c), derive_seed(c.master_seed, seed_domain::init, kStreamRpg));
  const auto opt = train_options(c);
  std::string losses = "step,lr,l1,adversarial,kl,id,total,discriminator\n";
  const std::uint64_t batch_master = derive_seed(c.master_seed, seed_domain::shuffle, kStreamRpgBatches);
  for (std::size_t step = 0; step < c.rpg_steps; ++step) {
    SplitMix64 rng(derive_seed(batch_master, seed_domain::shuffle, step));
    std::vector<GrayImage> b, a;
    for (std::size_t i = 0; i < c.rpg_batch_size; ++i) {
      b.push_back(real_train.images[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(real_train.images.size()) - 1))]);
      a.push_back(creases[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(creases.size()) - 1))]);
    }
    const double lr = model::rpg_learning_rate(step, c.rpg_steps, c.rpg_lr, c.rpg_final_lr);
    const auto r = model::train_step<float>(rpg, extractor, b, a, opt, model::step_seeds(c.master_seed, step), lr, step);
    losses += csv_row({std::to_string(step), fmt(lr), fmt(r.l1), fmt(r.adversarial), fmt(r.kl), fmt(r.id), fmt(r.total),
                       fmt(r.discriminator)});
    if (step % 50 == 0 || step + 1 == c.rpg_steps)
      log.debug("step " + std::to_string(step) + " l1=" + fmt(r.l1) + " total=" + fmt(r.total));
  }
  eval::write_text(ctx.out / "rpg" / "losses.csv", losses);
  nn::save_checkpoint(ctx.out / "rpg" / "rpg.ckpt", nn::snapshot(rpg.params()));
  write_tagged_keys(ctx.out / "rpg" / "training_keys.txt", training_keys);
  log.info("rpg trained for " + std::to_string(c.rpg_steps) + " steps on " + std::to_string(split.train.size()) +
           " real identities and " + std::to_string(accepted.size()) + " crease conditions");
}

inline void load_rpg(model::RpgModel<float>& m, const fs::path& path) {
  const auto ckpt = nn::load_checkpoint(require_file(path, "run train-rpg first"));
  if (nn::restore(m.params(), ckpt) != m.params().size())
    throw ConfigError("rpg checkpoint does not cover every model parameter");
}

inline void generate_dataset(const Context& ctx, RunLog& log) {
  const auto& c = ctx.cfg;
  const auto accepted = read_keys(require_file(ctx.out / "filter" / "accepted.txt", "run filter-ids first"));
  model::RpgModel<float> rpg(generator_config(c), 0);
  load_rpg(rpg, ctx.out / "rpg" / "rpg.ckpt");
  std::vector<crease::CreaseSpec> specs;
  for (auto k : accepted) specs.push_back(identity_spec(c, k));
  model::DatasetOptions opt;
  opt.samples_per_id = c.dataset_samples_per_id;
  opt.jitter = c.dataset_jitter;
  opt.master_seed = c.master_seed;
  opt.threads = ctx.threads;
  const auto samples = model::generate_dataset(rpg, specs, opt);
  std::vector<ManifestRow> rows;
  for (const auto& s : samples) {
    char name[48];
    std::snprintf(name, sizeof name, "images/id_%05zu_s%03zu.pgm", s.identity, s.sample);
    write_image(ctx.out / "dataset" / name, s.image);
    rows.push_back({name, s.identity, s.sample, "synth", accepted[s.identity]});
  }
  write_manifest(ctx.out / "dataset" / "manifest.csv", rows);
  log.info("generated " + std::to_string(samples.size()) + " palmprints for " + std::to_string(specs.size()) +
           " identities");
}

inline LabeledImages load_manifest_images(const fs::path& manifest, const std::string& split) {
  const auto rows = read_manifest(require_file(manifest, "missing dataset manifest"));
  LabeledImages d;
  std::map<std::size_t, std::uint64_t> key_of;
  for (const auto& r : rows) {
    if (r.split != split) continue;
    d.images.push_back(read_image(manifest.parent_path() / r.path));
    d.labels.push_back(r.identity);
    key_of[r.identity] = r.key;
  }
  for (const auto& [id, key] : key_of) d.keys.push_back(key);
  return d;
}

inline std::string recognizer_tag(const PipelineConfig& c) { return c.recog_tag.empty() ? c.recog_mode : c.recog_tag; }

inline void train_recognizer(const Context& ctx, RunLog& log) {
  const auto& c = ctx.cfg;
  const auto mode = recog::parse_train_mode(c.recog_mode);
  const auto data = mode == recog::TrainMode::pretrain ? load_manifest_images(ctx.out / "dataset" / "manifest.csv", "synth")
                                                       : render_real(c, real_split(c).train, ctx.threads);
  std::vector<nn::NamedTensor> init;
  if (!c.recog_init.empty()) init = nn::load_checkpoint(require_file(c.recog_init, "recog.init"));
  recog::TrainLog tl;
  const auto stream = mode == recog::TrainMode::pretrain ? kStreamPretrain : kStreamFinetune;
  auto rec = recog::train_recognizer<float>(data.images, data.labels, mode, c.recog_init.empty() ? nullptr : &init,
                                            embedding_config(c), recognizer_options(c, c.recog_epochs, stream), &tl);
  const auto tag = recognizer_tag(c);
  nn::save_checkpoint(ctx.out / "recognizer" / (tag + ".ckpt"), rec->checkpoint());
  std::string loss = "epoch,loss\n";
  for (std::size_t e = 0; e < tl.epoch_loss.size(); ++e) loss += csv_row({std::to_string(e), fmt(tl.epoch_loss[e])});
  eval::write_text(ctx.out / "recognizer" / (tag + "_loss.csv"), loss);
  write_keys(ctx.out / "recognizer" / (tag + "_keys.txt"), data.keys);
  log.info("recognizer '" + tag + "' trained on " + std::to_string(data.keys.size()) + " identities, " +
           std::to_string(data.images.size()) + " images" +
           (tl.epoch_loss.empty() ? "" : ", loss " + fmt(tl.epoch_loss.front()) + " -> " + fmt(tl.epoch_loss.back())));
}

/// Every identity key that reached any trained component under `out`.
inline std::map<std::uint64_t, std::string> recorded_training_keys(const fs::path& out) {
  std::map<std::uint64_t, std::string> keys;
  if (fs::is_regular_file(out / "rpg" / "training_keys.txt"))
    for (const auto& [src, k] : read_tagged_keys(out / "rpg" / "training_keys.txt")) keys.emplace(k, "rpg " + src);
  if (fs::is_directory(out / "recognizer")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(out / "recognizer"))
      if (e.path().filename().string().ends_with("_keys.txt")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      for (auto k : read_keys(f)) keys.emplace(k, "recognizer " + f.stem().string());
  }
  return keys;
}

/// Refuses evaluation when a test identity was seen in training.
inline void isolation_guard(const std::vector<std::uint64_t>& test_keys,
                            const std::map<std::uint64_t, std::string>& training) {
  for (auto k : test_keys)
    if (auto it = training.find(k); it != training.end())
      throw ConfigError("isolation guard: test identity " + std::to_string(k) + " was used in training (" +
                        it->second + ")");
}

struct EvalResult {
  eval::ScoreSet scores;
  std::vector<double> far_levels;
  std::vector<double> tar;
  double eer = 0.0;
};

inline std::string tar_table(const EvalResult& r) {
  std::string s = "far,tar\n";
  for (std::size_t i = 0; i < r.far_levels.size(); ++i) s += csv_row({fmt(r.far_levels[i]), fmt(r.tar[i])});
  return s;
}

inline EvalResult evaluate_scores(eval::ScoreSet scores, const std::vector<double>& far_levels) {
  EvalResult r;
  r.scores = std::move(scores);
  r.far_levels = far_levels;
  r.tar = eval::tar_at_far(r.scores, far_levels);
  r.eer = eval::eer(r.scores);
  return r;
}

/// Embeds each test image and scores all pairs.
inline eval::ScoreSet score_recognizer(const recog::EmbeddingModel<float>& m, const LabeledImages& test,
                                       const eval::PairingPolicy& policy, std::size_t threads) {
  std::vector<std::vector<float>> emb(test.images.size());
  parallel_for(test.images.size(), threads, [&](std::size_t i) { emb[i] = m.embed(test.images[i]); });
  return eval::score_pairs(emb, test.labels, policy);
}

inline void evaluate(const Context& ctx, RunLog& log) {
  const auto& c = ctx.cfg;
  const auto far_levels = parse_far_levels(c.eval_far_levels);
  eval::ScoreSet scores;
  std::string source;
  if (!c.eval_scores_file.empty()) {
    scores = eval::read_score_dump(require_file(c.eval_scores_file, "eval.scores_file"));
    source = "score dump";
  } else {
    const fs::path model_path = c.eval_model.empty() ? ctx.out / "recognizer" / "finetune.ckpt" : fs::path(c.eval_model);
    const auto ckpt = nn::load_checkpoint(require_file(model_path, "eval.model or run train-recognizer first"));
    const auto split = real_split(c);
    if (split.test.empty()) throw ConfigError("real split leaves no test identities");
    isolation_guard(split.test, recorded_training_keys(ctx.out));
    recog::EmbeddingModel<float> m(embedding_config(c), 0);
    if (nn::restore(m.params(), ckpt, "backbone.") != m.params().size())
      throw ConfigError("recognizer checkpoint does not match the configured architecture");
    scores = score_recognizer(m, render_real(c, split.test, ctx.threads), {c.eval_impostor_cap, c.master_seed},
                              ctx.threads);
    source = std::to_string(split.test.size()) + " test identities (" + eval::parse_ratio(c.real_split).tag() + ")";
  }
  const auto r = evaluate_scores(std::move(scores), far_levels);
  const auto table = tar_table(r);
  eval::write_text(ctx.out / "eval" / "scores.csv", eval::score_dump(r.scores));
  eval::export_curve(r.scores, ctx.out / "eval" / "curve.csv");
  eval::write_text(ctx.out / "eval" / "report.txt",
                   "source=" + source + "\ngenuine=" + std::to_string(r.scores.genuine.size()) +
                       "\nimpostor=" + std::to_string(r.scores.impostor.size()) + "\neer=" + fmt(r.eer) + "\n" + table);
  std::cout << table << "eer," << fmt(r.eer) << "\n";
  log.info("evaluated " + source + ": eer=" + fmt(r.eer));
}

inline const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"synth-creases",    "filter-ids",       "train-rpg",
                                              "generate-dataset", "train-recognizer", "evaluate"};
  return names;
}

/// Validates the config, runs one stage and writes its run log.
inline void run_subcommand(const std::string& name, const Context& ctx) {
  validate(ctx.cfg);
  RunLog log(name, config_hash(ctx.cfg), ctx.level);
  if (name == "synth-creases") synth_creases(ctx, log);
  else if (name == "filter-ids") filter_ids(ctx, log);
  else if (name == "train-rpg") train_rpg(ctx, log);
  else if (name == "generate-dataset") generate_dataset(ctx, log);
  else if (name == "train-recognizer") train_recognizer(ctx, log);
  else if (name == "evaluate") evaluate(ctx, log);
  else throw ConfigError("unknown subcommand '" + name + "'");
  log.save(ctx.out / "logs" / (name + ".log"));
}

}  // namespace rpg::pipeline

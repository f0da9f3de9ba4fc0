// Copyright 2026 The LPM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// lpm command-line tool: synth, train, train-head, reconstruct, edit,
// generate, eval, serve.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lpm/lpm.hpp"
#include "lpm/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lpm;

namespace {

/// Flag values keyed by config key; a non-empty value overrides the config.
struct Flags {
  std::map<std::string, std::string> values;
  std::string config_path;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, values[key], help);
  }

  Config resolve() const {
    Config c;
    if (!config_path.empty()) {
      std::istringstream in(read_file(config_path));
      c = Config::parse(in, config_path);
    }
    for (const auto& [k, v] : values)
      if (!v.empty()) c.set(k, v);
    return c;
  }
};

std::string require(const Config& c, const std::string& key) {
  if (!c.has(key)) throw ConfigError("missing required setting '" + key + "' (flag or config file)");
  return c.get_string(key, "");
}

void write_resolved(const fs::path& dir, const std::string& command, Config c) {
  c.set("command", command);
  write_file_atomic(dir / "config.resolved.txt", c.to_text());
}

ModelSpec model_spec_from(const Config& c, int dataset_k) {
  ModelSpec s;
  s.feature_size = c.get_int("feature_size", s.feature_size);
  s.parts = c.get_int("parts", dataset_k);
  if (s.parts != dataset_k) {
    throw ConfigError("--parts " + std::to_string(s.parts) + " does not match the dataset's k = " +
                      std::to_string(dataset_k));
  }
  s.points = c.get_int("points", s.points);
  s.pooling = pooling_from_string(c.get_string("pooling", "max"));
  s.batch_norm = c.get_bool("batch_norm", true);
  s.segmentation_uses_global = c.get_bool("segmentation_uses_global", true);
  s.validate();
  return s;
}

Dataset split_or_all(const Dataset& ds, const std::string& split) {
  if (split == "all") return ds;
  Dataset d = ds.subset(split_from_string(split));
  if (d.samples.empty()) throw EmptyInputError("manifest has no '" + split + "' samples");
  return d;
}

LabeledCloud load_input(const fs::path& p, int k) {
  if (p.extension() == ".pts") {
    auto seg = p;
    seg.replace_extension(".seg");
    LoadOptions opt;
    opt.declared_k = k;
    opt.mapping = identity_mapping(k);
    return load_labeled_cloud(p, seg, opt).cloud;
  }
  return load_cloud_json(p, k);
}

void write_cloud(const fs::path& path, const LabeledCloud& c, bool export_pts) {
  write_file_atomic(path, cloud_to_json(c).dump());
  if (export_pts) {
    std::ostringstream pts, seg;
    write_pts(pts, c);
    write_seg(seg, c);
    auto p = path;
    write_file_atomic(p.replace_extension(".pts"), pts.str());
    write_file_atomic(p.replace_extension(".seg"), seg.str());
  }
}

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05zu.json", i);
  return buf;
}

std::vector<double> parse_steps(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("steps: '" + tok + "' is not a number");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Config& c) {
  const fs::path out = require(c, "out");
  SynthSpec spec = c.has("spec") ? synth_spec_from_json(json::parse(read_file(require(c, "spec"))))
                                 : SynthSpec::chair(256, 1);
  spec.points = c.get_int("points", spec.points);
  spec.seed = c.get_uint("seed", spec.seed);
  if (c.has("sampling")) spec.sampling = synth_sampling_from_string(c.get_string("sampling", ""));
  const auto count = c.get_int("count", 512);
  if (count < 1) throw ConfigError("count must be >= 1");
  const Dataset ds = synth_dataset(spec, static_cast<std::size_t>(count));
  const std::array<double, 3> ratios{c.get_double("split_train", 0.7), c.get_double("split_val", 0.1),
                                     c.get_double("split_test", 0.2)};
  const auto parts = split_dataset(ds, ratios, spec.seed);
  Dataset all;
  all.category = ds.category;
  all.k = ds.k;
  for (const Dataset* d : {&parts.train, &parts.val, &parts.test}) {
    all.samples.insert(all.samples.end(), d->samples.begin(), d->samples.end());
    all.splits.insert(all.splits.end(), d->splits.begin(), d->splits.end());
  }
  const auto manifest = write_dataset(all, out);
  if (c.get_bool("export_pts", false)) {
    for (std::size_t i = 0; i < all.samples.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "cloud_%05zu.json", i);
      write_cloud(out / name, all.samples[i], true);
    }
  }
  write_file_atomic(out / "synth_spec.json", to_json(spec).dump(2));
  write_resolved(out, "synth", c);
  std::cout << "wrote " << all.samples.size() << " clouds (train " << parts.train.size() << ", val "
            << parts.val.size() << ", test " << parts.test.size() << ") to " << manifest.string() << "\n";
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.learning_rate = c.get_double("lr", t.learning_rate);
  t.epochs = static_cast<int>(c.get_int("epochs", t.epochs));
  t.batch_size = static_cast<int>(c.get_int("batch_size", t.batch_size));
  const std::string metric = c.get_string("metric", "cd");
  if (metric != "cd" && metric != "emd") throw ConfigError("metric must be cd or emd");
  t.metric = metric == "cd" ? ReconMetric::kChamfer : ReconMetric::kEmdApprox;
  t.reduction = reduction_from_string(c.get_string("reduction", "mean"));
  t.segmentation_weight = c.get_double("segmentation_weight", t.segmentation_weight);
  t.seed = c.get_uint("seed", t.seed);
  const std::string seg = c.get_string("segmentation", "joint");
  if (seg == "joint") {
    t.segmentation = SegmentationTraining::kJoint;
  } else if (seg == "absent") {
    t.segmentation = SegmentationTraining::kAbsent;
  } else if (seg == "frozen-random") {
    t.segmentation = SegmentationTraining::kFrozenRandom;
  } else {
    throw ConfigError("segmentation must be joint, absent or frozen-random");
  }
  t.validate();
  return t;
}

void cmd_train(const Config& c) {
  const fs::path out = require(c, "out");
  const Dataset ds = load_manifest(require(c, "manifest"));
  const Dataset train_set = split_or_all(ds, c.get_string("split", "train"));
  const ModelSpec spec = model_spec_from(c, ds.k);
  const TrainConfig cfg = train_config_from(c);
  LpmModel<float> model(spec, cfg.seed);
  std::string history = "epoch,reconstruction,segmentation\n";
  const bool quiet = c.get_bool("quiet", false);
  const auto hist = train(model, train_set, cfg, [&](const EpochRecord& r) {
    char line[128];
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", r.epoch, r.reconstruction, r.segmentation);
    history += line;
    if (!quiet) std::cout << "epoch " << line << std::flush;
  });
  fs::create_directories(out);
  save_model(out / "model.lpmn", model, json{{"seed", cfg.seed}, {"command", "train"}});
  write_file_atomic(out / "history.csv", history);
  write_resolved(out, "train", c);
  std::cout << "final reconstruction " << hist.epochs.back().reconstruction << ", checkpoint "
            << (out / "model.lpmn").string() << "\n";
}

void cmd_train_head(const Config& c) {
  const fs::path out = require(c, "out");
  Bundle b = load_bundle(require(c, "checkpoint"));
  b.vae.reset();
  b.gan.reset();
  const Dataset ds = load_manifest(require(c, "manifest"));
  const Dataset train_set = split_or_all(ds, c.get_string("split", "train"));
  const std::string head = c.get_string("head", "vae");
  const auto seed = c.get_uint("seed", 1);
  std::string history;
  if (head == "vae") {
    VaeHead<float> vae(b.model.spec.feature_size, c.get_double("beta", 0.1), seed);
    VaeTrainConfig cfg;
    cfg.learning_rate = c.get_double("lr", cfg.learning_rate);
    cfg.epochs = static_cast<int>(c.get_int("epochs", cfg.epochs));
    cfg.batch_size = static_cast<int>(c.get_int("batch_size", cfg.batch_size));
    cfg.seed = seed;
    cfg.train_decoder = c.get_bool("train_decoder", true);
    history = "epoch,reconstruction,kl\n";
    train_vae(b.model, vae, train_set, cfg, [&](const VaeEpochRecord& r) {
      char line[128];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", r.epoch, r.reconstruction, r.kl);
      history += line;
    });
    b.kind = CheckpointKind::kVae;
    b.vae = std::move(vae);
  } else if (head == "gan" || head == "wgan") {
    GanConfig g;
    g.objective = head == "gan" ? GanObjective::kStandard : GanObjective::kWassersteinGp;
    g.gp_weight = c.get_double("gp_weight", g.gp_weight);
    g.critic_steps = static_cast<int>(c.get_int("critic_steps", g.critic_steps));
    g.generator_lr = c.get_double("generator_lr", g.generator_lr);
    g.critic_lr = c.get_double("critic_lr", g.critic_lr);
    LatentGan<float> gan(g, b.model.spec.parts, b.model.spec.feature_size, seed);
    const auto sets = encode_dataset(b.model, train_set);
    GanTrainConfig cfg;
    cfg.steps = static_cast<int>(c.get_int("steps", cfg.steps));
    cfg.batch_size = static_cast<int>(c.get_int("batch_size", cfg.batch_size));
    cfg.seed = seed;
    history = "step,critic_loss,generator_loss\n";
    train_gan(gan, flatten_latents<float>(sets), cfg, [&](const GanLogRecord& r) {
      char line[128];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", r.step, r.critic_loss, r.generator_loss);
      history += line;
    });
    b.kind = head == "gan" ? CheckpointKind::kGan : CheckpointKind::kWgan;
    b.gan = std::move(gan);
  } else {
    throw ConfigError("head must be vae, gan or wgan");
  }
  b.extra = json{{"seed", seed}, {"command", "train-head"}, {"head", head}};
  fs::create_directories(out);
  save_bundle(out / (head + ".lpmn"), b);
  write_file_atomic(out / (head + "_history.csv"), history);
  write_resolved(out, "train-head", c);
  std::cout << "wrote " << (out / (head + ".lpmn")).string() << "\n";
}

LabelSource label_source_from(const Config& c) { return label_source_from_string(c.get_string("label_source", "given")); }

void cmd_reconstruct(const Config& c) {
  const fs::path out = require(c, "out");
  const LpmModel<float> model = load_model(require(c, "checkpoint"));
  const LabeledCloud in = load_input(require(c, "input"), static_cast<int>(model.spec.parts));
  const LabeledCloud r = reconstruct(model, in, label_source_from(c));
  write_cloud(out, r, c.get_bool("export_pts", false));
  write_resolved(out.has_parent_path() ? out.parent_path() : fs::path("."), "reconstruct", c);
  std::cout << "chamfer to input " << chamfer(r.real_points(), in.real_points()) << "\n";
}

void cmd_edit(const Config& c, const std::vector<std::string>& inputs) {
  const fs::path out = require(c, "out");
  const Bundle b = load_bundle(require(c, "checkpoint"));
  const auto& model = b.model;
  const int k = static_cast<int>(model.spec.parts);
  if (inputs.empty()) throw ConfigError("edit needs at least one --input");
  const std::string op_text = require(c, "op");
  const json op_json = json::parse(fs::exists(op_text) ? read_file(op_text) : op_text);
  EditOp op = edit_op_from_json(op_json);
  const LabelSource source = label_source_from(c);
  std::map<std::string, PartFeatureSet<float>> sets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const LabeledCloud cloud = load_input(inputs[i], k);
    auto parts = source == LabelSource::kGiven ? encode(model, cloud).parts : encode_predicted(model, cloud).first.parts;
    sets[std::to_string(i)] = parts;
    sets[fs::path(inputs[i]).stem().string()] = std::move(parts);
  }
  SourceLookup<float> lookup = [&](const std::string& id) -> const PartFeatureSet<float>& {
    auto it = sets.find(id);
    if (it == sets.end()) throw InvalidEditError("edit: unknown source '" + id + "' (use an input index or file stem)");
    return it->second;
  };
  RowGenerator<float> gen = [&](const std::string& head, int part, std::uint64_t seed) -> RowVector<float> {
    if (head == "vae" && b.vae) return sample_latents(*b.vae, model.spec.parts, 1, seed)[0].features.row(part - 1);
    if (head != "vae" && b.gan && to_string(b.gan->config.objective) == head) {
      return sample_latents(*b.gan, 1, seed)[0].features.row(part - 1);
    }
    throw Error("checkpoint does not contain a trained '" + head + "' head");
  };
  const bool export_pts = c.get_bool("export_pts", false);
  fs::create_directories(out);
  const bool interp = op.kind == EditKind::kInterpolateGlobal || op.kind == EditKind::kInterpolatePart;
  if (interp && c.has("steps")) {
    const auto steps = parse_steps(c.get_string("steps", ""));
    for (std::size_t i = 0; i < steps.size(); ++i) {
      op.t = steps[i];
      const auto r = apply_edit<float>(op, lookup, model.spec.pooling, gen);
      char name[32];
      std::snprintf(name, sizeof(name), "step_%02zu.json", i);
      write_cloud(out / name, decode_labeled(model, r.global), export_pts);
    }
    std::cout << "wrote " << steps.size() << " interpolation steps to " << out.string() << "\n";
  } else {
    const auto r = apply_edit<float>(op, lookup, model.spec.pooling, gen);
    write_cloud(out / "edit.json", decode_labeled(model, r.global), export_pts);
    std::cout << "wrote " << (out / "edit.json").string() << "\n";
  }
  write_file_atomic(out / "op.json", to_json(op).dump(2));
  write_resolved(out, "edit", c);
}

void cmd_generate(const Config& c) {
  const fs::path out = require(c, "out");
  const Bundle b = load_bundle(require(c, "checkpoint"));
  const auto& model = b.model;
  const std::string head = c.get_string("head", "exchange");
  const auto count = static_cast<std::size_t>(c.get_int("count", 30));
  const auto seed = c.get_uint("seed", 1);
  const bool export_pts = c.get_bool("export_pts", false);
  std::mt19937_64 rng(seed);
  std::vector<PartFeatureSet<float>> latents;
  json groups = json::array();
  if (head == "exchange" || head == "compose") {
    const Dataset ds = load_manifest(require(c, "manifest"));
    const Dataset src = split_or_all(ds, c.get_string("split", "test"));
    const auto sets = encode_dataset(model, src);
    const Index k = model.spec.parts;
    auto donor_with = [&](int part, std::size_t exclude) {
      std::vector<std::size_t> cand;
      for (std::size_t i = 0; i < sets.size(); ++i)
        if (i != exclude && sets[i].has(part)) cand.push_back(i);
      if (cand.empty()) throw EmptyInputError("no source cloud contains part " + std::to_string(part));
      return cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
    };
    if (head == "exchange") {
      const auto inputs = std::min<std::size_t>(static_cast<std::size_t>(c.get_int("inputs", 10)), sets.size());
      const auto parts_per_edit = static_cast<int>(c.get_int("exchange_parts", 1));
      if (inputs < 1 || count % inputs != 0) throw ConfigError("count must be a positive multiple of inputs");
      if (parts_per_edit < 1 || parts_per_edit > k) throw ConfigError("exchange_parts must be in 1..k");
      for (std::size_t i = 0; i < inputs; ++i) {
        json group = json::array();
        for (std::size_t v = 0; v < count / inputs; ++v) {
          std::vector<int> ids(static_cast<std::size_t>(k));
          std::iota(ids.begin(), ids.end(), 1);
          std::shuffle(ids.begin(), ids.end(), rng);
          PartFeatureSet<float> z = sets[i];
          for (int j = 0; j < parts_per_edit; ++j) {
            const int p = ids[static_cast<std::size_t>(j)];
            z = exchange_part(z, sets[donor_with(p, i)], p);
          }
          group.push_back(sample_name(latents.size()));
          latents.push_back(std::move(z));
        }
        groups.push_back(std::move(group));
      }
    } else {
      for (std::size_t s = 0; s < count; ++s) {
        std::vector<std::pair<const PartFeatureSet<float>*, int>> assign;
        for (int p = 1; p <= k; ++p) {
          const std::size_t d = std::uniform_int_distribution<std::size_t>(0, sets.size() - 1)(rng);
          if (sets[d].has(p)) assign.emplace_back(&sets[d], p);
        }
        if (assign.empty()) assign.emplace_back(&sets[donor_with(1, sets.size())], 1);
        latents.push_back(compose(assign));
      }
    }
  } else if (head == "vae") {
    if (!b.vae) throw Error("checkpoint has no VAE head (train one with train-head --head vae)");
    latents = sample_latents(*b.vae, model.spec.parts, count, seed);
  } else if (head == "gan" || head == "wgan") {
    if (!b.gan || to_string(b.gan->config.objective) != head) {
      throw Error("checkpoint has no '" + head + "' head (train one with train-head --head " + head + ")");
    }
    latents = sample_latents(*b.gan, count, seed);
  } else {
    throw ConfigError("head must be exchange, compose, vae, gan or wgan");
  }
  fs::create_directories(out);
  for (std::size_t i = 0; i < latents.size(); ++i) {
    write_cloud(out / sample_name(i), decode_labeled(model, fuse_global(latents[i], model.spec.pooling)), export_pts);
  }
  write_file_atomic(out / "generated.json",
                    json{{"head", head}, {"count", latents.size()}, {"seed", seed}, {"groups", groups}}.dump(2));
  write_resolved(out, "generate", c);
  std::cout << "wrote " << latents.size() << " clouds to " << out.string() << "\n";
}

void cmd_eval(const Config& c) {
  const fs::path gen_dir = require(c, "generated");
  const fs::path out = require(c, "out");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(gen_dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("sample_", 0) == 0 && e.path().extension() == ".json") files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyInputError("no sample_*.json clouds in " + gen_dir.string());
  std::map<std::string, Points> samples;
  std::vector<Points> sample_list;
  for (const auto& f : files) {
    samples[f] = load_cloud_json(gen_dir / f).real_points();
    sample_list.push_back(samples[f]);
  }
  std::set<std::string> metrics;
  {
    std::stringstream ss(c.get_string("metrics", "cd,emd,jsd"));
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (m != "cd" && m != "emd" && m != "jsd" && m != "tmd") throw ConfigError("unknown metric '" + m + "'");
      metrics.insert(m);
    }
  }
  MetricReport report;
  if (metrics.count("cd") || metrics.count("emd") || metrics.count("jsd")) {
    const Dataset ds = load_manifest(require(c, "manifest"));
    const Dataset ref = split_or_all(ds, c.get_string("split", "test"));
    std::vector<Points> reference;
    for (const auto& s : ref.samples) reference.push_back(s.real_points());
    MetricSelection sel;
    sel.cd = metrics.count("cd") > 0;
    sel.emd = metrics.count("emd") > 0;
    sel.jsd = metrics.count("jsd") > 0;
    sel.grid_resolution = static_cast<int>(c.get_int("grid", kDefaultGridResolution));
    report = evaluate_sets(sample_list, reference, sel);
  } else {
    report.sample_size = sample_list.size();
  }
  if (metrics.count("tmd")) {
    const json meta = json::parse(read_file(gen_dir / "generated.json"));
    std::vector<std::vector<Points>> groups;
    for (const auto& g : meta.at("groups")) {
      std::vector<Points> v;
      for (const auto& f : g) v.push_back(samples.at(f.get<std::string>()));
      groups.push_back(std::move(v));
    }
    if (groups.empty()) throw EmptyInputError("tmd needs grouped variants (generate --head exchange)");
    report.tmd = tmd(groups);
  }
  fs::create_directories(out);
  write_file_atomic(out / "report.json", to_json(report).dump(2) + "\n");
  write_file_atomic(out / "report.txt", to_table(report, c.get_string("label", "model")));
  write_resolved(out, "eval", c);
  std::cout << to_table(report, c.get_string("label", "model"));
}

void cmd_serve(const Config& c) {
  const std::string path = require(c, "checkpoint");
  const std::string bytes = read_file(path);
  ServiceOptions opt;
  opt.seed = c.get_uint("seed", 0);
  opt.cache_capacity = static_cast<std::size_t>(c.get_int("cache", 256));
  EditService svc(from_container(deserialize(bytes)), content_hash(bytes), opt);
  httplib::Server server;
  configure_server(server, svc);
  const std::string host = c.get_string("host", "127.0.0.1");
  const int port = static_cast<int>(c.get_int("port", 8080));
  std::cout << "serving " << path << " on http://" << host << ":" << port << std::endl;
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Part-aware point cloud autoencoder toolkit"};
  app.require_subcommand(1);
  std::map<std::string, Flags> flags;
  std::vector<std::string> inputs;

  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    auto& f = flags[name];
    s->add_option("--config", f.config_path, "flat key = value config file; flags override it");
    f.add(s, "--seed", "seed", "random seed (recorded in outputs)");
    f.add(s, "--out", "out", "output directory (or file for reconstruct)");
    return s;
  };

  auto* synth = sub("synth", "write a synthetic labeled dataset and manifest");
  flags["synth"].add(synth, "--spec", "spec", "synthetic shape spec JSON (default: built-in chair)");
  flags["synth"].add(synth, "--count", "count", "number of clouds");
  flags["synth"].add(synth, "--points", "points", "points per cloud");
  flags["synth"].add(synth, "--sampling", "sampling", "stratified|random");
  flags["synth"].add(synth, "--export-pts", "export_pts", "also write .pts/.seg files (true|false)");

  auto* train_cmd = sub("train", "train the autoencoder with its segmentation head");
  auto& tf = flags["train"];
  tf.add(train_cmd, "--manifest", "manifest", "dataset manifest");
  tf.add(train_cmd, "--feature-size", "feature_size", "latent width per part");
  tf.add(train_cmd, "--points", "points", "decoder output points");
  tf.add(train_cmd, "--parts", "parts", "part count (must match the manifest)");
  tf.add(train_cmd, "--metric", "metric", "reconstruction loss: cd|emd");
  tf.add(train_cmd, "--pooling", "pooling", "max|mean");
  tf.add(train_cmd, "--epochs", "epochs", "training epochs");
  tf.add(train_cmd, "--batch-size", "batch_size", "minibatch size");
  tf.add(train_cmd, "--lr", "lr", "Adam learning rate");
  tf.add(train_cmd, "--segmentation", "segmentation", "joint|absent|frozen-random");
  tf.add(train_cmd, "--segmentation-weight", "segmentation_weight", "cross-entropy weight");
  tf.add(train_cmd, "--quiet", "quiet", "suppress per-epoch output (true|false)");

  auto* head_cmd = sub("train-head", "train a VAE, GAN or WGAN head on a trained autoencoder");
  auto& hf = flags["train-head"];
  hf.add(head_cmd, "--checkpoint", "checkpoint", "autoencoder checkpoint");
  hf.add(head_cmd, "--manifest", "manifest", "dataset manifest");
  hf.add(head_cmd, "--head", "head", "vae|gan|wgan");
  hf.add(head_cmd, "--beta", "beta", "VAE KL weight");
  hf.add(head_cmd, "--epochs", "epochs", "VAE epochs");
  hf.add(head_cmd, "--steps", "steps", "GAN generator steps");
  hf.add(head_cmd, "--lr", "lr", "VAE learning rate");

  auto* rec = sub("reconstruct", "encode and decode one cloud");
  flags["reconstruct"].add(rec, "--checkpoint", "checkpoint", "model checkpoint");
  flags["reconstruct"].add(rec, "--input", "input", "cloud (.json or .pts with sibling .seg)");
  flags["reconstruct"].add(rec, "--label-source", "label_source", "given|predicted");

  auto* edit = sub("edit", "apply a latent edit and decode the result");
  flags["edit"].add(edit, "--checkpoint", "checkpoint", "model checkpoint");
  flags["edit"].add(edit, "--op", "op", "edit op JSON (file path or inline)");
  flags["edit"].add(edit, "--steps", "steps", "comma-separated t values for interpolation");
  flags["edit"].add(edit, "--label-source", "label_source", "given|predicted");
  edit->add_option("--input", inputs, "source clouds; referenced by index or file stem")->expected(1, -1);

  auto* gen = sub("generate", "generate clouds by exchange, composition, VAE, GAN or WGAN");
  auto& gf = flags["generate"];
  gf.add(gen, "--checkpoint", "checkpoint", "model or head checkpoint");
  gf.add(gen, "--head", "head", "exchange|compose|vae|gan|wgan");
  gf.add(gen, "--count", "count", "number of clouds");
  gf.add(gen, "--manifest", "manifest", "source clouds for exchange/compose");
  gf.add(gen, "--inputs", "inputs", "exchange: number of input shapes");
  gf.add(gen, "--exchange-parts", "exchange_parts", "exchange: parts replaced per variant");

  auto* ev = sub("eval", "compute MMD, coverage, JSD and TMD");
  auto& ef = flags["eval"];
  ef.add(ev, "--generated", "generated", "directory written by generate");
  ef.add(ev, "--manifest", "manifest", "reference dataset manifest");
  ef.add(ev, "--metrics", "metrics", "comma list of cd,emd,jsd,tmd");
  ef.add(ev, "--grid", "grid", "JSD grid resolution");

  auto* serve = sub("serve", "run the HTTP edit service");
  flags["serve"].add(serve, "--checkpoint", "checkpoint", "model or head checkpoint");
  flags["serve"].add(serve, "--port", "port", "TCP port");
  flags["serve"].add(serve, "--host", "host", "bind address");

  CLI11_PARSE(app, argc, argv);
  try {
    const std::string name = app.get_subcommands().front()->get_name();
    const Config c = flags[name].resolve();
    if (name == "synth") cmd_synth(c);
    if (name == "train") cmd_train(c);
    if (name == "train-head") cmd_train_head(c);
    if (name == "reconstruct") cmd_reconstruct(c);
    if (name == "edit") cmd_edit(c, inputs);
    if (name == "generate") cmd_generate(c);
    if (name == "eval") cmd_eval(c);
    if (name == "serve") cmd_serve(c);
  } catch (const std::exception& e) {
    std::cerr << "lpm: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "trifuse/checkpoint.hpp"
#include "trifuse/data.hpp"
#include "trifuse/metrics.hpp"

namespace trifuse {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (train_data.empty()) throw ValidationError("run config: no training dataset given (--data)");
  for (const auto& p : {train_data, val_data, test_data}) {
    if (!p.empty() && !fs::exists(p)) throw ValidationError("run config: dataset " + p.string() + " does not exist");
  }
  if (train_split.empty()) throw ValidationError("run config: train split name is empty");
}

void to_json(json& j, const RunConfig& c) {
  j = {{"model", c.model},
       {"train", c.train},
       {"data",
        {{"train", c.train_data.string()},
         {"val", c.val_data.string()},
         {"test", c.test_data.string()},
         {"train_split", c.train_split},
         {"val_split", c.val_split},
         {"test_split", c.test_split}}},
       {"output_dir", c.output_dir.string()},
       {"ablation", to_string(c.ablation)}};
}

void from_json(const json& j, RunConfig& c) {
  RunConfig d;
  c.model = j.value("model", d.model);
  c.train = j.value("train", d.train);
  const json data = j.value("data", json::object());
  c.train_data = data.value("train", std::string());
  c.val_data = data.value("val", std::string());
  c.test_data = data.value("test", std::string());
  c.train_split = data.value("train_split", d.train_split);
  c.val_split = data.value("val_split", d.val_split);
  c.test_split = data.value("test_split", d.test_split);
  c.output_dir = j.value("output_dir", d.output_dir.string());
  c.ablation = parse_fusion_mode(j.value("ablation", std::string(to_string(d.ablation))));
}

namespace {

/// Carries an exit code out of a command.
struct Failure {
  int code;
  std::string message;
};

Dataset load_dataset(const fs::path& path) {
  try {
    return load_jsonl(path);
  } catch (const Error& e) {
    throw Failure{kExitUsage, "dataset " + path.string() + ": " + e.what()};
  }
}

CheckpointData load_checkpoint(const fs::path& path) {
  try {
    return read_checkpoint(path);
  } catch (const Error& e) {
    throw Failure{kExitRuntime, e.what()};
  }
}

Model checkpoint_model(const CheckpointData& data) {
  try {
    return model_from_checkpoint(data, "best/");
  } catch (const Error& e) {
    throw Failure{kExitRuntime, e.what()};
  }
}

std::vector<double> parse_number_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure{kExitUsage, std::string(what) + ": \"" + item + "\" is not a number"};
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kExitRuntime, "cannot write " + path.string()};
  out << text;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SynthSpec spec;
  std::string out;
  std::string informativeness = "0.8,0.8,0.8";
  std::string text_mode = "embeddings";
};

int cmd_synth(SynthOptions& o, std::ostream& out) {
  const auto info = parse_number_list(o.informativeness, "--informativeness");
  if (info.size() != 3) throw Failure{kExitUsage, "--informativeness needs three comma-separated values"};
  for (double x : info) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw Failure{kExitUsage, "--informativeness values must lie in [0, 1]; got " + std::to_string(x)};
    }
  }
  o.spec.informativeness = {info[0], info[1], info[2]};
  o.spec.text_mode = parse_text_mode(o.text_mode);
  o.spec.validate();
  const Dataset ds = generate_synthetic(o.spec);
  save_jsonl(ds, o.out);
  const json sidecar = {{"generator", "class-conditional-gaussian"},
                        {"n_samples", o.spec.n_samples},
                        {"d_img", o.spec.d_img},
                        {"d_audio", o.spec.d_audio},
                        {"text_mode", to_string(o.spec.text_mode)},
                        {"d_text", o.spec.d_text},
                        {"vocab_size", o.spec.vocab_size},
                        {"min_len", o.spec.min_len},
                        {"max_len", o.spec.max_len},
                        {"informativeness", o.spec.informativeness},
                        {"separation", o.spec.separation},
                        {"val_fraction", o.spec.val_fraction},
                        {"test_fraction", o.spec.test_fraction},
                        {"seed", o.spec.seed}};
  write_text(o.out + ".spec.json", sidecar.dump(2) + "\n");
  out << json{{"path", o.out}, {"samples", ds.samples().size()}}.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train / ablate shared plumbing

struct RunOverrides {
  std::string config_path;
  std::optional<std::string> data, val_data, test_data, train_split, val_split, test_split, out_dir, mode;
  std::optional<std::size_t> epochs, batch_size, patience, d_model, n_heads, n_layers, d_ff, max_seq_len;
  std::optional<double> lr, grad_clip, sigma, modality_dropout, dropout;
  std::optional<std::uint64_t> seed;
};

void add_run_options(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run config");
  cmd->add_option("--data", o.data, "training dataset (JSONL)");
  cmd->add_option("--val-data", o.val_data, "validation dataset (default: --data)");
  cmd->add_option("--test-data", o.test_data, "test dataset (default: --data)");
  cmd->add_option("--train-split", o.train_split, "training split name");
  cmd->add_option("--val-split", o.val_split, "validation split name");
  cmd->add_option("--test-split", o.test_split, "test split name");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--mode", o.mode, "full|image_only|audio_only|text_only");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--patience", o.patience, "early-stop patience in epochs (0 disables)");
  cmd->add_option("--lr", o.lr);
  cmd->add_option("--grad-clip", o.grad_clip, "global gradient norm clip (0 disables)");
  cmd->add_option("--sigma", o.sigma, "feature-noise std for augmentation");
  cmd->add_option("--modality-dropout", o.modality_dropout, "per-sample modality drop probability");
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--d-model", o.d_model);
  cmd->add_option("--heads", o.n_heads);
  cmd->add_option("--layers", o.n_layers);
  cmd->add_option("--d-ff", o.d_ff);
  cmd->add_option("--dropout", o.dropout);
  cmd->add_option("--max-seq-len", o.max_seq_len);
}

RunConfig resolve_run_config(const RunOverrides& o) {
  RunConfig rc;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw Failure{kExitUsage, "cannot open config " + o.config_path};
    try {
      rc = json::parse(in).get<RunConfig>();
    } catch (const json::exception& e) {
      throw Failure{kExitUsage, "config " + o.config_path + ": " + e.what()};
    }
  }
  if (o.data) rc.train_data = *o.data;
  if (o.val_data) rc.val_data = *o.val_data;
  if (o.test_data) rc.test_data = *o.test_data;
  if (o.train_split) rc.train_split = *o.train_split;
  if (o.val_split) rc.val_split = *o.val_split;
  if (o.test_split) rc.test_split = *o.test_split;
  if (o.out_dir) rc.output_dir = *o.out_dir;
  if (o.mode) rc.ablation = parse_fusion_mode(*o.mode);
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.batch_size) rc.train.batch_size = *o.batch_size;
  if (o.patience) rc.train.early_stop_patience = *o.patience;
  if (o.lr) rc.train.learning_rate = *o.lr;
  if (o.grad_clip) rc.train.grad_clip_norm = *o.grad_clip;
  if (o.sigma) rc.train.augmentation.gaussian_sigma = *o.sigma;
  if (o.modality_dropout) rc.train.augmentation.modality_dropout_p = *o.modality_dropout;
  if (o.seed) rc.train.seed = *o.seed;
  if (o.d_model) rc.model.d_model = *o.d_model;
  if (o.n_heads) rc.model.n_heads = *o.n_heads;
  if (o.n_layers) rc.model.n_layers = *o.n_layers;
  if (o.d_ff) rc.model.d_ff = *o.d_ff;
  if (o.dropout) rc.model.dropout_p = *o.dropout;
  if (o.max_seq_len) rc.model.max_seq_len = *o.max_seq_len;
  return rc;
}

/// Datasets and resolved splits of a run. The model's input dims follow the
/// training dataset's header.
struct RunData {
  Dataset train_ds;
  Dataset val_ds;
  Dataset test_ds;
  std::vector<const MultimodalSample*> train;
  std::vector<const MultimodalSample*> val;
  std::vector<const MultimodalSample*> report;
  std::string report_split;
};

void adopt_header(ModelConfig& config, const DatasetHeader& h) {
  config.d_img = h.d_img;
  config.d_audio = h.d_audio;
  config.text_mode = h.text_mode;
  if (h.text_mode == TextMode::embeddings) {
    config.d_text = h.d_text;
  } else {
    config.vocab_size = h.vocab_size;
    if (h.d_text > 0) config.d_text = h.d_text;
  }
}

RunData load_run_data(RunConfig& rc) {
  RunData d;
  d.train_ds = load_dataset(rc.train_data);
  d.val_ds = rc.val_data.empty() ? d.train_ds : load_dataset(rc.val_data);
  d.test_ds = rc.test_data.empty() ? d.train_ds : load_dataset(rc.test_data);
  adopt_header(rc.model, d.train_ds.header());
  if (!(d.val_ds.header() == d.train_ds.header()) || !(d.test_ds.header() == d.train_ds.header())) {
    throw Failure{kExitUsage, "validation/test dataset headers differ from the training dataset"};
  }
  if (!d.train_ds.has_split(rc.train_split)) {
    throw Failure{kExitUsage, "training dataset has no split \"" + rc.train_split + "\""};
  }
  d.train = d.train_ds.split(rc.train_split);
  if (d.train.empty()) throw Failure{kExitUsage, "training split \"" + rc.train_split + "\" is empty"};
  if (d.val_ds.has_split(rc.val_split)) d.val = d.val_ds.split(rc.val_split);
  if (d.test_ds.has_split(rc.test_split) && !d.test_ds.split(rc.test_split).empty()) {
    d.report = d.test_ds.split(rc.test_split);
    d.report_split = rc.test_split;
  } else if (!d.val.empty()) {
    d.report = d.val;
    d.report_split = rc.val_split;
  } else {
    d.report = d.train;
    d.report_split = rc.train_split;
  }
  for (const auto* set : {&d.train, &d.val, &d.report}) {
    for (const auto* s : *set) {
      try {
        check_compatible(rc.model, *s);
      } catch (const Error& e) {
        throw Failure{kExitUsage, e.what()};
      }
    }
  }
  return d;
}

json report_json(const std::string& split, const EvalReport& r) {
  json j = to_json(r);
  j["split"] = split;
  return j;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const RunOverrides& o, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve_run_config(o);
  rc.validate();
  RunData data = load_run_data(rc);
  rc.model.validate();
  fs::create_directories(rc.output_dir);
  write_text(rc.output_dir / "config.json", json(rc).dump(2) + "\n");

  Rng rng(rc.train.seed);
  Model model = Model::init(rc.model, rc.ablation, rng);
  Trainer trainer(std::move(model), data.train, data.val, rc.train, rng);
  bool diverged = false;
  try {
    while (trainer.run_epoch()) {
    }
  } catch (const NumericError& e) {
    diverged = true;
    err << "training diverged at epoch " << trainer.epoch() + 1 << ": " << e.what() << "\n";
  }
  if (diverged) {
    save_model(rc.output_dir / "model.ckpt", trainer.best_model());
  } else {
    trainer.save_checkpoint(rc.output_dir / "model.ckpt");
  }
  export_epoch_curve(trainer.logs(), rc.output_dir / "curve.csv");
  const EvalReport report = evaluate(trainer.best_model(), data.report, rc.train.batch_size);
  const std::string line = report_json(data.report_split, report).dump();
  write_text(rc.output_dir / "report.json", line + "\n");
  out << line << "\n";
  return diverged ? kExitRuntime : kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::size_t batch_size = 16;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  if (o.split.empty()) throw Failure{kExitUsage, "--split must name a split"};
  if (o.batch_size == 0) throw Failure{kExitUsage, "--batch-size must be >= 1"};
  const Model model = checkpoint_model(load_checkpoint(o.checkpoint));
  const Dataset ds = load_dataset(o.data);
  if (!ds.has_split(o.split)) throw Failure{kExitUsage, "dataset has no split \"" + o.split + "\""};
  const auto samples = ds.split(o.split);
  if (samples.empty()) throw Failure{kExitUsage, "split \"" + o.split + "\" is empty"};
  for (const auto* s : samples) {
    try {
      check_compatible(model.config(), *s);
    } catch (const Error& e) {
      throw Failure{kExitUsage, e.what()};
    }
  }
  out << report_json(o.split, evaluate(model, samples, o.batch_size)).dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string checkpoint;
  std::string sample;
};

int cmd_predict(const PredictOptions& o, std::ostream& out) {
  const Model model = checkpoint_model(load_checkpoint(o.checkpoint));
  std::string text;
  if (o.sample == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    text = buf.str();
  } else {
    std::ifstream in(o.sample);
    if (!in) throw Failure{kExitUsage, "cannot open sample file " + o.sample};
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  // First non-empty line that is not a dataset header.
  std::string line;
  {
    std::istringstream in(text);
    std::string l;
    while (std::getline(in, l)) {
      if (l.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (l.find("\"format\"") != std::string::npos && l.find("trifuse-mmds") != std::string::npos) continue;
      line = l;
      break;
    }
  }
  if (line.empty()) throw Failure{kExitUsage, "no sample line found in " + o.sample};

  const ModelConfig& c = model.config();
  DatasetHeader header;
  header.d_img = c.d_img;
  header.d_audio = c.d_audio;
  header.text_mode = c.text_mode;
  header.d_text = c.d_text;
  header.vocab_size = c.vocab_size;
  MultimodalSample sample;
  try {
    sample = parse_sample_line(line, header);
    check_compatible(c, sample);
  } catch (const Error& e) {
    throw Failure{kExitUsage, std::string("sample does not match the checkpoint: ") + e.what()};
  }
  Tape tape(Tape::Mode::inference);
  Pass pass{tape, false, 0.0, nullptr};
  const ForwardResult r = forward_full(pass, model, sample);
  auto p = r.probs.values();
  nlohmann::ordered_json probs = nlohmann::ordered_json::object();
  std::size_t best = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    probs[std::string(kEmotionNames[k])] = p[k];
    if (p[k] > p[best]) best = k;
  }
  nlohmann::ordered_json result;
  result["label"] = kEmotionNames[best];
  result["probs"] = probs;
  out << result.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOptions {
  RunOverrides run;
  std::string modes = "full,image_only,audio_only,text_only";
  std::string seeds;
  bool json_out = false;
};

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

int cmd_ablate(const AblateOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve_run_config(o.run);
  rc.validate();
  RunData data = load_run_data(rc);
  rc.model.validate();

  std::vector<FusionMode> modes;
  for (const auto& name : split_list(o.modes)) modes.push_back(parse_fusion_mode(name));
  if (modes.empty()) throw Failure{kExitUsage, "--modes names no mode"};
  std::vector<std::uint64_t> seeds;
  if (o.seeds.empty()) {
    seeds.push_back(rc.train.seed);
  } else {
    for (const auto& s : split_list(o.seeds)) {
      try {
        seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw Failure{kExitUsage, "--seeds: \"" + s + "\" is not an unsigned integer"};
      }
    }
  }
  fs::create_directories(rc.output_dir);

  json rows = json::array();
  std::ostringstream table;
  table << "mode          accuracy  weighted_f1  macro_auc  seeds\n";
  bool any_failed = false;
  for (FusionMode mode : modes) {
    json row = {{"mode", to_string(mode)}, {"seeds", seeds}, {"split", data.report_split}};
    json per_seed = json::array();
    double acc = 0.0, f1 = 0.0, auc = 0.0;
    std::size_t auc_n = 0;
    std::string failure;
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = rc.train;
      tc.seed = seed;
      TrainResult result;
      try {
        result = train_from_seed(rc.model, mode, data.train, data.val, tc);
      } catch (const Error& e) {
        failure = e.what();
        break;
      }
      if (result.diverged) {
        failure = result.error;
        break;
      }
      const EvalReport r = evaluate(result.best, data.report, tc.batch_size);
      per_seed.push_back({{"seed", seed},
                          {"accuracy", r.accuracy},
                          {"weighted_f1", r.weighted_f1},
                          {"macro_auc", r.macro_auc ? json(*r.macro_auc) : json(nullptr)}});
      acc += r.accuracy;
      f1 += r.weighted_f1;
      if (r.macro_auc) {
        auc += *r.macro_auc;
        ++auc_n;
      }
    }
    std::string mode_name(to_string(mode));
    mode_name.resize(14, ' ');
    if (!failure.empty()) {
      any_failed = true;
      row["status"] = "failed";
      row["error"] = failure;
      table << mode_name << "failed: " << failure << "\n";
      err << "mode " << to_string(mode) << " failed: " << failure << "\n";
    } else {
      const double n = static_cast<double>(seeds.size());
      row["status"] = "ok";
      row["accuracy"] = acc / n;
      row["weighted_f1"] = f1 / n;
      row["macro_auc"] = auc_n ? json(auc / static_cast<double>(auc_n)) : json(nullptr);
      table << mode_name << fixed3(acc / n) << "     " << fixed3(f1 / n) << "        "
            << (auc_n ? fixed3(auc / static_cast<double>(auc_n)) : std::string("  n/a")) << "      "
            << seeds.size() << "\n";
    }
    row["per_seed"] = per_seed;
    rows.push_back(row);
  }
  table << "\npublished reference (not reproduced; full MELD with pretrained encoders):\n"
        << "  text-only transformer   auc 0.685  f1 0.653\n"
        << "  weighted full fusion    auc 0.817  f1 0.795\n";
  const json doc = {{"rows", rows},
                    {"published_reference",
                     {{"note", "published, not reproduced"},
                      {"rows",
                       {{{"model", "text-only transformer"}, {"auc", 0.685}, {"f1", 0.653}},
                        {{"model", "weighted full fusion"}, {"auc", 0.817}, {"f1", 0.795}}}}}}};
  write_text(rc.output_dir / "ablation.json", doc.dump(2) + "\n");
  write_text(rc.output_dir / "ablation.txt", table.str());
  if (o.json_out) {
    out << doc.dump() << "\n";
  } else {
    out << table.str();
  }
  return any_failed ? kExitRuntime : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"trifuse: three-branch transformer emotion recognition with weighted fusion"};
  app.require_subcommand(1);

  SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
  synth->add_option("--out", synth_opts.out, "output JSONL path")->required();
  synth->add_option("--n", synth_opts.spec.n_samples, "number of samples");
  synth->add_option("--seed", synth_opts.spec.seed);
  synth->add_option("--informativeness", synth_opts.informativeness, "image,audio,text in [0,1]");
  synth->add_option("--d-img", synth_opts.spec.d_img);
  synth->add_option("--d-audio", synth_opts.spec.d_audio);
  synth->add_option("--d-text", synth_opts.spec.d_text);
  synth->add_option("--text-mode", synth_opts.text_mode, "embeddings|tokens");
  synth->add_option("--vocab-size", synth_opts.spec.vocab_size);
  synth->add_option("--min-len", synth_opts.spec.min_len);
  synth->add_option("--max-len", synth_opts.spec.max_len);
  synth->add_option("--separation", synth_opts.spec.separation, "class-mean scale at informativeness 1");
  synth->add_option("--val-fraction", synth_opts.spec.val_fraction);
  synth->add_option("--test-fraction", synth_opts.spec.test_fraction);

  RunOverrides train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes model.ckpt, curve.csv, report.json");
  add_run_options(train_cmd, train_opts);

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint)->required();
  eval_cmd->add_option("--data", eval_opts.data)->required();
  eval_cmd->add_option("--split", eval_opts.split);
  eval_cmd->add_option("--batch-size", eval_opts.batch_size);

  PredictOptions predict_opts;
  auto* predict_cmd = app.add_subcommand("predict", "classify one sample line");
  predict_cmd->add_option("--checkpoint", predict_opts.checkpoint)->required();
  predict_cmd->add_option("--sample", predict_opts.sample, "file holding one sample line, or -")->required();

  AblateOptions ablate_opts;
  auto* ablate_cmd = app.add_subcommand("ablate", "train each fusion mode and tabulate test metrics");
  add_run_options(ablate_cmd, ablate_opts.run);
  ablate_cmd->add_option("--modes", ablate_opts.modes, "comma-separated fusion modes");
  ablate_cmd->add_option("--seeds", ablate_opts.seeds, "comma-separated seeds (default: config seed)");
  ablate_cmd->add_flag("--json", ablate_opts.json_out, "print the JSON table instead of text");

  std::vector<const char*> argv{"trifuse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_opts, out);
    if (*train_cmd) return cmd_train(train_opts, out, err);
    if (*eval_cmd) return cmd_eval(eval_opts, out);
    if (*predict_cmd) return cmd_predict(predict_opts, out);
    if (*ablate_cmd) return cmd_ablate(ablate_opts, out, err);
  } catch (const Failure& f) {
    err << "error: " << f.message << "\n";
    return f.code;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace trifuse

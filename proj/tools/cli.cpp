#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <regex>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dualglob/augment.hpp"
#include "dualglob/checkpoint.hpp"
#include "dualglob/config.hpp"
#include "dualglob/corpus.hpp"
#include "dualglob/error.hpp"
#include "dualglob/kernels.hpp"
#include "dualglob/probe.hpp"
#include "dualglob/report.hpp"
#include "dualglob/trainer.hpp"

namespace dualglob::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 42;
  std::string out;
  int jobs = 1;
  std::string format = "text";
  CLI::Option* seed_opt = nullptr;
};

// Flags that mirror TrainConfig fields; a flag given on the command line
// overrides the config file.
class TrainFlags {
 public:
  void attach(CLI::App* app) {
    add(app, "--objective", objective_, "dualglob|globclean|globaugment|crossview|unified|predc|preda|hybrid",
        [this](TrainConfig& c) { c.objective.kind = parse_objective(objective_); });
    add(app, "--tau", tau_, "temperature", [this](TrainConfig& c) { c.objective.tau = tau_; });
    add(app, "--lambda1", lambda1_, "clean-loss weight", [this](TrainConfig& c) { c.objective.lambda1 = lambda1_; });
    add(app, "--lambda2", lambda2_, "augmented-loss weight", [this](TrainConfig& c) { c.objective.lambda2 = lambda2_; });
    add(app, "--strategy", strategy_, "augmentation selection strategy D1..D6",
        [this](TrainConfig& c) { c.strategy = SelectionStrategy::parse(strategy_); });
    add(app, "--jitter-sd", jitter_sd_, "", [this](TrainConfig& c) { c.params.jitter_sd = jitter_sd_; });
    add(app, "--scale-min", scale_min_, "", [this](TrainConfig& c) { c.params.scale_range.first = scale_min_; });
    add(app, "--scale-max", scale_max_, "", [this](TrainConfig& c) { c.params.scale_range.second = scale_max_; });
    add(app, "--mask-ratio", mask_ratio_, "", [this](TrainConfig& c) { c.params.mask_ratio = mask_ratio_; });
    add(app, "--shift-min", shift_min_, "", [this](TrainConfig& c) { c.params.shift_range.first = shift_min_; });
    add(app, "--shift-max", shift_max_, "", [this](TrainConfig& c) { c.params.shift_range.second = shift_max_; });
    add(app, "--warp-knots", warp_knots_, "", [this](TrainConfig& c) { c.params.warp_knots = warp_knots_; });
    add(app, "--warp-sd", warp_sd_, "", [this](TrainConfig& c) { c.params.warp_sd = warp_sd_; });
    add(app, "--demb", d_emb_, "embedding size 64|128|256|512|1024", [this](TrainConfig& c) { c.d_emb = d_emb_; });
    add(app, "--lr", lr_, "", [this](TrainConfig& c) { c.lr = lr_; });
    add(app, "--weight-decay", weight_decay_, "", [this](TrainConfig& c) { c.weight_decay = weight_decay_; });
    add(app, "--batch-size", batch_size_, "", [this](TrainConfig& c) { c.batch_size = batch_size_; });
    add(app, "--epochs", epochs_, "", [this](TrainConfig& c) { c.epochs = epochs_; });
    add(app, "--folds", folds_, "", [this](TrainConfig& c) { c.folds = folds_; });
    add(app, "--fold-seed", fold_seed_, "", [this](TrainConfig& c) { c.fold_seed = fold_seed_; });
    add(app, "--keep-last", keep_last_, "trailing epoch checkpoints kept per fold",
        [this](TrainConfig& c) { c.keep_last = keep_last_; });
    add(app, "--precision", precision_, "f32|f64", [this](TrainConfig& c) { c.precision = parse_precision(precision_); });
    setters_.push_back({app->add_flag("--no-duplication", no_dup_, "do not concatenate each batch with itself"),
                        [](TrainConfig& c) { c.batch_duplication = false; }});
    setters_.push_back({app->add_flag("--log-shift", log_shift_, "apply magnitude shift in log space"),
                        [](TrainConfig& c) { c.params.shift_in_log_space = true; }});
  }

  void apply(TrainConfig& c) const {
    for (const auto& [opt, set] : setters_)
      if (opt->count()) set(c);
  }

 private:
  template <typename V>
  void add(CLI::App* app, const std::string& name, V& storage, const std::string& desc,
           std::function<void(TrainConfig&)> set) {
    setters_.push_back({app->add_option(name, storage, desc), std::move(set)});
  }

  std::string objective_, strategy_, precision_;
  double tau_ = 0, lambda1_ = 0, lambda2_ = 0, jitter_sd_ = 0, scale_min_ = 0, scale_max_ = 0, mask_ratio_ = 0,
         shift_min_ = 0, shift_max_ = 0, warp_sd_ = 0, lr_ = 0, weight_decay_ = 0;
  int warp_knots_ = 0, epochs_ = 0, folds_ = 0, keep_last_ = 0;
  std::size_t d_emb_ = 0, batch_size_ = 0;
  std::uint64_t fold_seed_ = 0;
  bool no_dup_ = false, log_shift_ = false;
  std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> setters_;
};

class ProbeFlags {
 public:
  void attach(CLI::App* app) {
    l2_opt_ = app->add_option("--l2", l2_, "probe L2 strength");
    iters_opt_ = app->add_option("--probe-iters", iters_, "probe iteration cap");
    tol_opt_ = app->add_option("--probe-tol", tol_, "probe gradient-norm tolerance");
    app->add_flag("--no-standardize", no_std_, "fit the probe on raw features");
    app->add_flag("--fuse-syllable", fuse_, "append the syllable-count one-hot to the features");
    app->add_flag("--last-only", last_only_, "score only the final checkpoint of each fold");
  }
  void apply(ProbeConfig& p) const {
    if (l2_opt_->count()) p.l2_strength = l2_;
    if (iters_opt_->count()) p.max_iters = iters_;
    if (tol_opt_->count()) p.tol = tol_;
    if (no_std_) p.standardize = false;
  }
  CrossValOptions options() const { return {fuse_, !last_only_}; }

 private:
  double l2_ = 0, tol_ = 0;
  int iters_ = 0;
  bool no_std_ = false, fuse_ = false, last_only_ = false;
  CLI::Option *l2_opt_ = nullptr, *iters_opt_ = nullptr, *tol_opt_ = nullptr;
};

ProbeConfig probe_from_json(const json& j) {
  ProbeConfig p;
  if (!j.is_object()) throw ConfigError("probe config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "l2_strength") p.l2_strength = it->get<double>();
    else if (k == "max_iters") p.max_iters = it->get<int>();
    else if (k == "tol") p.tol = it->get<double>();
    else if (k == "seed") p.seed = it->get<std::uint64_t>();
    else if (k == "standardize") p.standardize = it->get<bool>();
    else throw ConfigError("unknown probe config key '" + k + "'");
  }
  p.validate();
  return p;
}

json probe_to_json(const ProbeConfig& p) {
  return json{{"l2_strength", p.l2_strength}, {"max_iters", p.max_iters}, {"tol", p.tol},
              {"seed", p.seed}, {"standardize", p.standardize}};
}

// Config file: either bare TrainConfig keys or {"train": {...}, "probe": {...}};
// a run directory's config.json (which adds "config_hash") is accepted too.
void resolve(const Common& common, const TrainFlags* train_flags, const ProbeFlags* probe_flags,
             TrainConfig& train, ProbeConfig& probe) {
  json train_json = json::object();
  if (!common.config.empty()) {
    const json j = read_json_file(common.config);
    if (!j.is_object()) throw ConfigError(common.config + ": expected a JSON object");
    if (j.contains("train") || j.contains("probe")) {
      for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "train" && it.key() != "probe" && it.key() != "config_hash")
          throw ConfigError(common.config + ": unknown section '" + it.key() + "'");
      if (j.contains("train")) train_json = j.at("train");
      if (j.contains("probe")) probe = probe_from_json(j.at("probe"));
    } else {
      train_json = j;
    }
  }
  train = train_config_from_json(train_json);
  if (train_flags) train_flags->apply(train);
  if (common.seed_opt && common.seed_opt->count()) {
    train.seed = common.seed;
    probe.seed = common.seed;
  }
  if (probe_flags) probe_flags->apply(probe);
  train.validate();
  probe.validate();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
}

Dataset load_input(const std::string& path, std::ostream& err) {
  if (path.empty()) throw ConfigError("--input is required");
  Dataset d = load_dataset(path);
  if (!fs::exists(mask_path_for(path))) d = normalize_speaker(std::move(d));
  for (const auto& w : d.warnings) fmt::print(err, "warning: {}\n", w);
  return d;
}

FoldAssignment folds_for(const Dataset& d, const TrainConfig& c, std::ostream& err) {
  auto folds = stratified_folds(d, c.folds, c.fold_seed);
  for (const auto& w : folds.warnings) fmt::print(err, "warning: {}\n", w);
  return folds;
}

std::vector<std::vector<EncoderCheckpoint>> train_all(const Dataset& d, const FoldAssignment& folds,
                                                      const TrainConfig& c, std::ostream& err,
                                                      std::vector<std::vector<double>>* histories = nullptr,
                                                      const fs::path& diagnostics = {}) {
  std::vector<std::vector<EncoderCheckpoint>> out;
  TrainHooks hooks;
  hooks.diagnostic_dir = diagnostics;
  hooks.on_epoch = [&](int f, int e, double loss) {
    fmt::print(err, "[{}] fold {} epoch {} loss {:.6f}\n", objective_key(c.objective.kind), f, e, loss);
  };
  for (int f = 0; f < folds.k; ++f) {
    auto run = train_fold(d, folds, f, c, hooks);
    if (histories) histories->push_back(run.loss_history);
    out.push_back(std::move(run.retained));
  }
  return out;
}

std::string emit_metrics(const MetricsReport& r, const std::string& method, const std::string& hash,
                         ReportFormat fmt_kind) {
  switch (fmt_kind) {
    case ReportFormat::text:
      return results_table({{method, r, hash}}, "") + "\n" + class_report_table(r);
    case ReportFormat::csv: return results_csv({{method, r, hash}});
    case ReportFormat::json: {
      json j = report_json(r);
      j["method"] = method;
      j["config_hash"] = hash;
      return j.dump(2) + "\n";
    }
  }
  return {};
}

// -- subcommands -----------------------------------------------------------

struct SynthArgs {
  int per_class = 100;
  std::string span_mode = "proportional";
  double jitter = 0.02;
  double dropout = 0.05;
  double duration_jitter = 0.3;
  std::vector<std::string> labels;
};

int cmd_synth(const Common& common, const SynthArgs& a, std::ostream& out) {
  SynthSpec s;
  s.per_class = a.per_class;
  s.target_jitter_sd = a.jitter;
  s.unvoiced_dropout = a.dropout;
  s.duration_jitter = a.duration_jitter;
  if (a.span_mode == "fixed") s.span_mode = SpanMode::fixed;
  else if (a.span_mode != "proportional") throw ConfigError("--span-mode must be proportional or fixed");
  for (const auto& l : a.labels) s.labels.push_back(parse_tone(l));
  s.validate();
  if (common.out.empty()) throw ConfigError("synth needs --out FILE");
  const Dataset d = synth_generate(s, common.seed);
  json manifest{{"per_class", s.per_class}, {"span_mode", a.span_mode}, {"jitter", s.target_jitter_sd},
                {"dropout", s.unvoiced_dropout}, {"duration_jitter", s.duration_jitter}, {"seed", common.seed},
                {"labels", a.labels}};
  const std::string hash = hex64(fnv1a64(manifest.dump()));
  write_dataset(d, common.out, false, "config_hash=" + hash);
  fmt::print(out, "wrote {} samples to {}\n", d.size(), common.out);
  return 0;
}

int cmd_ingest(const Common& common, const std::string& input, const TrainConfig& c, std::ostream& out,
               std::ostream& err) {
  if (common.out.empty()) throw ConfigError("ingest needs --out DIR");
  Dataset d = load_input(input, err);
  const fs::path dir = common.out;
  fs::create_directories(dir);
  const std::string hash = config_hash(c);
  write_dataset(d, dir / "normalized.csv", true, "config_hash=" + hash);
  const auto folds = folds_for(d, c, err);
  std::string f = hash_comment(hash) + "index,fold\n";
  for (std::size_t i = 0; i < folds.fold_of.size(); ++i) f += fmt::format("{},{}\n", i, folds.fold_of[i]);
  write_file(dir / "folds.csv", f);
  json stats = json::object();
  for (const auto& [id, r] : load_dataset(input).speaker_stats)
    stats[id] = {{"min_hz", r.min_hz}, {"max_hz", r.max_hz}, {"voiced_frames", r.voiced_frames}};
  write_file(dir / "speakers.json", json{{"config_hash", hash}, {"speakers", stats}}.dump(2) + "\n");
  fmt::print(out, "ingested {} samples from {} speakers into {}\n", d.size(), stats.size(), dir.string());
  return 0;
}

int cmd_augment_preview(const Common& common, const std::string& input, const TrainConfig& c, int rows,
                        std::ostream& out, std::ostream& err) {
  const Dataset d = load_input(input, err);
  const std::string hash = config_hash(c);
  std::string csv = hash_comment(hash) + "sample,view,transforms";
  for (std::size_t t = 0; t < d.samples.front().contour.size(); ++t) csv += ",f0_" + std::to_string(t);
  csv += "\n";
  auto row = [&](std::size_t i, const char* view, const std::string& transforms, const F0Contour& x) {
    csv += fmt::format("{},{},{}", i, view, transforms);
    for (std::size_t t = 0; t < x.size(); ++t) csv += x.voiced(t) ? fmt::format(",{:.6f}", x.values[t]) : ",";
    csv += "\n";
  };
  const std::size_t n = std::min<std::size_t>(d.size(), static_cast<std::size_t>(std::max(rows, 0)));
  const std::uint64_t seed = derive_seed(c.seed, Stream::augment);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Transform> applied;
    const auto aug = compose(d.samples[i].contour, c.strategy, c.params, derive_seed(seed, i), &applied);
    std::string names;
    for (auto t : applied) names += (names.empty() ? "" : "+") + std::string(to_string(t));
    row(i, "before", "", d.samples[i].contour);
    row(i, "after", names, aug);
  }
  if (common.out.empty()) out << csv;
  else write_file(common.out, csv);
  return 0;
}

int cmd_train(const Common& common, const std::string& input, const TrainConfig& c, int only_fold,
              std::ostream& out, std::ostream& err) {
  if (common.out.empty()) throw ConfigError("train needs --out DIR");
  const Dataset d = load_input(input, err);
  const auto folds = folds_for(d, c, err);
  const fs::path dir = common.out;
  fs::create_directories(dir);
  const std::string hash = config_hash(c);
  write_file(dir / "config.json", json{{"train", to_json(c)}, {"config_hash", hash}}.dump(2) + "\n");
  TrainHooks hooks;
  hooks.diagnostic_dir = dir;
  hooks.on_epoch = [&](int f, int e, double loss) { fmt::print(err, "fold {} epoch {} loss {:.6f}\n", f, e, loss); };
  for (int f = 0; f < folds.k; ++f) {
    if (only_fold >= 0 && f != only_fold) continue;
    const auto run = train_fold(d, folds, f, c, hooks);
    std::string loss = hash_comment(hash) + "epoch,loss\n";
    for (std::size_t e = 0; e < run.loss_history.size(); ++e) loss += fmt::format("{},{:.9g}\n", e + 1, run.loss_history[e]);
    write_file(dir / fmt::format("fold{}_loss.csv", f), loss);
    for (const auto& ck : run.retained)
      save_checkpoint(ck, dir / fmt::format("fold{}_epoch{}.ckpt", f, ck.epoch));
    fmt::print(out, "fold {}: {} epochs, final loss {}, {} checkpoints\n", f, run.loss_history.size(),
               run.loss_history.empty() ? std::string("n/a") : fmt::format("{:.6f}", run.loss_history.back()),
               run.retained.size());
  }
  return 0;
}

int cmd_features(const Common& common, const std::string& input, const std::string& checkpoint, bool fuse,
                 bool force, const std::string& expected_hash, std::ostream& out, std::ostream& err) {
  const auto ck = load_checkpoint(checkpoint, expected_hash, force);
  const Dataset d = load_input(input, err);
  FeatureMatrix x = extract_features(ck, d.samples);
  if (fuse) x = fuse_syllable(x, d.syllable_counts());
  std::string csv = hash_comment(ck.config_hash) + "label";
  for (Eigen::Index c = 0; c < x.cols(); ++c) csv += ",z_" + std::to_string(c);
  csv += "\n";
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    csv += std::string(to_string(d.samples[static_cast<std::size_t>(r)].label));
    for (Eigen::Index c = 0; c < x.cols(); ++c) csv += fmt::format(",{:.9g}", x(r, c));
    csv += "\n";
  }
  if (common.out.empty()) out << csv;
  else write_file(common.out, csv);
  return 0;
}

std::vector<std::vector<EncoderCheckpoint>> load_run(const fs::path& dir, int k, const std::string& hash,
                                                     bool force) {
  std::vector<std::vector<std::pair<int, fs::path>>> found(static_cast<std::size_t>(k));
  const std::regex name(R"(fold(\d+)_epoch(\d+)\.ckpt)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (!std::regex_match(file, m, name)) continue;
    const int f = std::stoi(m[1]);
    if (f < 0 || f >= k) continue;
    found[static_cast<std::size_t>(f)].push_back({std::stoi(m[2]), entry.path()});
  }
  std::vector<std::vector<EncoderCheckpoint>> out(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& list = found[static_cast<std::size_t>(f)];
    if (list.empty()) throw ProtocolError("no checkpoint for fold " + std::to_string(f) + " in " + dir.string());
    std::sort(list.begin(), list.end());
    for (const auto& [epoch, path] : list) out[static_cast<std::size_t>(f)].push_back(load_checkpoint(path, hash, force));
  }
  return out;
}

TrainConfig run_config(const fs::path& dir) {
  const json j = read_json_file(dir / "config.json");
  return train_config_from_json(j.at("train"));
}

int cmd_probe(const Common& common, const std::string& input, const std::string& run_dir, const ProbeConfig& pc,
              const CrossValOptions& opts, bool subgroups, bool force, const std::string& expected_hash,
              std::ostream& out, std::ostream& err) {
  if (run_dir.empty()) throw ConfigError("probe needs --checkpoints DIR");
  const TrainConfig c = run_config(run_dir);
  const std::string hash = config_hash(c);
  if (!expected_hash.empty() && expected_hash != hash && !force)
    throw ConfigError("run in " + run_dir + " has config " + hash + ", current config is " + expected_hash +
                      " (use --force to override)");
  const Dataset d = load_input(input, err);
  const auto folds = folds_for(d, c, err);
  const auto cks = load_run(run_dir, folds.k, hash, force);
  const auto fmt_kind = parse_report_format(common.format);
  const std::string method(objective_title(c.objective.kind));

  if (subgroups) {
    SubgroupInputs in;
    in.dataset = &d;
    in.folds = &folds;
    in.unified = &cks;
    const auto reports = subgroup_protocols(in, pc, opts);
    std::string text;
    if (fmt_kind == ReportFormat::text) text = subgroup_table(reports);
    else if (fmt_kind == ReportFormat::csv) text = subgroup_csv(reports, hash);
    else text = json{{"config_hash", hash}, {"subgroups", subgroup_json(reports)}}.dump(2) + "\n";
    out << text;
    if (!common.out.empty()) {
      write_file(fs::path(common.out) / "subgroups.csv", subgroup_csv(reports, hash));
      write_file(fs::path(common.out) / "subgroups.json",
                 json{{"config_hash", hash}, {"subgroups", subgroup_json(reports)}}.dump(2) + "\n");
    }
    return 0;
  }

  const auto report = crossval_probe(d, cks, folds, pc, opts);
  out << emit_metrics(report, method, hash, fmt_kind);
  if (!common.out.empty()) {
    const fs::path dir = common.out;
    json j = report_json(report);
    j["method"] = method;
    j["config_hash"] = hash;
    j["probe"] = probe_to_json(pc);
    j["fuse_syllable"] = opts.fuse_syllables;
    write_file(dir / "metrics.json", j.dump(2) + "\n");
    write_file(dir / "metrics.csv", results_csv({{method, report, hash}}));
    write_file(dir / "class_report.csv", class_report_csv(report, hash));
    write_file(dir / "confusion.csv", confusion_csv(report, hash));
  }
  return 0;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.accuracy_folds = {j.at("accuracy_folds").at("mean").get<double>(), j.at("accuracy_folds").at("sd").get<double>()};
  r.macro_f1_folds = {j.at("macro_f1_folds").at("mean").get<double>(), j.at("macro_f1_folds").at("sd").get<double>()};
  r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
  r.fold_macro_f1 = j.at("fold_macro_f1").get<std::vector<double>>();
  r.macro_classes = j.at("macro_classes").get<std::vector<int>>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  for (const auto& c : j.at("per_class"))
    r.per_class.push_back({parse_tone(c.at("label").get<std::string>()), c.at("precision").get<double>(),
                           c.at("recall").get<double>(), c.at("f1").get<double>(), c.at("support").get<std::size_t>()});
  return r;
}

int cmd_report(const Common& common, const std::vector<std::string>& metrics, const std::string& table,
               std::ostream& out) {
  if (metrics.empty()) throw ConfigError("report needs --metrics FILE[,FILE...]");
  std::vector<ResultRow> rows;
  for (const auto& path : metrics) {
    const json j = read_json_file(path);
    try {
      rows.push_back({j.value("method", path), report_from_json(j), j.value("config_hash", std::string())});
    } catch (const json::exception& e) {
      throw InputError(path + ": not a metrics file: " + e.what());
    }
  }
  const auto fmt_kind = parse_report_format(common.format);
  std::string text;
  if (table == "results") {
    if (fmt_kind == ReportFormat::text) text = results_table(rows, "");
    else if (fmt_kind == ReportFormat::csv) text = results_csv(rows);
    else text = results_json(rows).dump(2) + "\n";
  } else if (table == "classes") {
    for (const auto& r : rows) {
      if (fmt_kind == ReportFormat::text) text += r.method + "\n" + class_report_table(r.report);
      else if (fmt_kind == ReportFormat::csv) text += class_report_csv(r.report, r.config_hash);
      else text += report_json(r.report).dump(2) + "\n";
    }
  } else if (table == "confusion") {
    for (const auto& r : rows) text += confusion_csv(r.report, r.config_hash);
  } else {
    throw ConfigError("--table must be results, classes or confusion");
  }
  if (common.out.empty()) out << text;
  else write_file(common.out, text);
  return 0;
}

struct SweepArgs {
  std::vector<std::string> objectives{"dualglob"};
  std::vector<std::string> strategies;
  std::string input;
  SynthArgs synth;
  bool gender = false;
};

int cmd_sweep(const Common& common, const SweepArgs& a, const TrainConfig& base, const ProbeConfig& pc,
              const CrossValOptions& opts, std::ostream& out, std::ostream& err) {
  Dataset d;
  if (!a.input.empty()) {
    d = load_input(a.input, err);
  } else {
    SynthSpec s;
    s.per_class = a.synth.per_class;
    s.target_jitter_sd = a.synth.jitter;
    s.unvoiced_dropout = a.synth.dropout;
    s.duration_jitter = a.synth.duration_jitter;
    if (a.synth.span_mode == "fixed") s.span_mode = SpanMode::fixed;
    s.validate();
    d = normalize_speaker(synth_generate(s, base.seed));
  }
  const auto folds = folds_for(d, base, err);
  const auto strategies = a.strategies.empty() ? std::vector<std::string>{base.strategy.name()} : a.strategies;
  std::vector<ResultRow> rows;
  std::vector<SubgroupReport> subgroup;
  for (const auto& strategy : strategies) {
    for (const auto& objective : a.objectives) {
      TrainConfig c = base;
      c.objective.kind = parse_objective(objective);
      c.strategy = SelectionStrategy::parse(strategy);
      c.validate();
      const auto cks = train_all(d, folds, c, err);
      std::string method(objective_title(c.objective.kind));
      if (strategies.size() > 1) method = c.strategy.name() + " " + method;
      rows.push_back({method, crossval_probe(d, cks, folds, pc, opts), config_hash(c)});
      if (a.gender && subgroup.empty()) {
        SubgroupInputs in;
        in.dataset = &d;
        in.folds = &folds;
        in.unified = &cks;
        in.train_gender = [&](const Dataset& part, const FoldAssignment& part_folds) {
          return train_all(part, part_folds, c, err);
        };
        subgroup = subgroup_protocols(in, pc, opts);
      }
    }
  }
  const auto fmt_kind = parse_report_format(common.format);
  if (fmt_kind == ReportFormat::text) {
    out << results_table(rows, fmt::format("{}-fold cross-validation on frozen features (LR probe)", folds.k));
    if (!subgroup.empty()) out << "\n" << subgroup_table(subgroup);
  } else if (fmt_kind == ReportFormat::csv) {
    out << results_csv(rows);
    if (!subgroup.empty()) out << subgroup_csv(subgroup, rows.front().config_hash);
  } else {
    json j{{"results", results_json(rows)}};
    if (!subgroup.empty()) j["subgroups"] = subgroup_json(subgroup);
    out << j.dump(2) << "\n";
  }
  if (!common.out.empty()) {
    const fs::path dir = common.out;
    write_file(dir / "sweep.csv", results_csv(rows));
    json j{{"results", results_json(rows)}};
    if (!subgroup.empty()) j["subgroups"] = subgroup_json(subgroup);
    write_file(dir / "sweep.json", j.dump(2) + "\n");
    for (std::size_t i = 0; i < rows.size(); ++i)
      write_file(dir / fmt::format("confusion_{}.csv", i), confusion_csv(rows[i].report, rows[i].config_hash));
  }
  return 0;
}

void add_common(CLI::App& app, Common& common) {
  app.add_option("--config", common.config, "experiment config JSON");
  common.seed_opt = app.add_option("--seed", common.seed, "experiment seed");
  app.add_option("--out", common.out, "output file or directory");
  app.add_option("--jobs", common.jobs, "worker threads for the kernels")->check(CLI::PositiveNumber);
  app.add_option("--format", common.format, "report format")->check(CLI::IsMember({"text", "csv", "json"}));
}

void add_synth_flags(CLI::App* app, SynthArgs& a) {
  app->add_option("--per-class", a.per_class, "samples per tone class");
  app->add_option("--span-mode", a.span_mode, "proportional|fixed")->check(CLI::IsMember({"proportional", "fixed"}));
  app->add_option("--target-jitter", a.jitter, "sd of tone-target noise");
  app->add_option("--dropout", a.dropout, "unvoiced-frame dropout probability");
  app->add_option("--duration-jitter", a.duration_jitter, "relative duration noise");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-view supervised-contrastive encoder for F0 contours", "dualglob"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  add_common(app, common);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate schematic contours");
  add_synth_flags(synth, synth_args);
  synth->add_option("--labels", synth_args.labels, "restrict to these classes")->delimiter(',');

  std::string input, checkpoint, checkpoints, table = "results";
  std::vector<std::string> metrics;
  int rows = 8, fold = -1;
  bool force = false, fuse_features = false;

  TrainFlags ingest_flags, preview_flags, train_flags, features_flags, probe_train_flags, sweep_flags;
  ProbeFlags probe_flags, sweep_probe_flags;

  auto* ingest = app.add_subcommand("ingest", "normalize a contour CSV and assign folds");
  ingest->add_option("--input", input, "contour CSV")->required();
  ingest_flags.attach(ingest);

  auto* preview = app.add_subcommand("augment-preview", "before/after CSV of augmented views");
  preview->add_option("--input", input, "contour CSV")->required();
  preview->add_option("--rows", rows, "number of samples to preview");
  preview_flags.attach(preview);

  auto* train = app.add_subcommand("train", "train one encoder per fold");
  train->add_option("--input", input, "contour CSV")->required();
  train->add_option("--fold", fold, "train only this fold");
  train_flags.attach(train);

  auto* features = app.add_subcommand("features", "frozen encoder features as CSV");
  features->add_option("--input", input, "contour CSV")->required();
  features->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  features->add_flag("--fuse-syllable", fuse_features, "append the syllable-count one-hot");
  features->add_flag("--force", force, "accept a config-hash mismatch");
  features_flags.attach(features);

  auto* probe = app.add_subcommand("probe", "cross-validated linear probe over a training run");
  probe->add_option("--input", input, "contour CSV")->required();
  probe->add_option("--checkpoints", checkpoints, "directory written by train")->required();
  probe->add_flag("--force", force, "accept a config-hash mismatch");
  auto* subgroups_flag = probe->add_flag("--subgroups", "score male and female test subsets separately");
  probe_flags.attach(probe);
  probe_train_flags.attach(probe);

  auto* report = app.add_subcommand("report", "render saved metrics");
  report->add_option("--metrics", metrics, "metrics.json files")->required()->delimiter(',');
  report->add_option("--table", table, "results|classes|confusion");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "train and probe several objectives or strategies");
  sweep->add_option("--objectives", sweep_args.objectives, "comma-separated objectives")->delimiter(',');
  sweep->add_option("--strategies", sweep_args.strategies, "comma-separated strategies")->delimiter(',');
  sweep->add_option("--input", sweep_args.input, "contour CSV (default: synthetic data)");
  sweep->add_flag("--gender-analysis", sweep_args.gender, "also run unified and gender-specific protocols");
  add_synth_flags(sweep, sweep_args.synth);
  sweep_flags.attach(sweep);
  sweep_probe_flags.attach(sweep);

  std::vector<std::string> owned{"dualglob"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : owned) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    kernels::set_num_threads(common.jobs);
    TrainConfig tc;
    ProbeConfig pc;
    if (*synth) return cmd_synth(common, synth_args, out);
    if (*ingest) {
      resolve(common, &ingest_flags, nullptr, tc, pc);
      return cmd_ingest(common, input, tc, out, err);
    }
    if (*preview) {
      resolve(common, &preview_flags, nullptr, tc, pc);
      return cmd_augment_preview(common, input, tc, rows, out, err);
    }
    if (*train) {
      resolve(common, &train_flags, nullptr, tc, pc);
      return cmd_train(common, input, tc, fold, out, err);
    }
    if (*features) {
      std::string expected;
      if (!common.config.empty()) {
        resolve(common, &features_flags, nullptr, tc, pc);
        expected = config_hash(tc);
      }
      return cmd_features(common, input, checkpoint, fuse_features, force, expected, out, err);
    }
    if (*probe) {
      resolve(common, &probe_train_flags, &probe_flags, tc, pc);
      const std::string expected = common.config.empty() ? std::string() : config_hash(tc);
      return cmd_probe(common, input, checkpoints, pc, probe_flags.options(), subgroups_flag->count() > 0, force,
                       expected, out, err);
    }
    if (*report) return cmd_report(common, metrics, table, out);
    if (*sweep) {
      resolve(common, &sweep_flags, &sweep_probe_flags, tc, pc);
      return cmd_sweep(common, sweep_args, tc, pc, sweep_probe_flags.options(), out, err);
    }
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace dualglob::cli

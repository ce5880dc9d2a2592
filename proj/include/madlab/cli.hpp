#pragma once

// Command-line surface: generate, train, eval, compare.
//
// Exit codes: 0 success, 1 usage/IO/config error, 2 schema violation,
// 3 numeric abort, 4 checkpoint missing or config hash mismatch,
// 5 fewer than two replicates to compare.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "madlab/config.hpp"
#include "madlab/data.hpp"
#include "madlab/errors.hpp"
#include "madlab/eval.hpp"
#include "madlab/log.hpp"
#include "madlab/report.hpp"
#include "madlab/trainer.hpp"

namespace madlab::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kSchema = 2,
  kNumeric = 3,
  kCheckpoint = 4,
  kTooFewReplicates = 5,
};

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> overrides;
  std::optional<std::size_t> replicates;
};

struct GenerateArgs {
  CommonArgs common;
};

struct TrainArgs {
  CommonArgs common;
  std::string data_dir;  // empty: each replicate generates its own data
  std::string labeled_ratios;
  std::string resume;
};

struct EvalArgs {
  CommonArgs common;
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
  std::string embedding = "mad";
};

struct CompareArgs {
  std::string a;
  std::string b;
  std::string split = "test";
  std::string out;
};

// Defaults, then the config file, then --set overrides, then --seed/--replicates.
inline ExperimentConfig resolve_config(const CommonArgs& a) {
  ExperimentConfig c = a.config_path.empty() ? ExperimentConfig{} : load_config(a.config_path);
  for (const auto& o : a.overrides) apply_override(c, o);
  if (a.seed) c.run.seed = *a.seed;
  if (a.replicates) c.run.replicates = *a.replicates;
  validate(c);
  return c;
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw std::runtime_error("cannot create directory " + p.string());
}

inline void write_splits(const SplitData& d, const fs::path& dir) {
  ensure_dir(dir);
  write_csv(d.train, (dir / "train.csv").string());
  write_csv(d.validation, (dir / "val.csv").string());
  write_csv(d.test, (dir / "test.csv").string());
}

inline SplitData read_splits(const fs::path& dir) {
  for (const char* name : {"train.csv", "val.csv", "test.csv"}) {
    if (!fs::exists(dir / name)) throw std::runtime_error("missing data file " + (dir / name).string());
  }
  SplitData d;
  d.train = read_csv((dir / "train.csv").string(), Split::Train);
  d.validation = read_csv((dir / "val.csv").string(), Split::Validation);
  d.test = read_csv((dir / "test.csv").string(), Split::Test);
  if (d.validation.dim != d.train.dim || d.test.dim != d.train.dim) {
    throw SchemaError("splits in " + dir.string() + " disagree on feature dimension");
  }
  return d;
}

// Maps an exception escaping a subcommand onto the exit-code contract.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

// ---------------------------------------------------------------------------

inline int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const ExperimentConfig c = resolve_config(a.common);
    const SplitData d = generate_synthetic(replicate_data_config(c, c.run.seed));
    write_splits(d, a.common.out);
    out << "wrote " << d.train.size() << '/' << d.validation.size() << '/' << d.test.size()
        << " rows to " << a.common.out << '\n';
    return kOk;
  });
}

namespace detail {

inline std::string replicate_dir(const fs::path& out, std::size_t r) { return (out / ("replicate_" + std::to_string(r))).string(); }

inline std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.ckpt", epoch);
  return buf;
}

inline ExperimentHooks train_hooks(const ExperimentConfig& c, const fs::path& out, bool write_data) {
  ExperimentHooks h;
  if (write_data) {
    h.on_data = [out](std::size_t r, const SplitData& d) { write_splits(d, fs::path(replicate_dir(out, r)) / "data"); };
  }
  const std::size_t every = c.run.checkpoint_every;
  h.on_epoch = [out, every](const Run& run) {
    const std::size_t e = run.epochs_completed();
    if (every == 0 || e % every != 0 || run.done()) return;
    const fs::path dir = replicate_dir(out, run.state().replicate);
    ensure_dir(dir);
    save_checkpoint(make_checkpoint(run), (dir / checkpoint_name(e)).string());
  };
  h.on_done = [out](const Run& run) {
    const fs::path dir = replicate_dir(out, run.state().replicate);
    ensure_dir(dir);
    save_checkpoint(make_checkpoint(run), (dir / "final.ckpt").string());
    write_text((dir / "trajectory.jsonl").string(), center_trajectory_jsonl(run.state().finetune));
  };
  return h;
}

inline nlohmann::json run_result_json(const ExperimentResult& r, double seconds) {
  return {{"config_hash", r.config_hash},
          {"version", kVersion},
          {"compiler", __VERSION__},
          {"wall_clock_seconds", seconds},
          {"replicates", r.replicates.size()},
          {"failures", r.failures.size()},
          {"aggregate", {{"val", stats_json(r.val)}, {"test", stats_json(r.test)}}}};
}

// Runs one experiment into `out` and writes every artifact.
inline ExperimentResult train_into(const ExperimentConfig& c, const SplitData* fixed, const fs::path& out) {
  ensure_dir(out);
  write_text((out / "config.txt").string(), serialize_documented(c));
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r = run_experiment(c, fixed, train_hooks(c, out, fixed == nullptr));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text((out / "metrics.json").string(), metrics_json(r).dump(2) + "\n");
  write_text((out / "run_result.json").string(), run_result_json(r, seconds).dump(2) + "\n");
  return r;
}

inline std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(config_detail::parse_double("--labeled-ratio", config_detail::trim(item)));
  }
  if (out.empty()) throw ConfigError("--labeled-ratio: empty list");
  return out;
}

inline void print_summary(std::ostream& out, const std::string& label, const ExperimentResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s test auc %.4f +/- %.4f (n=%zu), val auc %.4f +/- %.4f, config %s\n",
                label.c_str(), r.test.mean, r.test.half_width, r.replicates.size(), r.val.mean, r.val.half_width,
                r.config_hash.c_str());
  out << buf;
}

inline int resume_run(const TrainArgs& a, const ExperimentConfig& c, std::ostream& out) {
  if (a.data_dir.empty()) throw ConfigError("--resume needs --data with the run's splits");
  if (!fs::exists(a.resume)) throw CheckpointError("checkpoint not found: " + a.resume);
  const Checkpoint ck = load_checkpoint(a.resume);
  const SplitData data = read_splits(a.data_dir);
  Run run = restore_run(ck, c, data);
  const fs::path outdir = a.common.out;
  const auto hooks = train_hooks(c, outdir, false);
  run.run_to_end(hooks.on_epoch);
  hooks.on_done(run);
  ExperimentResult r;
  r.config_hash = hash_hex(config_hash(c));
  r.replicates.push_back(run.result());
  r.val = replicate_ci(std::vector<double>{r.replicates[0].val_auc});
  r.test = replicate_ci(std::vector<double>{r.replicates[0].test_auc});
  write_text((outdir / "metrics.json").string(), metrics_json(r).dump(2) + "\n");
  print_summary(out, "resumed replicate " + std::to_string(run.state().replicate) + ":", r);
  return kOk;
}

}  // namespace detail

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    ExperimentConfig c = resolve_config(a.common);
    if (!a.resume.empty()) return detail::resume_run(a, c, out);
    std::optional<SplitData> fixed;
    if (!a.data_dir.empty()) fixed = read_splits(a.data_dir);
    const SplitData* data = fixed ? &*fixed : nullptr;
    const fs::path outdir = a.common.out;

    if (a.labeled_ratios.empty()) {
      const auto r = detail::train_into(c, data, outdir);
      detail::print_summary(out, "", r);
      return r.failures.empty() ? kOk : kUsage;
    }

    if (data != nullptr) throw ConfigError("--labeled-ratio sweeps regenerate labels; drop --data");
    nlohmann::json sweep = nlohmann::json::array();
    bool failures = false;
    for (double ratio : detail::parse_ratios(a.labeled_ratios)) {
      ExperimentConfig rc = c;
      rc.data.labeled_ratio = ratio;
      validate(rc);
      const std::string name = "ratio_" + config_detail::format_double(ratio);
      const auto r = detail::train_into(rc, nullptr, outdir / name);
      detail::print_summary(out, name + ":", r);
      failures = failures || !r.failures.empty();
      sweep.push_back({{"labeled_ratio", ratio},
                       {"config_hash", r.config_hash},
                       {"dir", name},
                       {"aggregate", {{"val", stats_json(r.val)}, {"test", stats_json(r.test)}}}});
    }
    write_text((outdir / "sweep.json").string(), nlohmann::json{{"sweep", sweep}}.dump(2) + "\n");
    return failures ? kUsage : kOk;
  });
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (a.checkpoint.empty() || !fs::exists(a.checkpoint)) {
      throw CheckpointError("checkpoint not found: " + a.checkpoint);
    }
    if (a.embedding != "mad" && a.embedding != "pretext") throw ConfigError("--embedding must be mad or pretext");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    ExperimentConfig c = parse_config(ck.config_text);
    const bool explicit_config = !a.common.config_path.empty() || !a.common.overrides.empty() ||
                                 a.common.seed.has_value() || a.common.replicates.has_value();
    if (explicit_config) {
      const ExperimentConfig given = resolve_config(a.common);
      if (config_hash(given) != ck.config_hash) {
        throw CheckpointError("config hash " + hash_hex(config_hash(given)) + " does not match checkpoint " +
                              hash_hex(ck.config_hash));
      }
      c = given;
    }
    const RunState& s = ck.state;
    if (s.phase == Phase::Pretrain) throw CheckpointError("checkpoint is still in pretraining; no detector to score");

    const SplitData data = read_splits(a.data_dir);
    if (data.train.dim != c.data.dim) throw SchemaError("data dimension does not match the checkpoint's model");
    Split split = Split::Test;
    if (a.split == "val") split = Split::Validation;
    else if (a.split != "test") throw ConfigError("--split must be val or test");
    const Dataset& ds = data.get(split);
    const EvaluationView view = evaluation_view(ds);
    const TrainingView train = training_view(data.train);
    const Matrix reference = gather_rows(train.features, presumed_normal_rows(train));

    const auto& ft = s.finetune;
    const auto score = mad_scores(ft.model, ft.centers, view.features);
    const auto score_knn = a.embedding == "pretext"
                               ? knn_scores_body(s.pretrain.model, reference, view.features, c.run.knn_k)
                               : knn_scores_head(ft.model, reference, view.features, c.run.knn_k);

    const fs::path outdir = a.common.out;
    ensure_dir(outdir);
    std::ostringstream csv;
    csv << "id,score,score_knn,ground_truth\n";
    char buf[96];
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,", i, score[i], score_knn[i]);
      csv << buf << truth_name(ds.samples[i].ground_truth) << '\n';
    }
    write_text((outdir / "scores.csv").string(), csv.str());

    nlohmann::json m = {{"config_hash", hash_hex(ck.config_hash)},
                        {"replicate", s.replicate},
                        {"seed", s.seed},
                        {"finetune_epoch", ft.epoch},
                        {"split", split_name(split)},
                        {"embedding", a.embedding},
                        {"auc", auc(score, view.abnormal)},
                        {"auc_knn", auc(score_knn, view.abnormal)},
                        {"live_centers", ft.centers.live_count()}};
    if (split == Split::Validation && !ft.epoch_auc.empty()) m["recorded_epoch_auc"] = ft.epoch_auc.back();
    write_text((outdir / "eval.json").string(), m.dump(2) + "\n");
    std::snprintf(buf, sizeof buf, "%s auc %.6f, auc_knn (%s) %.6f\n", std::string(split_name(split)).c_str(),
                  m["auc"].get<double>(), a.embedding.c_str(), m["auc_knn"].get<double>());
    out << buf;
    return kOk;
  });
}

inline int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const auto va = split_aucs(read_json(a.a), a.split);
    const auto vb = split_aucs(read_json(a.b), a.split);
    if (va.size() < 2 || vb.size() < 2) {
      err << "compare needs >= 2 replicates per side (got " << va.size() << " and " << vb.size() << ")\n";
      return kTooFewReplicates;
    }
    const auto sa = replicate_ci(va);
    const auto sb = replicate_ci(vb);
    const auto w = welch_t_test(va, vb);
    const auto code = significance_code(w.p_value);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "a: %.4f +/- %.4f (n=%zu)\nb: %.4f +/- %.4f (n=%zu)\nt = %.6g, df = %.6g, p = %.6g  %s\n", sa.mean,
                  sa.half_width, va.size(), sb.mean, sb.half_width, vb.size(), w.t, w.df, w.p_value,
                  std::string(code).c_str());
    out << buf;
    if (!a.out.empty()) {
      ensure_dir(a.out);
      nlohmann::json j = {{"split", a.split}, {"a", stats_json(sa)}, {"b", stats_json(sb)}, {"t", w.t},
                          {"df", w.df}, {"p_value", w.p_value}, {"code", code}};
      write_text((fs::path(a.out) / "compare.json").string(), j.dump(2) + "\n");
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config_path, "key=value config file");
  sub->add_option("--seed", c.seed, "run seed (overrides run.seed)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--set", c.overrides, "KEY=VALUE override, repeatable")->take_all()->allow_extra_args(false);
  sub->add_option("--replicates", c.replicates, "number of replicates (overrides run.replicates)");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"madlab: multi-center semi-supervised anomaly detection experiments"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write train/val/test CSVs from the synthetic generator");
  add_common(g, gen.common);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "pretrain, fine-tune and score; writes checkpoints and metrics");
  add_common(t, tr.common);
  t->add_option("--data", tr.data_dir, "directory with train.csv/val.csv/test.csv (default: generate per replicate)");
  t->add_option("--labeled-ratio", tr.labeled_ratios, "comma-separated labeled ratios to sweep");
  t->add_option("--resume", tr.resume, "continue a run from a checkpoint");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a split with a checkpoint");
  add_common(e, ev.common);
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  e->add_option("--data", ev.data_dir, "directory with train.csv/val.csv/test.csv")->required();
  e->add_option("--split", ev.split, "val or test");
  e->add_option("--embedding", ev.embedding, "k-NN score space: mad or pretext");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Welch t-test between two metrics files");
  c->add_option("a", cmp.a, "first metrics.json")->required();
  c->add_option("b", cmp.b, "second metrics.json")->required();
  c->add_option("--split", cmp.split, "val or test");
  c->add_option("--out", cmp.out, "directory for compare.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (g->parsed()) return cmd_generate(gen, out, err);
  if (t->parsed()) return cmd_train(tr, out, err);
  if (e->parsed()) return cmd_eval(ev, out, err);
  return cmd_compare(cmp, out, err);
}

}  // namespace madlab::cli

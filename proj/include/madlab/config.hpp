#pragma once

// Experiment configuration and its flat `key=value` text form.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "madlab/data.hpp"
#include "madlab/errors.hpp"
#include "madlab/losses.hpp"
#include "madlab/numcore.hpp"

namespace madlab {

struct ModelConfig {
  std::vector<std::size_t> body_widths{64, 32};  // input dim comes from data.dim
  std::size_t projection_dim = 16;
  std::size_t mad_dim = 16;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 24;
  double lr = 1e-3;
  std::vector<std::size_t> milestones{70, 90};
  double lr_factor = 0.1;
  double temperature = 0.5;
  double weight_decay = 1e-6;
  UpdateRule optimizer = UpdateRule::AdamDefault;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

struct FinetuneConfig {
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 1e-4;
  std::vector<std::size_t> milestones{};
  double lr_factor = 0.1;
  double eta = 1.0;
  double gamma = 0.05;
  std::size_t n_s = 100;
  double lambda = 1e-6;
  double eps_d = kDistanceFloor;
  UpdateRule optimizer = UpdateRule::AdamDefault;
  bool update_centers = false;
  std::size_t kmeans_iters = 100;

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

struct AugmentConfigKeys {
  double noise_sigma = 3.0;
  double scale_jitter = 0.2;
  double dropout_prob = 0.1;

  friend bool operator==(const AugmentConfigKeys&, const AugmentConfigKeys&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t replicates = 1;
  std::size_t knn_k = 100;
  std::size_t checkpoint_every = 10;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ExperimentConfig {
  GeneratorConfig data{};
  ModelConfig model{};
  AugmentConfigKeys augment{};
  PretrainConfig pretrain{};
  FinetuneConfig finetune{};
  RunConfig run{};

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

// ---------------------------------------------------------------------------
// Value codecs

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("config key '" + std::string(key) + "': expected a real number, got '" + std::string(s) + "'");
  }
  return v;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::size_t> parse_list(std::string_view key, std::string_view s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    const auto piece = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    out.push_back(parse_unsigned<std::size_t>(key, piece));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline bool parse_bool(std::string_view key, std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(s) + "'");
}

inline UpdateRule parse_rule(std::string_view key, std::string_view s) {
  if (s == "adam") return UpdateRule::AdamDefault;
  if (s == "sgd") return UpdateRule::Sgd;
  throw ConfigError("config key '" + std::string(key) + "': expected adam|sgd, got '" + std::string(s) + "'");
}

inline std::string format_rule(UpdateRule r) { return r == UpdateRule::Sgd ? "sgd" : "adam"; }

struct Entry {
  std::string_view key;
  std::string_view doc;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <typename Member>
Entry real(std::string_view key, std::string_view doc, Member member) {
  return {key, doc, [member](const ExperimentConfig& c) { return format_double(member(c)); },
          [member, key](ExperimentConfig& c, std::string_view v) { member(c) = parse_double(key, v); }};
}

template <typename Member>
Entry count(std::string_view key, std::string_view doc, Member member) {
  return {key, doc, [member](const ExperimentConfig& c) { return std::to_string(member(c)); },
          [member, key](ExperimentConfig& c, std::string_view v) {
            using T = std::remove_reference_t<decltype(member(c))>;
            member(c) = parse_unsigned<T>(key, v);
          }};
}

template <typename Member>
Entry list(std::string_view key, std::string_view doc, Member member) {
  return {key, doc, [member](const ExperimentConfig& c) { return format_list(member(c)); },
          [member, key](ExperimentConfig& c, std::string_view v) { member(c) = parse_list(key, v); }};
}

template <typename Member>
Entry flag(std::string_view key, std::string_view doc, Member member) {
  return {key, doc,
          [member](const ExperimentConfig& c) {
            return std::string(member(c) ? "true" : "false");
          },
          [member, key](ExperimentConfig& c, std::string_view v) { member(c) = parse_bool(key, v); }};
}

template <typename Member>
Entry rule(std::string_view key, std::string_view doc, Member member) {
  return {key, doc, [member](const ExperimentConfig& c) { return format_rule(member(c)); },
          [member, key](ExperimentConfig& c, std::string_view v) { member(c) = parse_rule(key, v); }};
}

#define MADLAB_FIELD(path) [](auto& c) -> auto& { return c.path; }

inline const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      count("data.dim", "input dimension D", MADLAB_FIELD(data.dim)),
      count("data.modes", "number of normal modes M", MADLAB_FIELD(data.modes)),
      count("data.train_size", "train samples", MADLAB_FIELD(data.train_size)),
      count("data.val_size", "validation samples", MADLAB_FIELD(data.val_size)),
      count("data.test_size", "test samples", MADLAB_FIELD(data.test_size)),
      real("data.contamination", "abnormal fraction of train", MADLAB_FIELD(data.contamination)),
      real("data.eval_contamination", "abnormal fraction of val/test", MADLAB_FIELD(data.eval_contamination)),
      real("data.labeled_ratio", "labeled fraction of train", MADLAB_FIELD(data.labeled_ratio)),
      real("data.labeled_abnormal_fraction", "abnormal share of labeled samples",
           MADLAB_FIELD(data.labeled_abnormal_fraction)),
      count("data.group_size", "samples per group (split unit)", MADLAB_FIELD(data.group_size)),
      real("data.sigma", "mode scale", MADLAB_FIELD(data.sigma)),
      count("data.latent_dim", "intrinsic dimension of each mode", MADLAB_FIELD(data.latent_dim)),
      real("data.noise", "isotropic noise in units of sigma", MADLAB_FIELD(data.noise)),
      count("data.nuisance_dims", "trailing nuisance coordinates", MADLAB_FIELD(data.nuisance_dims)),
      real("data.nuisance_scale", "nuisance amplitude in units of sigma", MADLAB_FIELD(data.nuisance_scale)),
      real("data.midpoint_fraction", "share of anomalies between modes", MADLAB_FIELD(data.midpoint_fraction)),
      list("model.body_widths", "hidden widths of the shared body", MADLAB_FIELD(model.body_widths)),
      count("model.projection_dim", "pretext projection head output", MADLAB_FIELD(model.projection_dim)),
      count("model.mad_dim", "detection head output", MADLAB_FIELD(model.mad_dim)),
      real("augment.noise_sigma", "augmentation Gaussian noise", MADLAB_FIELD(augment.noise_sigma)),
      real("augment.scale_jitter", "augmentation scale range 1 +/- j", MADLAB_FIELD(augment.scale_jitter)),
      real("augment.dropout_prob", "augmentation coordinate dropout", MADLAB_FIELD(augment.dropout_prob)),
      count("pretrain.epochs", "contrastive pretraining epochs", MADLAB_FIELD(pretrain.epochs)),
      count("pretrain.batch", "source samples per pretraining batch", MADLAB_FIELD(pretrain.batch)),
      real("pretrain.lr", "pretraining learning rate", MADLAB_FIELD(pretrain.lr)),
      list("pretrain.milestones", "epochs at which lr is multiplied by lr_factor", MADLAB_FIELD(pretrain.milestones)),
      real("pretrain.lr_factor", "pretraining lr decay factor", MADLAB_FIELD(pretrain.lr_factor)),
      real("pretrain.temperature", "InfoNCE temperature", MADLAB_FIELD(pretrain.temperature)),
      real("pretrain.weight_decay", "pretraining weight decay", MADLAB_FIELD(pretrain.weight_decay)),
      rule("pretrain.optimizer", "adam|sgd", MADLAB_FIELD(pretrain.optimizer)),
      count("finetune.epochs", "fine-tuning epochs", MADLAB_FIELD(finetune.epochs)),
      count("finetune.batch", "fine-tuning batch size", MADLAB_FIELD(finetune.batch)),
      real("finetune.lr", "fine-tuning learning rate", MADLAB_FIELD(finetune.lr)),
      list("finetune.milestones", "fine-tuning lr milestones", MADLAB_FIELD(finetune.milestones)),
      real("finetune.lr_factor", "fine-tuning lr decay factor", MADLAB_FIELD(finetune.lr_factor)),
      real("finetune.eta", "weight of the labeled term", MADLAB_FIELD(finetune.eta)),
      real("finetune.gamma", "pruning fraction of the max cardinality", MADLAB_FIELD(finetune.gamma)),
      count("finetune.n_s", "initial number of centers", MADLAB_FIELD(finetune.n_s)),
      real("finetune.lambda", "weight decay on the detection network", MADLAB_FIELD(finetune.lambda)),
      real("finetune.eps_d", "squared-distance floor for known anomalies", MADLAB_FIELD(finetune.eps_d)),
      rule("finetune.optimizer", "adam|sgd", MADLAB_FIELD(finetune.optimizer)),
      flag("finetune.update_centers", "train center positions too", MADLAB_FIELD(finetune.update_centers)),
      count("finetune.kmeans_iters", "max Lloyd iterations", MADLAB_FIELD(finetune.kmeans_iters)),
      count("run.seed", "base seed; replicate r uses seed + r", MADLAB_FIELD(run.seed)),
      count("run.replicates", "number of replicates", MADLAB_FIELD(run.replicates)),
      count("run.knn_k", "neighbours for the k-NN score", MADLAB_FIELD(run.knn_k)),
      count("run.checkpoint_every", "epochs (both phases) between checkpoints; 0 = final only",
            MADLAB_FIELD(run.checkpoint_every)),
  };
  return table;
}

#undef MADLAB_FIELD

}  // namespace config_detail

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  for (const auto& e : config_detail::entries()) {
    if (e.get(a) != e.get(b)) return false;
  }
  return true;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : config_detail::entries()) keys.emplace_back(e.key);
  return keys;
}

inline std::string get_value(const ExperimentConfig& c, std::string_view key) {
  for (const auto& e : config_detail::entries()) {
    if (e.key == key) return e.get(c);
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline void set_value(ExperimentConfig& c, std::string_view key, std::string_view value) {
  for (const auto& e : config_detail::entries()) {
    if (e.key == key) {
      e.set(c, config_detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// Applies a `KEY=VALUE` override.
inline void apply_override(ExperimentConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' lacks '='");
  set_value(c, config_detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline std::string serialize(const ExperimentConfig& c) {
  std::ostringstream os;
  for (const auto& e : config_detail::entries()) os << e.key << '=' << e.get(c) << '\n';
  return os.str();
}

// Same as serialize() with a doc comment above every key.
inline std::string serialize_documented(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "# madlab experiment configuration\n";
  for (const auto& e : config_detail::entries()) os << "# " << e.doc << '\n' << e.key << '=' << e.get(c) << '\n';
  return os.str();
}

// Parses key=value lines over the defaults. Blank lines and `#` comments are
// ignored; unknown keys are an error.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    if (config_detail::trim(line).empty()) continue;
    try {
      apply_override(c, line);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(serialize(c)); }

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void validate(const ExperimentConfig& c) {
  validate(c.data);
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
  };
  auto at_least_one = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  if (c.model.body_widths.empty()) throw ConfigError("model.body_widths must list at least one layer");
  for (std::size_t w : c.model.body_widths) at_least_one(w, "model.body_widths entries");
  at_least_one(c.model.projection_dim, "model.projection_dim");
  at_least_one(c.model.mad_dim, "model.mad_dim");
  if (c.pretrain.batch < 2) throw ConfigError("pretrain.batch must be >= 2");
  at_least_one(c.finetune.batch, "finetune.batch");
  at_least_one(c.finetune.n_s, "finetune.n_s");
  at_least_one(c.finetune.kmeans_iters, "finetune.kmeans_iters");
  at_least_one(c.run.replicates, "run.replicates");
  at_least_one(c.run.knn_k, "run.knn_k");
  positive(c.pretrain.lr, "pretrain.lr");
  positive(c.finetune.lr, "finetune.lr");
  positive(c.pretrain.temperature, "pretrain.temperature");
  positive(c.pretrain.lr_factor, "pretrain.lr_factor");
  positive(c.finetune.lr_factor, "finetune.lr_factor");
  positive(c.finetune.eps_d, "finetune.eps_d");
  if (!(c.finetune.gamma > 0.0 && c.finetune.gamma < 1.0)) throw ConfigError("finetune.gamma must be in (0, 1)");
  if (c.finetune.eta < 0.0) throw ConfigError("finetune.eta must be >= 0");
  if (c.finetune.lambda < 0.0 || c.pretrain.weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  auto increasing = [](const std::vector<std::size_t>& m, const char* name) {
    for (std::size_t i = 1; i < m.size(); ++i) {
      if (m[i] <= m[i - 1]) throw ConfigError(std::string(name) + " must be strictly increasing");
    }
  };
  increasing(c.pretrain.milestones, "pretrain.milestones");
  increasing(c.finetune.milestones, "finetune.milestones");
  validate(AugmentationConfig{c.augment.noise_sigma, c.augment.scale_jitter, c.augment.dropout_prob, 0});
}

}  // namespace madlab

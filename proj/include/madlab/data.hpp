#pragma once

// Synthetic multi-mode vector data, group-level splitting, the contrastive
// augmentation family, and the per-split CSV format.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "madlab/errors.hpp"
#include "madlab/numcore.hpp"
#include "madlab/rng.hpp"

namespace madlab {

enum class Label { Unlabeled, KnownNormal, KnownAbnormal };
enum class Truth { Normal, Abnormal };
enum class Split { Train, Validation, Test };

inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Validation, Split::Test};

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

struct Sample {
  std::vector<double> features;
  Label label = Label::Unlabeled;
  Truth ground_truth = Truth::Normal;
  std::size_t mode_id = 0;
  std::size_t group_id = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  Split split = Split::Train;
  std::size_t dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t count(Truth t) const {
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(),
                                                  [t](const Sample& s) { return s.ground_truth == t; }));
  }
  std::size_t count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [l](const Sample& s) { return s.label == l; }));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitData {
  Dataset train;
  Dataset validation;
  Dataset test;

  const Dataset& get(Split s) const {
    return s == Split::Train ? train : (s == Split::Validation ? validation : test);
  }
};

// What the trainer may see: features and the semi-supervised label only.
struct TrainingView {
  Matrix features;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t unlabeled_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Unlabeled));
  }
  std::size_t labeled_count() const { return size() - unlabeled_count(); }
};

// What evaluation may see: features and binary ground truth (Abnormal = true).
struct EvaluationView {
  Matrix features;
  std::vector<bool> abnormal;
};

inline Matrix feature_matrix(const Dataset& d) {
  Matrix m(d.size(), d.dim);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::copy(d.samples[i].features.begin(), d.samples[i].features.end(), m.row(i).begin());
  }
  return m;
}

inline TrainingView training_view(const Dataset& d) {
  TrainingView v{feature_matrix(d), {}};
  v.labels.reserve(d.size());
  for (const auto& s : d.samples) v.labels.push_back(s.label);
  return v;
}

inline EvaluationView evaluation_view(const Dataset& d) {
  EvaluationView v{feature_matrix(d), {}};
  v.abnormal.reserve(d.size());
  for (const auto& s : d.samples) v.abnormal.push_back(s.ground_truth == Truth::Abnormal);
  return v;
}

// Rows of the training view presumed normal: Unlabeled + KnownNormal.
inline std::vector<std::size_t> presumed_normal_rows(const TrainingView& v) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v.labels[i] != Label::KnownAbnormal) rows.push_back(i);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Splitting

// Assigns each of `group_count` groups to a split. Split s receives
// floor(ratio_s * G) groups plus one of the leftover groups if its fractional
// part is among the largest (ties to the lower split index).
inline std::vector<Split> make_split_indices(std::size_t group_count, std::array<double, 3> ratios,
                                             std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  }
  if (group_count < ratios.size()) {
    throw ConfigError("need at least " + std::to_string(ratios.size()) + " groups to split, got " +
                      std::to_string(group_count));
  }
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(group_count);
    counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[s] = exact - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < group_count; ++k, ++assigned) ++counts[order[k % 3]];

  Rng rng = make_rng(seed, Stream::SplitAssignment);
  const auto perm = shuffled_indices(group_count, rng);
  std::vector<Split> assignment(group_count);
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k) assignment[perm[pos++]] = kAllSplits[s];
  }
  return assignment;
}

// ---------------------------------------------------------------------------
// Generator

struct GeneratorConfig {
  std::size_t dim = 32;
  std::size_t modes = 4;
  std::size_t train_size = 2000;
  std::size_t val_size = 1000;
  std::size_t test_size = 1000;
  double contamination = 0.05;       // abnormal fraction of train
  double eval_contamination = 0.10;  // abnormal fraction of val/test
  double labeled_ratio = 0.05;       // labeled fraction of train
  double labeled_abnormal_fraction = 0.5;
  std::size_t group_size = 4;
  double sigma = 1.0;                // mode scale; shells and separation are multiples of it
  std::size_t latent_dim = 4;        // intrinsic dimension of each normal mode
  double noise = 0.1;                // isotropic noise (in units of sigma) on every sample
  std::size_t nuisance_dims = 16;    // trailing coordinates carrying class-independent nuisance
  double nuisance_scale = 2.0;
  double midpoint_fraction = 0.5;    // share of anomalies placed between modes
  std::uint64_t seed = 0;

  std::size_t signal_dim() const { return dim - nuisance_dims; }
};

inline void validate(const GeneratorConfig& c) {
  if (c.dim < 1) throw ConfigError("data.dim must be >= 1");
  if (c.modes < 1) throw ConfigError("data.modes must be >= 1");
  if (c.nuisance_dims >= c.dim) throw ConfigError("data.nuisance_dims must be < data.dim");
  if (c.latent_dim < 1 || c.latent_dim > c.signal_dim()) {
    throw ConfigError("data.latent_dim must be in [1, signal dims]");
  }
  if (c.train_size < 1 || c.val_size < 1 || c.test_size < 1) throw ConfigError("split sizes must be >= 1");
  if (c.group_size < 1) throw ConfigError("data.group_size must be >= 1");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0, 1]");
  };
  unit(c.contamination, "data.contamination");
  unit(c.eval_contamination, "data.eval_contamination");
  unit(c.labeled_ratio, "data.labeled_ratio");
  unit(c.labeled_abnormal_fraction, "data.labeled_abnormal_fraction");
  unit(c.midpoint_fraction, "data.midpoint_fraction");
  if (!(c.sigma > 0.0)) throw ConfigError("data.sigma must be > 0");
  if (c.noise < 0.0 || c.nuisance_scale < 0.0) throw ConfigError("noise scales must be >= 0");
}

// Rounds to 9 significant decimal digits so that the CSV text form is exact.
inline double quantize9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  double out = 0.0;
  std::from_chars(buf, buf + std::char_traits<char>::length(buf), out);
  return out == 0.0 ? 0.0 : out;  // fold -0
}

namespace detail {

inline std::vector<double> gaussian_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Orthonormal basis (rows) of a random k-dimensional subspace of R^n.
inline std::vector<std::vector<double>> random_basis(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < k) {
    auto v = gaussian_vector(n, rng);
    for (const auto& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < n; ++i) v[i] -= p * b[i];
    }
    const double len = norm(v);
    if (len < 1e-8) continue;
    for (double& x : v) x /= len;
    basis.push_back(std::move(v));
  }
  return basis;
}

struct ModeModel {
  std::vector<std::vector<double>> centers;                 // signal-space centers
  std::vector<std::vector<std::vector<double>>> bases;      // per-mode latent bases
};

// Mode centers lie at radius 8*sigma from the origin, pairwise >= 8*sigma apart.
inline ModeModel make_modes(const GeneratorConfig& c, Rng& rng) {
  const std::size_t n = c.signal_dim();
  const double radius = 8.0 * c.sigma;
  const double min_sep = 8.0 * c.sigma;
  ModeModel mm;
  std::size_t attempts = 0;
  while (mm.centers.size() < c.modes) {
    if (++attempts > 100000) throw ConfigError("cannot place modes at the required separation");
    auto v = gaussian_vector(n, rng);
    const double len = norm(v);
    if (len < 1e-8) continue;
    for (double& x : v) x *= radius / len;
    bool ok = true;
    for (const auto& other : mm.centers) {
      if (std::sqrt(squared_distance(v, other)) < min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) mm.centers.push_back(std::move(v));
  }
  for (std::size_t m = 0; m < c.modes; ++m) mm.bases.push_back(random_basis(n, c.latent_dim, rng));
  return mm;
}

inline std::vector<double> draw_normal(const GeneratorConfig& c, const ModeModel& mm, std::size_t mode,
                                       Rng& rng) {
  const std::size_t n = c.signal_dim();
  std::vector<double> x = mm.centers[mode];
  std::normal_distribution<double> nd(0.0, 1.0);
  for (const auto& b : mm.bases[mode]) {
    const double z = c.sigma * nd(rng);
    for (std::size_t i = 0; i < n; ++i) x[i] += z * b[i];
  }
  return x;
}

// Uniform direction, radius uniform in [4 sigma, 8 sigma] around the mode center.
inline std::vector<double> draw_shell(const GeneratorConfig& c, const ModeModel& mm, std::size_t mode,
                                      Rng& rng) {
  const std::size_t n = c.signal_dim();
  auto u = gaussian_vector(n, rng);
  const double len = norm(u);
  std::uniform_real_distribution<double> rd(4.0 * c.sigma, 8.0 * c.sigma);
  const double r = rd(rng);
  std::vector<double> x = mm.centers[mode];
  for (std::size_t i = 0; i < n; ++i) x[i] += r * u[i] / len;
  return x;
}

inline std::vector<double> draw_midpoint(const GeneratorConfig& c, const ModeModel& mm, std::size_t mode,
                                         Rng& rng) {
  const std::size_t n = c.signal_dim();
  std::vector<double> x = mm.centers[mode];
  if (c.modes < 2) return draw_shell(c, mm, mode, rng);
  std::uniform_int_distribution<std::size_t> pick(0, c.modes - 2);
  std::size_t other = pick(rng);
  if (other >= mode) ++other;
  for (std::size_t i = 0; i < n; ++i) x[i] = 0.5 * (x[i] + mm.centers[other][i]);
  return x;
}

inline std::vector<double> finish_sample(const GeneratorConfig& c, std::vector<double> signal, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> x(c.dim, 0.0);
  for (std::size_t i = 0; i < signal.size(); ++i) x[i] = signal[i] + c.noise * c.sigma * nd(rng);
  if (c.nuisance_dims > 0) {
    std::uniform_real_distribution<double> amp(0.0, 2.0);
    const double a = c.nuisance_scale * c.sigma * amp(rng);
    for (std::size_t i = signal.size(); i < c.dim; ++i) x[i] = a * nd(rng);
  }
  for (double& v : x) v = quantize9(v);
  return x;
}

}  // namespace detail

// Draws the three splits. Samples are grouped (group_size per group, one mode
// per group) and whole groups are assigned to splits.
inline SplitData generate_synthetic(const GeneratorConfig& c) {
  validate(c);
  const std::array<std::size_t, 3> sizes{c.train_size, c.val_size, c.test_size};
  const std::size_t total = sizes[0] + sizes[1] + sizes[2];
  std::size_t group_count = 0;
  for (std::size_t s : sizes) group_count += (s + c.group_size - 1) / c.group_size;
  std::array<double, 3> ratios{};
  for (std::size_t s = 0; s < 3; ++s) ratios[s] = static_cast<double>(sizes[s]) / static_cast<double>(total);
  ratios[2] = 1.0 - ratios[0] - ratios[1];
  const auto assignment = make_split_indices(group_count, ratios, c.seed);

  Rng rng = make_rng(c.seed, Stream::Generator);
  const auto mm = detail::make_modes(c, rng);
  std::uniform_int_distribution<std::size_t> pick_mode(0, c.modes - 1);
  std::vector<std::size_t> group_mode(group_count);
  for (auto& m : group_mode) m = pick_mode(rng);

  SplitData out;
  for (std::size_t s = 0; s < 3; ++s) {
    Dataset& d = s == 0 ? out.train : (s == 1 ? out.validation : out.test);
    d.split = kAllSplits[s];
    d.dim = c.dim;
    std::vector<std::size_t> groups;
    for (std::size_t g = 0; g < group_count; ++g) {
      if (assignment[g] == kAllSplits[s]) groups.push_back(g);
    }
    const std::size_t n = sizes[s];
    if (groups.empty() || groups.size() > n) throw ConfigError("group assignment incompatible with split sizes");

    const double ratio = s == 0 ? c.contamination : c.eval_contamination;
    const auto n_abnormal = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    const auto order = shuffled_indices(n, rng);
    std::vector<bool> is_abnormal(n, false);
    for (std::size_t k = 0; k < n_abnormal; ++k) is_abnormal[order[k]] = true;

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    d.samples.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      Sample& smp = d.samples[j];
      smp.group_id = groups[j * groups.size() / n];
      smp.mode_id = group_mode[smp.group_id];
      std::vector<double> signal;
      if (is_abnormal[j]) {
        smp.ground_truth = Truth::Abnormal;
        signal = coin(rng) < c.midpoint_fraction ? detail::draw_midpoint(c, mm, smp.mode_id, rng)
                                                 : detail::draw_shell(c, mm, smp.mode_id, rng);
      } else {
        signal = detail::draw_normal(c, mm, smp.mode_id, rng);
      }
      smp.features = detail::finish_sample(c, std::move(signal), rng);
    }

    if (s == 0) {
      const auto n_labeled = static_cast<std::size_t>(std::llround(c.labeled_ratio * static_cast<double>(n)));
      const auto n_lab_abn =
          static_cast<std::size_t>(std::llround(c.labeled_abnormal_fraction * static_cast<double>(n_labeled)));
      const std::size_t n_lab_norm = n_labeled - n_lab_abn;
      std::vector<std::size_t> abn, nor;
      for (std::size_t j : shuffled_indices(n, rng)) (is_abnormal[j] ? abn : nor).push_back(j);
      if (n_lab_abn > abn.size()) {
        throw ConfigError("requested " + std::to_string(n_lab_abn) + " labeled abnormal samples but only " +
                          std::to_string(abn.size()) + " abnormal train samples exist");
      }
      if (n_lab_norm > nor.size()) throw ConfigError("not enough normal train samples to label");
      for (std::size_t k = 0; k < n_lab_abn; ++k) d.samples[abn[k]].label = Label::KnownAbnormal;
      for (std::size_t k = 0; k < n_lab_norm; ++k) d.samples[nor[k]].label = Label::KnownNormal;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentationConfig {
  double noise_sigma = 3.0;
  double scale_jitter = 0.2;
  double dropout_prob = 0.1;
  std::uint64_t seed = 0;
};

inline void validate(const AugmentationConfig& c) {
  if (c.noise_sigma < 0.0) throw ConfigError("augment.noise_sigma must be >= 0");
  if (c.scale_jitter < 0.0) throw ConfigError("augment.scale_jitter must be >= 0");
  if (!(c.dropout_prob >= 0.0 && c.dropout_prob < 1.0)) throw ConfigError("augment.dropout_prob must be in [0, 1)");
}

inline std::vector<double> augment_view(std::span<const double> x, const AugmentationConfig& cfg, Rng& rng) {
  double scale = 1.0;
  if (cfg.scale_jitter > 0.0) {
    std::uniform_real_distribution<double> sd(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
    scale = sd(rng);
  }
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double value = x[i] * scale;
    if (cfg.noise_sigma > 0.0) value += cfg.noise_sigma * nd(rng);
    if (cfg.dropout_prob > 0.0 && u01(rng) < cfg.dropout_prob) value = 0.0;
    v[i] = value;
  }
  return v;
}

// Two independently drawn views of the same features.
inline std::pair<std::vector<double>, std::vector<double>> augment_pair(std::span<const double> x,
                                                                        const AugmentationConfig& cfg, Rng& rng) {
  auto a = augment_view(x, cfg, rng);
  auto b = augment_view(x, cfg, rng);
  return {std::move(a), std::move(b)};
}

inline std::pair<std::vector<double>, std::vector<double>> augment_pair(const Sample& s,
                                                                        const AugmentationConfig& cfg, Rng& rng) {
  return augment_pair(std::span<const double>(s.features), cfg, rng);
}

// ---------------------------------------------------------------------------
// CSV: group_id,mode_id,ground_truth,label,f0..f{D-1}; values printed with %.9g.

inline std::string_view truth_name(Truth t) { return t == Truth::Abnormal ? "abnormal" : "normal"; }

inline std::string_view label_name(Label l) {
  switch (l) {
    case Label::Unlabeled: return "unlabeled";
    case Label::KnownNormal: return "normal";
    case Label::KnownAbnormal: return "abnormal";
  }
  return "?";
}

inline std::string format9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_csv(const Dataset& d, std::ostream& os) {
  os << "group_id,mode_id,ground_truth,label";
  for (std::size_t i = 0; i < d.dim; ++i) os << ",f" << i;
  os << '\n';
  for (const auto& s : d.samples) {
    os << s.group_id << ',' << s.mode_id << ',' << truth_name(s.ground_truth) << ',' << label_name(s.label);
    for (double v : s.features) os << ',' << format9(v);
    os << '\n';
  }
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(d, os);
  if (!os) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view f, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc{} || ptr != f.data() + f.size()) {
    throw SchemaError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(f) + "'");
  }
  return v;
}

}  // namespace detail

inline Dataset read_csv(std::istream& is, Split split) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 5 || header[0] != "group_id" || header[1] != "mode_id" || header[2] != "ground_truth" ||
      header[3] != "label") {
    throw SchemaError("bad CSV header: expected group_id,mode_id,ground_truth,label,f0..");
  }
  Dataset d;
  d.split = split;
  d.dim = header.size() - 4;
  for (std::size_t i = 0; i < d.dim; ++i) {
    if (header[4 + i] != "f" + std::to_string(i)) throw SchemaError("bad feature column name in header");
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_commas(line);
    if (f.size() != header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(f.size()));
    }
    Sample s;
    s.group_id = detail::parse_field<std::size_t>(f[0], line_no);
    s.mode_id = detail::parse_field<std::size_t>(f[1], line_no);
    if (f[2] == "normal") s.ground_truth = Truth::Normal;
    else if (f[2] == "abnormal") s.ground_truth = Truth::Abnormal;
    else throw SchemaError("line " + std::to_string(line_no) + ": bad ground_truth '" + std::string(f[2]) + "'");
    if (f[3] == "unlabeled") s.label = Label::Unlabeled;
    else if (f[3] == "normal") s.label = Label::KnownNormal;
    else if (f[3] == "abnormal") s.label = Label::KnownAbnormal;
    else throw SchemaError("line " + std::to_string(line_no) + ": bad label '" + std::string(f[3]) + "'");
    if ((s.label == Label::KnownNormal && s.ground_truth != Truth::Normal) ||
        (s.label == Label::KnownAbnormal && s.ground_truth != Truth::Abnormal)) {
      throw SchemaError("line " + std::to_string(line_no) + ": label contradicts ground_truth");
    }
    s.features.reserve(d.dim);
    for (std::size_t i = 0; i < d.dim; ++i) {
      const double v = detail::parse_field<double>(f[4 + i], line_no);
      if (!std::isfinite(v)) throw SchemaError("line " + std::to_string(line_no) + ": non-finite feature");
      s.features.push_back(v);
    }
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw SchemaError("CSV has no data rows");
  return d;
}

inline Dataset read_csv(const std::string& path, Split split) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SchemaError("cannot open " + path);
  return read_csv(is, split);
}

}  // namespace madlab

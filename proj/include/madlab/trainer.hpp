#pragma once

// Two-phase training: contrastive pretraining of body + projection head,
// weight transfer to body + detection head, k-means center initialization,
// and fine-tuning with per-epoch center pruning. A Run advances one epoch at
// a time and can be checkpointed between any two epochs.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "madlab/config.hpp"
#include "madlab/data.hpp"
#include "madlab/errors.hpp"
#include "madlab/eval.hpp"
#include "madlab/log.hpp"
#include "madlab/losses.hpp"
#include "madlab/numcore.hpp"
#include "madlab/rng.hpp"
#include "madlab/spheres.hpp"

namespace madlab {

// Shared body followed by a task head.
struct Encoder {
  Mlp body;
  Mlp head;

  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& p : body.parameters()) out.push_back(&p);
    for (auto& p : head.parameters()) out.push_back(&p);
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& p : body.parameters()) out.push_back(&p);
    for (const auto& p : head.parameters()) out.push_back(&p);
    return out;
  }

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

struct EncoderTape {
  GradientTape body;
  GradientTape head;
};

inline Matrix encode(const Encoder& e, const Matrix& x, EncoderTape* tape = nullptr) {
  Matrix h = mlp_forward(e.body, x, tape ? &tape->body : nullptr);
  return mlp_forward(e.head, h, tape ? &tape->head : nullptr);
}

inline Matrix encode_body(const Encoder& e, const Matrix& x) { return mlp_forward(e.body, x); }

// Parameter gradients ordered as Encoder::parameters().
inline std::vector<Matrix> encoder_backward(const Encoder& e, EncoderTape& tape, const Matrix& output_gradient) {
  auto head = mlp_backward(e.head, tape.head, output_gradient);
  auto body = mlp_backward(e.body, tape.body, head.input_gradient);
  std::vector<Matrix> grads = std::move(body.parameter_gradients);
  for (auto& g : head.parameter_gradients) grads.push_back(std::move(g));
  return grads;
}

inline std::vector<LayerSpec> body_specs(const ExperimentConfig& c) {
  std::vector<LayerSpec> specs;
  std::size_t in = c.data.dim;
  for (std::size_t w : c.model.body_widths) {
    specs.push_back({in, w, Activation::ReLU});
    in = w;
  }
  return specs;
}

inline std::vector<LayerSpec> head_specs(const ExperimentConfig& c, std::size_t out_dim) {
  return {{c.model.body_widths.back(), out_dim, Activation::Identity}};
}

inline Encoder make_pretext_encoder(const ExperimentConfig& c, std::uint64_t seed) {
  Encoder e{Mlp(body_specs(c)), Mlp(head_specs(c, c.model.projection_dim))};
  Rng rng = make_rng(seed, Stream::PretextInit);
  e.body.initialize(rng);
  e.head.initialize(rng);
  return e;
}

// Copies the body, discards the projection head, and draws a fresh detection
// head from the run seed.
inline Encoder transfer_weights(const Encoder& pretext, const ExperimentConfig& c, std::uint64_t seed) {
  if (pretext.body.specs() != body_specs(c)) throw ConfigError("transfer_weights: body shape does not match config");
  Encoder e{pretext.body, Mlp(head_specs(c, c.model.mad_dim))};
  Rng rng = make_rng(seed, Stream::MadHeadInit);
  e.head.initialize(rng);
  return e;
}

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainState {
  Encoder model;
  OptimizerState optimizer;
  std::size_t epoch = 0;
  std::vector<double> epoch_loss;  // mean per-anchor InfoNCE

  friend bool operator==(const PretrainState&, const PretrainState&) = default;
};

inline PretrainState begin_pretrain(const ExperimentConfig& c, std::uint64_t seed) {
  PretrainState s;
  s.model = make_pretext_encoder(c, seed);
  const auto params = std::as_const(s.model).parameters();
  s.optimizer = make_optimizer(c.pretrain.optimizer, c.pretrain.lr, c.pretrain.weight_decay, params);
  return s;
}

inline void pretrain_epoch(PretrainState& s, const ExperimentConfig& c, const TrainingView& train, std::uint64_t seed) {
  const std::size_t n = train.size();
  if (n == 0) throw ConfigError("pretrain: empty training set");
  s.optimizer.learning_rate = apply_lr_schedule(s.epoch, c.pretrain.lr, c.pretrain.milestones, c.pretrain.lr_factor);
  Rng shuffle = make_rng(seed, Stream::PretrainShuffle, s.epoch);
  Rng aug_rng = make_rng(seed, Stream::Augment, s.epoch);
  const AugmentationConfig aug{c.augment.noise_sigma, c.augment.scale_jitter, c.augment.dropout_prob, seed};
  const auto order = shuffled_indices(n, shuffle);
  const std::size_t dim = train.features.cols();

  double loss_sum = 0.0;
  std::size_t anchors = 0;
  std::size_t batch_no = 0;
  for (std::size_t start = 0; start < n; start += c.pretrain.batch, ++batch_no) {
    const std::size_t b = std::min(c.pretrain.batch, n - start);
    if (b < 2) continue;  // a lone pair has no negatives
    Matrix views(2 * b, dim);
    for (std::size_t i = 0; i < b; ++i) {
      auto [va, vb] = augment_pair(train.features.row(order[start + i]), aug, aug_rng);
      std::copy(va.begin(), va.end(), views.row(2 * i).begin());
      std::copy(vb.begin(), vb.end(), views.row(2 * i + 1).begin());
    }
    EncoderTape tape;
    Matrix z = encode(s.model, views, &tape);
    InfoNceResult r;
    try {
      r = info_nce_loss({std::move(z), c.pretrain.temperature});
    } catch (const DomainError& e) {
      throw NumericError("pretrain epoch " + std::to_string(s.epoch) + " batch " + std::to_string(batch_no) + ": " +
                         e.what());
    }
    if (!std::isfinite(r.loss)) {
      throw NumericError("pretrain epoch " + std::to_string(s.epoch) + " batch " + std::to_string(batch_no) +
                         ": non-finite InfoNCE loss");
    }
    auto grads = encoder_backward(s.model, tape, r.embedding_gradients);
    try {
      optimizer_step(s.optimizer, s.model.parameters(), grads);
    } catch (const NumericError& e) {
      throw NumericError("pretrain epoch " + std::to_string(s.epoch) + " batch " + std::to_string(batch_no) + ": " +
                         e.what());
    }
    loss_sum += r.loss;
    anchors += 2 * b;
  }
  s.epoch_loss.push_back(anchors ? loss_sum / static_cast<double>(anchors) : 0.0);
  ++s.epoch;
}

// Runs the remaining pretraining epochs.
inline Encoder pretrain(const ExperimentConfig& c, const TrainingView& train, std::uint64_t seed,
                        PretrainState* state_out = nullptr) {
  PretrainState s = begin_pretrain(c, seed);
  while (s.epoch < c.pretrain.epochs) pretrain_epoch(s, c, train, seed);
  Encoder model = s.model;
  if (state_out != nullptr) *state_out = std::move(s);
  return model;
}

// ---------------------------------------------------------------------------
// Fine-tuning

struct FinetuneState {
  Encoder model;
  CenterSet centers;
  OptimizerState optimizer;
  std::size_t epoch = 0;
  std::vector<double> epoch_loss;       // summed batch objective per epoch
  std::vector<double> objective;        // full train objective; entry 0 is before training
  std::vector<double> epoch_auc;        // validation AUC after each epoch
  std::vector<std::size_t> live_centers;             // after each epoch's pruning
  std::vector<std::vector<std::size_t>> counts;      // per-center cardinality each epoch

  friend bool operator==(const FinetuneState&, const FinetuneState&) = default;
};

inline MadBatch full_mad_batch(const ExperimentConfig& c, const TrainingView& train, Matrix embeddings) {
  return MadBatch{std::move(embeddings), train.labels, c.finetune.eta, train.unlabeled_count(), train.labeled_count(),
                  c.finetune.eps_d};
}

inline double mad_objective(const ExperimentConfig& c, const Encoder& model, const CenterSet& centers,
                            const TrainingView& train) {
  return mad_loss(full_mad_batch(c, train, encode(model, train.features)), centers).loss;
}

inline CenterSet init_centers(const ExperimentConfig& c, const Encoder& model, const TrainingView& train,
                              std::uint64_t seed) {
  const auto rows = presumed_normal_rows(train);
  if (rows.empty()) throw ConfigError("no presumed-normal training samples for center initialization");
  const Matrix emb = encode(model, gather_rows(train.features, rows));
  return kmeans(emb, c.finetune.n_s, seed, c.finetune.kmeans_iters, c.finetune.gamma);
}

inline double validation_auc(const Encoder& model, const CenterSet& centers, const EvaluationView& val) {
  return auc(anomaly_scores(encode(model, val.features), centers), val.abnormal);
}

inline FinetuneState begin_finetune(const ExperimentConfig& c, Encoder model, const TrainingView& train,
                                    std::uint64_t seed) {
  FinetuneState s;
  s.model = std::move(model);
  s.centers = init_centers(c, s.model, train, seed);
  const auto params = std::as_const(s.model).parameters();
  s.optimizer = make_optimizer(c.finetune.optimizer, c.finetune.lr, c.finetune.lambda, params);
  s.objective.push_back(mad_objective(c, s.model, s.centers, train));
  return s;
}

inline void finetune_epoch(FinetuneState& s, const ExperimentConfig& c, const TrainingView& train,
                           const EvaluationView* val, std::uint64_t seed) {
  const std::size_t n = train.size();
  const double lr = apply_lr_schedule(s.epoch, c.finetune.lr, c.finetune.milestones, c.finetune.lr_factor);
  s.optimizer.learning_rate = lr;
  Rng shuffle = make_rng(seed, Stream::FinetuneShuffle, s.epoch);
  const auto order = shuffled_indices(n, shuffle);
  const std::size_t n_total = train.unlabeled_count();
  const std::size_t m_total = train.labeled_count();

  double loss_sum = 0.0;
  std::size_t batch_no = 0;
  for (std::size_t start = 0; start < n; start += c.finetune.batch, ++batch_no) {
    const std::size_t b = std::min(c.finetune.batch, n - start);
    std::span<const std::size_t> idx(order.data() + start, b);
    MadBatch batch;
    batch.labels.reserve(b);
    for (std::size_t i : idx) batch.labels.push_back(train.labels[i]);
    batch.eta = c.finetune.eta;
    batch.n_total = n_total;
    batch.m_total = m_total;
    batch.eps_d = c.finetune.eps_d;
    EncoderTape tape;
    batch.embeddings = encode(s.model, gather_rows(train.features, idx), &tape);
    const auto r = mad_loss(batch, s.centers);
    if (!std::isfinite(r.loss)) {
      throw NumericError("finetune epoch " + std::to_string(s.epoch) + " batch " + std::to_string(batch_no) +
                         ": non-finite MAD loss");
    }
    auto grads = encoder_backward(s.model, tape, r.embedding_gradients);
    try {
      optimizer_step(s.optimizer, s.model.parameters(), grads);
    } catch (const NumericError& e) {
      throw NumericError("finetune epoch " + std::to_string(s.epoch) + " batch " + std::to_string(batch_no) + ": " +
                         e.what());
    }
    if (c.finetune.update_centers) {
      for (std::size_t j = 0; j < s.centers.size(); ++j) {
        if (!s.centers.live[j]) continue;
        auto cj = s.centers.centers.row(j);
        auto gj = r.center_gradients.row(j);
        for (std::size_t k = 0; k < cj.size(); ++k) cj[k] -= lr * gj[k];
      }
    }
    loss_sum += r.loss;
  }

  const auto rows = presumed_normal_rows(train);
  assign_and_count(encode(s.model, gather_rows(train.features, rows)), s.centers);
  s.counts.push_back(s.centers.counts);
  s.centers = prune(std::move(s.centers));
  s.live_centers.push_back(s.centers.live_count());
  s.epoch_loss.push_back(loss_sum);
  s.objective.push_back(mad_objective(c, s.model, s.centers, train));
  if (val != nullptr) s.epoch_auc.push_back(validation_auc(s.model, s.centers, *val));
  ++s.epoch;
}

// ---------------------------------------------------------------------------
// Scores

inline std::vector<double> mad_scores(const Encoder& model, const CenterSet& centers, const Matrix& x) {
  return anomaly_scores(encode(model, x), centers);
}

// k-NN distance score in the body (representation) space of `model`.
inline std::vector<double> knn_scores_body(const Encoder& model, const Matrix& reference, const Matrix& x,
                                           std::size_t k) {
  return knn_score(encode_body(model, x), encode_body(model, reference), k);
}

// k-NN distance score in the head output space of `model`.
inline std::vector<double> knn_scores_head(const Encoder& model, const Matrix& reference, const Matrix& x,
                                           std::size_t k) {
  return knn_score(encode(model, x), encode(model, reference), k);
}

// ---------------------------------------------------------------------------
// Run: one replicate, resumable at epoch granularity.

enum class Phase : std::uint32_t { Pretrain = 0, Finetune = 1, Done = 2 };

struct RunState {
  std::uint64_t seed = 0;
  std::size_t replicate = 0;
  Phase phase = Phase::Pretrain;
  PretrainState pretrain;
  FinetuneState finetune;
  double untrained_test_auc = 0.0;

  friend bool operator==(const RunState&, const RunState&) = default;
};

struct ReplicateResult {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  double val_auc = 0.0;
  double test_auc = 0.0;
  double val_auc_knn = 0.0;   // k-NN score in the pretext body space
  double test_auc_knn = 0.0;
  double untrained_test_auc = 0.0;
  std::vector<double> pretrain_loss;
  std::vector<double> epoch_auc;
  std::vector<double> objective;
  std::vector<std::size_t> live_centers;
  std::vector<std::vector<std::size_t>> counts;
};

class Run {
 public:
  Run(const ExperimentConfig& config, const SplitData& data, std::uint64_t seed, std::size_t replicate = 0)
      : config_(config), data_(&data) {
    validate(config_);
    if (data.train.dim != config_.data.dim) {
      throw ConfigError("data dim " + std::to_string(data.train.dim) + " != data.dim " +
                        std::to_string(config_.data.dim));
    }
    build_views();
    state_.seed = seed;
    state_.replicate = replicate;
    state_.pretrain = begin_pretrain(config_, seed);
    // Untrained baseline: initial body + fresh detection head, k-means centers.
    const Encoder untrained = transfer_weights(state_.pretrain.model, config_, seed);
    const CenterSet centers = init_centers(config_, untrained, train_, seed);
    state_.untrained_test_auc = auc(mad_scores(untrained, centers, test_.features), test_.abnormal);
  }

  Run(const ExperimentConfig& config, const SplitData& data, RunState state)
      : config_(config), data_(&data), state_(std::move(state)) {
    validate(config_);
    build_views();
  }

  const RunState& state() const { return state_; }
  const ExperimentConfig& config() const { return config_; }
  Phase phase() const { return state_.phase; }
  bool done() const { return state_.phase == Phase::Done; }
  const TrainingView& train_view() const { return train_; }

  // Total epochs completed across both phases.
  std::size_t epochs_completed() const { return state_.pretrain.epoch + state_.finetune.epoch; }

  // One pretraining or fine-tuning epoch (plus any phase transition it completes).
  void advance() {
    if (state_.phase == Phase::Pretrain) {
      if (state_.pretrain.epoch < config_.pretrain.epochs) {
        pretrain_epoch(state_.pretrain, config_, train_, state_.seed);
        log::debug("replicate ", state_.replicate, " pretrain epoch ", state_.pretrain.epoch, " loss ",
                   state_.pretrain.epoch_loss.back());
      }
      if (state_.pretrain.epoch >= config_.pretrain.epochs) start_finetune();
      return;
    }
    if (state_.phase == Phase::Finetune) {
      if (state_.finetune.epoch < config_.finetune.epochs) {
        finetune_epoch(state_.finetune, config_, train_, &val_, state_.seed);
        log::debug("replicate ", state_.replicate, " finetune epoch ", state_.finetune.epoch, " val auc ",
                   state_.finetune.epoch_auc.back(), " live ", state_.finetune.live_centers.back());
      }
      if (state_.finetune.epoch >= config_.finetune.epochs) state_.phase = Phase::Done;
    }
  }

  void run_to_end(const std::function<void(const Run&)>& on_epoch = {}) {
    while (!done()) {
      advance();
      if (on_epoch) on_epoch(*this);
    }
  }

  ReplicateResult result() const {
    if (!done()) throw StateError("Run::result before the run finished");
    const auto& ft = state_.finetune;
    ReplicateResult r;
    r.replicate = state_.replicate;
    r.seed = state_.seed;
    r.val_auc = auc(mad_scores(ft.model, ft.centers, val_.features), val_.abnormal);
    r.test_auc = auc(mad_scores(ft.model, ft.centers, test_.features), test_.abnormal);
    const Matrix reference = gather_rows(train_.features, presumed_normal_rows(train_));
    const Encoder& pretext = state_.pretrain.model;
    r.val_auc_knn = auc(knn_scores_body(pretext, reference, val_.features, config_.run.knn_k), val_.abnormal);
    r.test_auc_knn = auc(knn_scores_body(pretext, reference, test_.features, config_.run.knn_k), test_.abnormal);
    r.untrained_test_auc = state_.untrained_test_auc;
    r.pretrain_loss = state_.pretrain.epoch_loss;
    r.epoch_auc = ft.epoch_auc;
    r.objective = ft.objective;
    r.live_centers = ft.live_centers;
    r.counts = ft.counts;
    return r;
  }

 private:
  void build_views() {
    train_ = training_view(data_->train);
    val_ = evaluation_view(data_->validation);
    test_ = evaluation_view(data_->test);
  }

  void start_finetune() {
    Encoder mad = transfer_weights(state_.pretrain.model, config_, state_.seed);
    state_.finetune = begin_finetune(config_, std::move(mad), train_, state_.seed);
    state_.phase = config_.finetune.epochs == 0 ? Phase::Done : Phase::Finetune;
  }

  ExperimentConfig config_;
  const SplitData* data_;
  TrainingView train_;
  EvaluationView val_;
  EvaluationView test_;
  RunState state_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, config hash, config text, run state.
// Doubles are stored as raw IEEE-754 bits so restore is bit-exact.

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'D', 'L', 'A', 'B', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  RunState state;
};

namespace ckpt_detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u64(std::uint64_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f64(double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof v);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void reals(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void counts(const std::vector<std::size_t>& v) {
    u64(v.size());
    for (auto x : v) u64(x);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double x : m.values()) f64(x);
  }
  void matrices(const std::vector<Matrix>& v) {
    u64(v.size());
    for (const auto& m : v) matrix(m);
  }
  void mlp(const Mlp& m) {
    u64(m.layer_count());
    for (const auto& s : m.specs()) {
      u64(s.in_dim);
      u64(s.out_dim);
      u64(static_cast<std::uint64_t>(s.activation));
    }
    matrices(m.parameters());
  }
  void encoder(const Encoder& e) {
    mlp(e.body);
    mlp(e.head);
  }
  void optimizer(const OptimizerState& o) {
    u64(static_cast<std::uint64_t>(o.rule));
    f64(o.learning_rate);
    f64(o.weight_decay);
    u64(o.step);
    matrices(o.first_moment);
    matrices(o.second_moment);
  }
  void centers(const CenterSet& c) {
    matrix(c.centers);
    u64(c.live.size());
    for (bool b : c.live) u64(b ? 1 : 0);
    counts(c.counts);
    f64(c.gamma);
    u64(c.initial_count);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  std::uint64_t u64() {
    std::uint64_t v = 0;
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) throw CheckpointError("checkpoint truncated");
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::size_t length() {
    const auto n = u64();
    if (n > (1ULL << 32)) throw CheckpointError("checkpoint corrupt: implausible length");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    std::string s(length(), '\0');
    is_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!is_) throw CheckpointError("checkpoint truncated");
    return s;
  }
  std::vector<double> reals() {
    std::vector<double> v(length());
    for (double& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> counts() {
    std::vector<std::size_t> v(length());
    for (auto& x : v) x = static_cast<std::size_t>(u64());
    return v;
  }
  Matrix matrix() {
    const std::size_t r = length();
    const std::size_t c = length();
    std::vector<double> data(r * c);
    for (double& x : data) x = f64();
    return Matrix(r, c, std::move(data));
  }
  std::vector<Matrix> matrices() {
    std::vector<Matrix> v(length());
    for (auto& m : v) m = matrix();
    return v;
  }
  Mlp mlp() {
    std::vector<LayerSpec> specs(length());
    for (auto& s : specs) {
      s.in_dim = length();
      s.out_dim = length();
      s.activation = static_cast<Activation>(u64());
    }
    Mlp m(std::move(specs));
    auto params = matrices();
    if (params.size() != m.parameters().size()) throw CheckpointError("checkpoint corrupt: parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].same_shape(m.parameters()[i])) throw CheckpointError("checkpoint corrupt: parameter shape");
      m.parameters()[i] = std::move(params[i]);
    }
    return m;
  }
  Encoder encoder() {
    Encoder e;
    e.body = mlp();
    e.head = mlp();
    return e;
  }
  OptimizerState optimizer() {
    OptimizerState o;
    o.rule = static_cast<UpdateRule>(u64());
    o.learning_rate = f64();
    o.weight_decay = f64();
    o.step = u64();
    o.first_moment = matrices();
    o.second_moment = matrices();
    return o;
  }
  CenterSet centers() {
    CenterSet c;
    c.centers = matrix();
    c.live.resize(length());
    for (std::size_t i = 0; i < c.live.size(); ++i) c.live[i] = u64() != 0;
    c.counts = counts();
    c.gamma = f64();
    c.initial_count = length();
    return c;
  }

 private:
  std::istream& is_;
};

}  // namespace ckpt_detail

inline Checkpoint make_checkpoint(const Run& run) {
  return Checkpoint{serialize(run.config()), config_hash(run.config()), run.state()};
}

inline void write_checkpoint(const Checkpoint& ck, std::ostream& os) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  ckpt_detail::Writer w(os);
  w.u64(kCheckpointVersion);
  w.u64(ck.config_hash);
  w.str(ck.config_text);
  const RunState& s = ck.state;
  w.u64(s.seed);
  w.u64(s.replicate);
  w.u64(static_cast<std::uint64_t>(s.phase));
  w.f64(s.untrained_test_auc);
  w.encoder(s.pretrain.model);
  w.optimizer(s.pretrain.optimizer);
  w.u64(s.pretrain.epoch);
  w.reals(s.pretrain.epoch_loss);
  const bool has_ft = s.phase != Phase::Pretrain;
  w.u64(has_ft ? 1 : 0);
  if (has_ft) {
    const auto& f = s.finetune;
    w.encoder(f.model);
    w.centers(f.centers);
    w.optimizer(f.optimizer);
    w.u64(f.epoch);
    w.reals(f.epoch_loss);
    w.reals(f.objective);
    w.reals(f.epoch_auc);
    w.counts(f.live_centers);
    w.u64(f.counts.size());
    for (const auto& c : f.counts) w.counts(c);
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw CheckpointError("not a madlab checkpoint");
  ckpt_detail::Reader r(is);
  if (r.u64() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.config_text = r.str();
  if (fnv1a(ck.config_text) != ck.config_hash) throw CheckpointError("checkpoint config hash does not match its config");
  RunState& s = ck.state;
  s.seed = r.u64();
  s.replicate = r.length();
  const auto phase = r.u64();
  if (phase > 2) throw CheckpointError("checkpoint corrupt: phase");
  s.phase = static_cast<Phase>(phase);
  s.untrained_test_auc = r.f64();
  s.pretrain.model = r.encoder();
  s.pretrain.optimizer = r.optimizer();
  s.pretrain.epoch = r.length();
  s.pretrain.epoch_loss = r.reals();
  if (r.u64() != 0) {
    auto& f = s.finetune;
    f.model = r.encoder();
    f.centers = r.centers();
    f.optimizer = r.optimizer();
    f.epoch = r.length();
    f.epoch_loss = r.reals();
    f.objective = r.reals();
    f.epoch_auc = r.reals();
    f.live_centers = r.counts();
    f.counts.resize(r.length());
    for (auto& c : f.counts) c = r.counts();
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  write_checkpoint(ck, os);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

// Rebuilds a run from a checkpoint; the config must hash to the stored value.
inline Run restore_run(const Checkpoint& ck, const ExperimentConfig& config, const SplitData& data) {
  if (config_hash(config) != ck.config_hash) {
    throw CheckpointError("config hash " + hash_hex(config_hash(config)) + " does not match checkpoint " +
                          hash_hex(ck.config_hash));
  }
  return Run(config, data, ck.state);
}

// ---------------------------------------------------------------------------
// Experiment: replicates + aggregation.

struct ExperimentResult {
  std::string config_hash;
  std::vector<ReplicateResult> replicates;
  std::vector<std::pair<std::size_t, std::string>> failures;
  ReplicateStats val;
  ReplicateStats test;
};

inline GeneratorConfig replicate_data_config(const ExperimentConfig& c, std::uint64_t seed) {
  GeneratorConfig g = c.data;
  g.seed = seed;
  return g;
}

struct ExperimentHooks {
  // Called with each replicate's freshly generated data (not when data is fixed).
  std::function<void(std::size_t, const SplitData&)> on_data;
  std::function<void(const Run&)> on_epoch;
  std::function<void(const Run&)> on_done;
};

// Replicate r trains with seed run.seed + r. When `fixed_data` is null each
// replicate also draws its own data from that seed.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const SplitData* fixed_data = nullptr,
                                       const ExperimentHooks& hooks = {}) {
  validate(c);
  ExperimentResult out;
  out.config_hash = hash_hex(config_hash(c));
  for (std::size_t r = 0; r < c.run.replicates; ++r) {
    const std::uint64_t seed = c.run.seed + r;
    try {
      SplitData owned;
      const SplitData* data = fixed_data;
      if (data == nullptr) {
        owned = generate_synthetic(replicate_data_config(c, seed));
        data = &owned;
        if (hooks.on_data) hooks.on_data(r, owned);
      }
      Run run(c, *data, seed, r);
      run.run_to_end(hooks.on_epoch);
      if (hooks.on_done) hooks.on_done(run);
      out.replicates.push_back(run.result());
      log::info("replicate ", r, " (seed ", seed, "): val auc ", out.replicates.back().val_auc, ", test auc ",
                out.replicates.back().test_auc);
    } catch (const NumericError&) {
      throw;
    } catch (const std::exception& e) {
      log::error("replicate ", r, " failed: ", e.what());
      out.failures.emplace_back(r, e.what());
    }
  }
  if (out.replicates.empty()) throw StateError("run_experiment: every replicate failed");
  std::vector<double> v, t;
  for (const auto& rr : out.replicates) {
    v.push_back(rr.val_auc);
    t.push_back(rr.test_auc);
  }
  out.val = replicate_ci(v);
  out.test = replicate_ci(t);
  if (out.test.single) log::warn("single replicate: confidence half-width reported as 0");
  return out;
}

}  // namespace madlab

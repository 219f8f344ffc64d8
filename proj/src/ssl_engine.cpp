#include "goca/ssl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "goca/guided_ot.hpp"

namespace goca {

namespace {

// Which backbones feed a branch (averaged when two), which head, which prototypes.
// Backbone v always reads view v.
struct Branch {
  std::vector<int> backbones;
  int head = 0;
  int prototypes = 0;
};

std::vector<Branch> branches_of(Mode mode) {
  switch (mode) {
    case Mode::SView:
      return {{{0}, 0, 0}, {{1}, 1, 1}};
    case Mode::Avg:
      return {{{0, 1}, 0, 0}};
    case Mode::Sep:
    case Mode::Goca:
      return {{{0}, 0, 0}, {{1}, 0, 0}};
  }
  throw std::logic_error("unknown mode");
}

using Inputs = std::array<const Matrix*, 2>;

struct Forward {
  std::array<Matrix, 2> activations;  // tanh output per backbone
  Matrix hidden;
  Vector norms;
  Matrix features;
};

Forward forward(const Parameters& p, const Branch& br, const Inputs& in) {
  Forward fw;
  for (int v : br.backbones) {
    const Layer& layer = p.backbones[static_cast<std::size_t>(v)];
    Matrix pre = *in[static_cast<std::size_t>(v)] * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    fw.activations[static_cast<std::size_t>(v)] = pre.array().tanh();
  }
  fw.hidden = fw.activations[static_cast<std::size_t>(br.backbones.front())];
  if (br.backbones.size() == 2) {
    fw.hidden = 0.5 * (fw.activations[0] + fw.activations[1]);
  }
  const Layer& head = p.heads[static_cast<std::size_t>(br.head)];
  Matrix z = fw.hidden * head.weight.transpose();
  z.rowwise() += head.bias.transpose();
  fw.norms = z.rowwise().norm();
  fw.features = fw.norms.cwiseInverse().asDiagonal() * z;
  return fw;
}

void backward(const Parameters& p, const Branch& br, const Inputs& in, const Forward& fw, const Matrix& d_features,
              Parameters& grad) {
  // d z = (d f - f <f, d f>) / |z|
  const Vector radial = fw.features.cwiseProduct(d_features).rowwise().sum();
  const Matrix d_z = fw.norms.cwiseInverse().asDiagonal() * (d_features - radial.asDiagonal() * fw.features);

  const std::size_t h = static_cast<std::size_t>(br.head);
  grad.heads[h].weight.noalias() += d_z.transpose() * fw.hidden;
  grad.heads[h].bias += d_z.colwise().sum().transpose();
  const Matrix d_hidden = d_z * p.heads[h].weight / static_cast<double>(br.backbones.size());

  for (int v : br.backbones) {
    const auto idx = static_cast<std::size_t>(v);
    const Matrix& act = fw.activations[idx];
    const Matrix d_pre = d_hidden.array() * (1.0 - act.array().square());
    grad.backbones[idx].weight.noalias() += d_pre.transpose() * *in[idx];
    grad.backbones[idx].bias += d_pre.colwise().sum().transpose();
  }
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double hi = out.row(i).maxCoeff();
    const double lse = hi + std::log((out.row(i).array() - hi).exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

const PrototypeSet& prototypes_for(const Model& model, const Branch& br) {
  return br.prototypes == 0 ? model.prototypes_a : model.prototypes_b;
}

std::size_t param_blocks(const Layer& l) { return static_cast<std::size_t>(l.weight.size() + l.bias.size()); }

template <typename Fn>
void for_each_layer(Parameters& p, Fn&& fn) {
  for (auto& l : p.backbones) fn(l);
  for (auto& l : p.heads) fn(l);
}

template <typename Fn>
void for_each_layer(const Parameters& p, Fn&& fn) {
  for (const auto& l : p.backbones) fn(l);
  for (const auto& l : p.heads) fn(l);
}

Layer random_layer(Eigen::Index out, Eigen::Index in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Layer l;
  l.weight.resize(out, in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = scale * normal(rng);
  l.bias = Vector::Zero(out);
  return l;
}

Matrix gather_rows(const Matrix& src, const std::vector<Eigen::Index>& idx, std::size_t begin, std::size_t count) {
  Matrix out(static_cast<Eigen::Index>(count), src.cols());
  for (std::size_t r = 0; r < count; ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(idx[begin + r]);
  return out;
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::SView: return "sview";
    case Mode::Avg: return "avg";
    case Mode::Sep: return "sep";
    case Mode::Goca: return "goca";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) {
    if (mode_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (expected sview, avg, sep or goca)");
}

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::ViewA: return "view_a";
    case Condition::ViewB: return "view_b";
    case Condition::Fused: return "fused";
  }
  return "?";
}

Eigen::Index Parameters::size() const {
  std::size_t n = 0;
  for_each_layer(*this, [&](const Layer& l) { n += param_blocks(l); });
  return static_cast<Eigen::Index>(n);
}

Vector Parameters::flatten() const {
  Vector flat(size());
  Eigen::Index at = 0;
  for_each_layer(*this, [&](const Layer& l) {
    flat.segment(at, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  });
  return flat;
}

void Parameters::unflatten(const Vector& flat) {
  if (flat.size() != size()) throw std::invalid_argument("parameters: flat vector has wrong size");
  Eigen::Index at = 0;
  for_each_layer(*this, [&](Layer& l) {
    l.weight.reshaped<Eigen::RowMajor>() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  });
}

void Parameters::add_scaled(const Parameters& other, double scale) {
  for (std::size_t k = 0; k < 2; ++k) {
    backbones[k].weight += scale * other.backbones[k].weight;
    backbones[k].bias += scale * other.backbones[k].bias;
    heads[k].weight += scale * other.heads[k].weight;
    heads[k].bias += scale * other.heads[k].bias;
  }
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  for_each_layer(z, [](Layer& l) {
    l.weight.setZero();
    l.bias.setZero();
  });
  return z;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  if (!(temperature > 0.0)) throw std::invalid_argument("train: temperature must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (hidden_dim < 1) throw std::invalid_argument("train: hidden_dim must be >= 1");
  if (feature_dim < 2) throw std::invalid_argument("train: feature_dim must be >= 2");
  if (num_prototypes < 2) throw std::invalid_argument("train: num_prototypes must be >= 2");
  if (aug_noise < 0.0) throw std::invalid_argument("train: aug_noise must be >= 0");
  if (aug_dropout < 0.0 || aug_dropout >= 1.0) throw std::invalid_argument("train: aug_dropout must be in [0, 1)");
  solver.validate();
  proto.validate();
}

Parameters init_parameters(Mode mode, Eigen::Index input_a, Eigen::Index input_b, int hidden_dim, int feature_dim,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters p;
  p.backbones[0] = random_layer(hidden_dim, input_a, rng);
  p.backbones[1] = random_layer(hidden_dim, input_b, rng);
  p.heads[0] = random_layer(feature_dim, hidden_dim, rng);
  if (mode == Mode::SView) {
    p.heads[1] = random_layer(feature_dim, hidden_dim, rng);
  } else {
    p.heads[1] = Layer{Matrix(0, hidden_dim), Vector(0)};
  }
  return p;
}

Matrix prototype_scores(const FeatureBatch& features, const Matrix& prototypes, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("scores: temperature must be > 0");
  if (features.cols() != prototypes.cols()) throw std::invalid_argument("scores: dimension mismatch");
  return log_softmax_rows(features * prototypes.transpose() / temperature).array().exp();
}

double swapped_loss(const Matrix& targets_t, const Matrix& scores_s, const Matrix& targets_s, const Matrix& scores_t) {
  if (targets_t.rows() != scores_s.rows() || targets_t.cols() != scores_s.cols() ||
      targets_s.rows() != scores_t.rows() || targets_s.cols() != scores_t.cols() ||
      targets_t.rows() != targets_s.rows()) {
    throw std::invalid_argument("swapped_loss: shape mismatch");
  }
  auto cross_entropy = [](const Matrix& d, const Matrix& g) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      if (d.data()[k] != 0.0) total -= d.data()[k] * std::log(g.data()[k]);
    }
    return total;
  };
  return (cross_entropy(targets_t, scores_s) + cross_entropy(targets_s, scores_t)) /
         static_cast<double>(targets_t.rows());
}

Matrix augment(const Matrix& x, double noise, double dropout, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix out = x;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    out.data()[k] += noise * normal(rng);
    if (unit(rng) < dropout) out.data()[k] = 0.0;
  }
  return out;
}

StepTargets compute_targets(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg) {
  const auto branches = branches_of(model.mode);
  const Inputs slot_t{&batch.a_t, &batch.b_t};
  const Inputs slot_s{&batch.a_s, &batch.b_s};
  const Eigen::Index m = batch.size();
  const Marginals marginals = Marginals::uniform(m, model.prototypes_a.count());

  StepTargets out;
  auto record = [&](const SinkhornResult& r) {
    ++out.solves;
    if (!r.converged) ++out.nonconverged;
    return Matrix(r.plan * static_cast<double>(m));
  };

  std::vector<FeatureBatch> feat_t;
  std::vector<FeatureBatch> feat_s;
  for (const auto& br : branches) {
    feat_t.push_back(forward(model.params, br, slot_t).features);
    feat_s.push_back(forward(model.params, br, slot_s).features);
  }

  if (model.mode == Mode::Goca) {
    const Matrix& protos = model.prototypes_a.matrix();
    const CrossAssignment at = cross_guided_assign(feat_t[0], feat_t[1], protos, marginals, cfg.solver);
    const CrossAssignment as = cross_guided_assign(feat_s[0], feat_s[1], protos, marginals, cfg.solver);
    for (const auto* r : {&at.prior_a, &at.prior_b, &as.prior_a, &as.prior_b}) record(*r);
    out.t = {record(at.guided_a), record(at.guided_b)};
    out.s = {record(as.guided_a), record(as.guided_b)};
    return out;
  }

  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Matrix& protos = prototypes_for(model, branches[k]).matrix();
    out.t.push_back(record(sinkhorn(cost_from_features(feat_t[k], protos), marginals, cfg.solver)));
    out.s.push_back(record(sinkhorn(cost_from_features(feat_s[k], protos), marginals, cfg.solver)));
  }
  return out;
}

LossAndGrad loss_with_targets(const Model& model, const TwoViewBatch& batch, const StepTargets& targets,
                              double temperature) {
  const auto branches = branches_of(model.mode);
  if (targets.t.size() != branches.size() || targets.s.size() != branches.size()) {
    throw std::invalid_argument("loss: target count does not match mode");
  }
  const Inputs slot_t{&batch.a_t, &batch.b_t};
  const Inputs slot_s{&batch.a_s, &batch.b_s};
  const double inv_m = 1.0 / static_cast<double>(batch.size());

  LossAndGrad out;
  out.grad = model.params.zeros_like();
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Branch& br = branches[k];
    const Matrix& protos = prototypes_for(model, br).matrix();
    const Forward fw_t = forward(model.params, br, slot_t);
    const Forward fw_s = forward(model.params, br, slot_s);
    const Matrix log_g_t = log_softmax_rows(fw_t.features * protos.transpose() / temperature);
    const Matrix log_g_s = log_softmax_rows(fw_s.features * protos.transpose() / temperature);
    const Matrix& d_t = targets.t[k];
    const Matrix& d_s = targets.s[k];

    out.loss -= inv_m * (d_t.cwiseProduct(log_g_s).sum() + d_s.cwiseProduct(log_g_t).sum());

    // d/dlogits of -sum_n d_n log softmax_n = (sum_n d_n) g - d
    const Matrix d_logits_s = inv_m * (d_t.rowwise().sum().asDiagonal() * Matrix(log_g_s.array().exp()) - d_t);
    const Matrix d_logits_t = inv_m * (d_s.rowwise().sum().asDiagonal() * Matrix(log_g_t.array().exp()) - d_s);
    backward(model.params, br, slot_t, fw_t, d_logits_t * protos / temperature, out.grad);
    backward(model.params, br, slot_s, fw_s, d_logits_s * protos / temperature, out.grad);
  }
  return out;
}

StepResult train_step(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg) {
  StepResult out;
  out.targets = compute_targets(model, batch, cfg);
  LossAndGrad lg = loss_with_targets(model, batch, out.targets, cfg.temperature);
  out.loss = lg.loss;
  out.grad = std::move(lg.grad);
  return out;
}

StepResult goca_step(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg) {
  if (model.mode != Mode::Goca) throw std::invalid_argument("goca_step: model is not in goca mode");
  return train_step(model, batch, cfg);
}

StepResult baseline_step(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg) {
  if (model.mode == Mode::Goca) throw std::invalid_argument("baseline_step: goca mode has its own step");
  return train_step(model, batch, cfg);
}

FeatureBatch embed(const Model& model, const Matrix& view_a, const Matrix& view_b, Condition condition) {
  const Inputs in{&view_a, &view_b};
  const auto branches = branches_of(model.mode);
  if (model.mode == Mode::Avg) {
    switch (condition) {
      case Condition::ViewA: return forward(model.params, Branch{{0}, 0, 0}, in).features;
      case Condition::ViewB: return forward(model.params, Branch{{1}, 0, 0}, in).features;
      case Condition::Fused: return forward(model.params, branches[0], in).features;
    }
  }
  switch (condition) {
    case Condition::ViewA: return forward(model.params, branches[0], in).features;
    case Condition::ViewB: return forward(model.params, branches[1], in).features;
    case Condition::Fused: {
      Matrix sum = forward(model.params, branches[0], in).features + forward(model.params, branches[1], in).features;
      sum.rowwise().normalize();
      return sum;
    }
  }
  throw std::logic_error("unknown condition");
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{a, b};
  std::mt19937_64 gen(seq);
  return gen();
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  ProtoOptConfig proto = cfg.proto;
  proto.seed = mix(cfg.seed, cfg.proto.seed);
  const PrototypeSet pa = optimize_prototypes(cfg.num_prototypes, cfg.feature_dim, proto);
  if (cfg.mode != Mode::SView) return train(data, cfg, pa, pa);
  proto.seed = mix(cfg.seed + 1, cfg.proto.seed);
  return train(data, cfg, pa, optimize_prototypes(cfg.num_prototypes, cfg.feature_dim, proto));
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const PrototypeSet& prototypes_a,
                  const PrototypeSet& prototypes_b) {
  cfg.validate();
  for (const PrototypeSet* p : {&prototypes_a, &prototypes_b}) {
    if (p->dim() != cfg.feature_dim) {
      throw std::invalid_argument("train: prototype dim " + std::to_string(p->dim()) + " != feature_dim " +
                                  std::to_string(cfg.feature_dim));
    }
  }
  if (cfg.mode == Mode::SView && prototypes_a.count() != prototypes_b.count()) {
    throw std::invalid_argument("train: per-view prototype sets differ in size");
  }
  if (data.size() < cfg.batch_size) throw std::invalid_argument("train: dataset smaller than one batch");
  if (static_cast<std::size_t>(data.size()) != data.labels.size() || data.view_b.rows() != data.size()) {
    throw std::invalid_argument("train: dataset views and labels differ in length");
  }

  TrainResult out;
  out.model.mode = cfg.mode;
  out.model.params =
      init_parameters(cfg.mode, data.view_a.cols(), data.view_b.cols(), cfg.hidden_dim, cfg.feature_dim, cfg.seed);
  out.model.prototypes_a = prototypes_a;
  out.model.prototypes_b = cfg.mode == Mode::SView ? prototypes_b : prototypes_a;
  out.initial = out.model;

  std::mt19937_64 rng(mix(cfg.seed, 0x5eedULL));
  const auto n = static_cast<std::size_t>(data.size());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  out.steps_per_epoch = static_cast<int>(n / batch);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    for (std::size_t start = 0; start + batch <= n; start += batch) {
      const Matrix raw_a = gather_rows(data.view_a, order, start, batch);
      const Matrix raw_b = gather_rows(data.view_b, order, start, batch);
      TwoViewBatch b;
      b.a_t = augment(raw_a, cfg.aug_noise, cfg.aug_dropout, rng);
      b.a_s = augment(raw_a, cfg.aug_noise, cfg.aug_dropout, rng);
      b.b_t = augment(raw_b, cfg.aug_noise, cfg.aug_dropout, rng);
      b.b_s = augment(raw_b, cfg.aug_noise, cfg.aug_dropout, rng);

      const StepResult step = train_step(out.model, b, cfg);
      out.model.params.add_scaled(step.grad, -cfg.learning_rate);
      out.loss_trace.push_back(step.loss);
      out.solves += step.targets.solves;
      out.nonconverged += step.targets.nonconverged;
    }
  }
  return out;
}

}  // namespace goca

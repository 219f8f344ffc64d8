#include "goca/guided_ot.hpp"

#include <cmath>

namespace goca {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

Matrix guided_log_kernel(const CostMatrix& cost, const Matrix& prior, double lambda1, double lambda2,
                         double prior_floor) {
  require_same_shape(cost, prior, "guided kernel");
  if (!(lambda1 > 0.0) || !(lambda2 >= 0.0)) {
    throw std::invalid_argument("guided kernel: need lambda1 > 0 and lambda2 >= 0");
  }
  const Matrix log_prior = clamp_prior(prior, prior_floor).array().log();
  return (-cost + lambda2 * log_prior) / (lambda1 + lambda2);
}

}  // namespace

Matrix clamp_prior(const Matrix& prior, double floor) {
  if (!prior.allFinite()) throw std::invalid_argument("prior has non-finite entries");
  if (!(floor > 0.0)) throw std::invalid_argument("prior floor must be > 0");
  if (prior.size() > 0 && prior.minCoeff() < 0.0) throw std::invalid_argument("prior has negative entries");
  return prior.cwiseMax(floor);
}

Matrix guided_kernel(const CostMatrix& cost, const Matrix& prior, double lambda1, double lambda2,
                     double prior_floor) {
  return guided_log_kernel(cost, prior, lambda1, lambda2, prior_floor).array().exp();
}

double kl_divergence(const Matrix& plan, const Matrix& prior) {
  require_same_shape(plan, prior, "kl");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    const double d = plan.data()[k];
    if (d > 0.0) kl += d * std::log(d / prior.data()[k]);
  }
  return kl;
}

double guided_objective(const Matrix& plan, const CostMatrix& cost, const Matrix& prior, double lambda1,
                        double lambda2, double prior_floor) {
  require_same_shape(plan, prior, "guided objective");
  return transport_objective(plan, cost, lambda1) + lambda2 * kl_divergence(plan, clamp_prior(prior, prior_floor));
}

SinkhornResult guided_sinkhorn(const CostMatrix& cost, const Matrix& prior, const Marginals& marginals,
                               const SolverConfig& cfg) {
  cfg.validate();
  require_same_shape(cost, prior, "guided sinkhorn");
  if (cfg.lambda2 == 0.0) return sinkhorn(cost, marginals, cfg);
  if (!cost.allFinite()) throw std::invalid_argument("guided sinkhorn: cost has non-finite entries");
  return scale_kernel(guided_log_kernel(cost, prior, cfg.lambda1, cfg.lambda2, cfg.prior_floor), marginals, cfg);
}

CrossAssignment cross_guided_assign(const FeatureBatch& features_a, const FeatureBatch& features_b,
                                    const Matrix& prototypes, const Marginals& marginals,
                                    const SolverConfig& cfg) {
  if (features_a.rows() != features_b.rows()) {
    throw std::invalid_argument("cross assignment: views have different batch sizes");
  }
  const CostMatrix cost_a = cost_from_features(features_a, prototypes);
  const CostMatrix cost_b = cost_from_features(features_b, prototypes);

  CrossAssignment out;
  out.prior_a = sinkhorn(cost_a, marginals, cfg);
  out.prior_b = sinkhorn(cost_b, marginals, cfg);
  out.guided_a = guided_sinkhorn(cost_a, out.prior_b.plan, marginals, cfg);
  out.guided_b = guided_sinkhorn(cost_b, out.prior_a.plan, marginals, cfg);
  return out;
}

}  // namespace goca

#pragma once

#include "goca/matrix.hpp"
#include "goca/ot_core.hpp"

namespace goca {

// Prior entries floored at `floor` (never passed to log at 0).
Matrix clamp_prior(const Matrix& prior, double floor);

// K_ij = exp((-c_ij + lambda2 log d'_ij) / (lambda1 + lambda2)).
Matrix guided_kernel(const CostMatrix& cost, const Matrix& prior, double lambda1, double lambda2,
                     double prior_floor = 1e-12);

// sum d log(d / d'), 0 log 0 = 0.
double kl_divergence(const Matrix& plan, const Matrix& prior);

// <D,C> - lambda1 h(D) + lambda2 KL(D | prior).
double guided_objective(const Matrix& plan, const CostMatrix& cost, const Matrix& prior,
                        double lambda1, double lambda2, double prior_floor = 1e-12);

// Minimizer of guided_objective over U. The prior may carry any positive
// total mass. With lambda2 == 0 this is exactly sinkhorn().
SinkhornResult guided_sinkhorn(const CostMatrix& cost, const Matrix& prior, const Marginals& marginals,
                               const SolverConfig& cfg);

struct CrossAssignment {
  SinkhornResult prior_a;   // plain plan of view a
  SinkhornResult prior_b;   // plain plan of view b
  SinkhornResult guided_a;  // view a guided by prior_b
  SinkhornResult guided_b;  // view b guided by prior_a
};

// Two-stage assignment for a pair of views sharing one prototype set:
// plain plans first, then each view re-solved with the other's plan as prior.
CrossAssignment cross_guided_assign(const FeatureBatch& features_a, const FeatureBatch& features_b,
                                    const Matrix& prototypes, const Marginals& marginals,
                                    const SolverConfig& cfg);

}  // namespace goca

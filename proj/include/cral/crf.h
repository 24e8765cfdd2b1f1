#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "cral/tagset.h"

namespace cral {

// Linear-chain CRF scores. A sequence y of length N scores
//   start[y0] + sum_t E(t, y_t) + sum_{t>0} T(y_{t-1}, y_t) + stop[y_{N-1}].
struct CrfParams {
  Eigen::MatrixXd transitions;  // K x K, row = previous tag
  Eigen::VectorXd start;        // K
  Eigen::VectorXd stop;         // K

  static CrfParams zeros(int num_tags);
  int num_tags() const { return static_cast<int>(start.size()); }
};

// token index -> required tag. Absent indices are unconstrained.
using PartialLabeling = std::map<std::size_t, TagId>;

// All routines take an N x K emission matrix and throw InvalidArgument on
// N == 0, shape mismatches, or non-finite scores.
double crf_log_partition(const Eigen::MatrixXd& emissions, const CrfParams& crf);

// Row t holds P(y_t = j | x).
Eigen::MatrixXd crf_marginals(const Eigen::MatrixXd& emissions, const CrfParams& crf);

// Highest-scoring sequence; ties resolve toward the lower tag index.
std::vector<TagId> viterbi(const Eigen::MatrixXd& emissions, const CrfParams& crf);

// log p(Y_L | x): log-partition restricted to sequences agreeing with the
// constraints, minus the full log-partition. Always <= 0.
double constrained_log_likelihood(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                                  const PartialLabeling& constraints);

// Log score of one complete tag sequence (unnormalized).
double sequence_score(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                      const std::vector<TagId>& tags);

// Negative constrained log-likelihood and its gradient with respect to the
// emissions and the CRF parameters.
struct CrfLossGradient {
  double loss = 0.0;
  Eigen::MatrixXd d_emissions;
  Eigen::MatrixXd d_transitions;
  Eigen::VectorXd d_start;
  Eigen::VectorXd d_stop;
};

CrfLossGradient crf_constrained_nll(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                                    const PartialLabeling& constraints);

}  // namespace cral

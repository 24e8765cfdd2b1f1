#include "cral/crf.h"

#include <cmath>
#include <limits>
#include <string>

#include "cral/error.h"

namespace cral {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

void validate(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
  const auto k = crf.num_tags();
  if (emissions.rows() == 0) throw InvalidArgument("CRF input has no positions");
  if (emissions.cols() != k || crf.transitions.rows() != k || crf.transitions.cols() != k ||
      crf.stop.size() != k) {
    throw InvalidArgument("CRF shape mismatch: emissions have " +
                          std::to_string(emissions.cols()) + " tags, CRF has " +
                          std::to_string(k));
  }
  if (!emissions.allFinite() || !crf.transitions.allFinite() || !crf.start.allFinite() ||
      !crf.stop.allFinite()) {
    throw InvalidArgument("CRF scores must be finite");
  }
}

// Emissions with -inf outside the allowed tag at constrained positions.
Eigen::MatrixXd masked(const Eigen::MatrixXd& emissions, const PartialLabeling& constraints) {
  Eigen::MatrixXd out = emissions;
  const auto n = static_cast<std::size_t>(emissions.rows());
  for (const auto& [t, tag] : constraints) {
    if (t >= n) {
      throw InvalidArgument("constraint at token " + std::to_string(t) +
                            " is outside a sequence of length " + std::to_string(n));
    }
    if (tag < 0 || tag >= emissions.cols()) {
      throw InvalidArgument("constraint tag " + std::to_string(tag) + " is out of range");
    }
    const double keep = out(static_cast<Eigen::Index>(t), tag);
    out.row(static_cast<Eigen::Index>(t)).setConstant(kNegInf);
    out(static_cast<Eigen::Index>(t), tag) = keep;
  }
  return out;
}

struct Lattice {
  Eigen::MatrixXd alpha;  // N x K, includes start and emissions up to t
  Eigen::MatrixXd beta;   // N x K, includes transitions/emissions after t and stop
  double log_z = 0.0;
};

Lattice forward_backward(const Eigen::MatrixXd& e, const CrfParams& crf) {
  const Eigen::Index n = e.rows();
  const Eigen::Index k = e.cols();
  Lattice lat;
  lat.alpha.resize(n, k);
  lat.beta.resize(n, k);
  lat.alpha.row(0) = crf.start.transpose() + e.row(0);
  Eigen::VectorXd scratch(k);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      scratch = lat.alpha.row(t - 1).transpose() + crf.transitions.col(j);
      lat.alpha(t, j) = log_sum_exp(scratch) + e(t, j);
    }
  }
  lat.beta.row(n - 1) = crf.stop.transpose();
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      scratch = crf.transitions.row(i).transpose() + e.row(t + 1).transpose() +
                lat.beta.row(t + 1).transpose();
      lat.beta(t, i) = log_sum_exp(scratch);
    }
  }
  lat.log_z = log_sum_exp((lat.alpha.row(n - 1) + crf.stop.transpose()).transpose());
  return lat;
}

Eigen::MatrixXd node_marginals(const Lattice& lat) {
  Eigen::MatrixXd m = (lat.alpha + lat.beta).array() - lat.log_z;
  m = m.array().exp();
  return m;
}

// Expected transition counts sum_t P(y_{t-1}=i, y_t=j).
Eigen::MatrixXd pair_marginals(const Lattice& lat, const Eigen::MatrixXd& e,
                               const CrfParams& crf) {
  const Eigen::Index n = e.rows();
  const Eigen::Index k = e.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const double a = lat.alpha(t - 1, i);
      if (a == kNegInf) continue;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double s = a + crf.transitions(i, j) + e(t, j) + lat.beta(t, j) - lat.log_z;
        out(i, j) += std::exp(s);
      }
    }
  }
  return out;
}

}  // namespace

CrfParams CrfParams::zeros(int num_tags) {
  return {Eigen::MatrixXd::Zero(num_tags, num_tags), Eigen::VectorXd::Zero(num_tags),
          Eigen::VectorXd::Zero(num_tags)};
}

double crf_log_partition(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
  validate(emissions, crf);
  return forward_backward(emissions, crf).log_z;
}

Eigen::MatrixXd crf_marginals(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
  validate(emissions, crf);
  Eigen::MatrixXd m = node_marginals(forward_backward(emissions, crf));
  // Remove floating-point drift so rows sum to one.
  for (Eigen::Index t = 0; t < m.rows(); ++t) m.row(t) /= m.row(t).sum();
  return m;
}

std::vector<TagId> viterbi(const Eigen::MatrixXd& emissions, const CrfParams& crf) {
  validate(emissions, crf);
  const Eigen::Index n = emissions.rows();
  const Eigen::Index k = emissions.cols();
  Eigen::MatrixXd score(n, k);
  Eigen::MatrixXi back(n, k);
  score.row(0) = crf.start.transpose() + emissions.row(0);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (Eigen::Index i = 0; i < k; ++i) {
        const double s = score(t - 1, i) + crf.transitions(i, j);
        if (s > best) {
          best = s;
          arg = static_cast<int>(i);
        }
      }
      score(t, j) = best + emissions(t, j);
      back(t, j) = arg;
    }
  }
  double best = kNegInf;
  int last = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double s = score(n - 1, j) + crf.stop(j);
    if (s > best) {
      best = s;
      last = static_cast<int>(j);
    }
  }
  std::vector<TagId> path(static_cast<std::size_t>(n));
  path.back() = last;
  for (Eigen::Index t = n - 1; t > 0; --t) {
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  }
  return path;
}

double sequence_score(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                      const std::vector<TagId>& tags) {
  validate(emissions, crf);
  if (tags.size() != static_cast<std::size_t>(emissions.rows())) {
    throw InvalidArgument("tag sequence length does not match emissions");
  }
  double s = crf.start(tags.front()) + crf.stop(tags.back());
  for (std::size_t t = 0; t < tags.size(); ++t) {
    s += emissions(static_cast<Eigen::Index>(t), tags[t]);
    if (t > 0) s += crf.transitions(tags[t - 1], tags[t]);
  }
  return s;
}

double constrained_log_likelihood(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                                  const PartialLabeling& constraints) {
  validate(emissions, crf);
  const double log_z = forward_backward(emissions, crf).log_z;
  if (constraints.empty()) return 0.0;
  const double log_zc = forward_backward(masked(emissions, constraints), crf).log_z;
  return std::min(0.0, log_zc - log_z);
}

CrfLossGradient crf_constrained_nll(const Eigen::MatrixXd& emissions, const CrfParams& crf,
                                    const PartialLabeling& constraints) {
  validate(emissions, crf);
  const Eigen::Index k = emissions.cols();
  const Eigen::Index n = emissions.rows();
  CrfLossGradient g;
  g.d_emissions = Eigen::MatrixXd::Zero(n, k);
  g.d_transitions = Eigen::MatrixXd::Zero(k, k);
  g.d_start = Eigen::VectorXd::Zero(k);
  g.d_stop = Eigen::VectorXd::Zero(k);
  if (constraints.empty()) return g;

  const Eigen::MatrixXd clamped = masked(emissions, constraints);
  const Lattice full = forward_backward(emissions, crf);
  const Lattice con = forward_backward(clamped, crf);
  g.loss = full.log_z - con.log_z;

  const Eigen::MatrixXd m_full = node_marginals(full);
  const Eigen::MatrixXd m_con = node_marginals(con);
  g.d_emissions = m_full - m_con;
  g.d_transitions = pair_marginals(full, emissions, crf) - pair_marginals(con, clamped, crf);
  g.d_start = (m_full.row(0) - m_con.row(0)).transpose();
  g.d_stop = (m_full.row(n - 1) - m_con.row(n - 1)).transpose();
  return g;
}

}  // namespace cral

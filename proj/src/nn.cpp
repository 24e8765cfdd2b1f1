#include "cral/nn.h"

#include <cmath>

namespace cral::nn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // Box-Muller; one draw per call keeps the stream simple to reason about.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  if (p <= 0.0) return {};
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = rng.bernoulli(p) ? 0.0 : keep;
  }
  return mask;
}

void glorot_init(Eigen::MatrixXd& m, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-s, s);
  }
}

LstmParams LstmParams::zeros(int input_dim, int hidden) {
  return {Eigen::MatrixXd::Zero(4 * hidden, input_dim), Eigen::MatrixXd::Zero(4 * hidden, hidden),
          Eigen::VectorXd::Zero(4 * hidden)};
}

void LstmParams::init(Rng& rng) {
  const int h = hidden();
  glorot_init(w_in, rng);
  glorot_init(w_rec, rng);
  bias.setZero();
  bias.segment(h, h).setOnes();  // forget gate
}

Eigen::MatrixXd lstm_forward(const LstmParams& p, const Eigen::MatrixXd& x, bool reverse,
                             LstmCache* cache) {
  const Eigen::Index len = x.rows();
  const Eigen::Index h = p.hidden();
  Eigen::MatrixXd pre = x * p.w_in.transpose();
  pre.rowwise() += p.bias.transpose();

  Eigen::MatrixXd gates(len, 4 * h);
  Eigen::MatrixXd cell(len, h);
  Eigen::MatrixXd hidden(len, h);
  Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd z(4 * h);
  for (Eigen::Index step = 0; step < len; ++step) {
    const Eigen::Index t = reverse ? len - 1 - step : step;
    z.noalias() = pre.row(t) + h_prev * p.w_rec.transpose();
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = sigmoid(z(j));
      const double f = sigmoid(z(h + j));
      const double g = std::tanh(z(2 * h + j));
      const double o = sigmoid(z(3 * h + j));
      const double c = f * c_prev(j) + i * g;
      gates(t, j) = i;
      gates(t, h + j) = f;
      gates(t, 2 * h + j) = g;
      gates(t, 3 * h + j) = o;
      cell(t, j) = c;
      hidden(t, j) = o * std::tanh(c);
    }
    h_prev = hidden.row(t);
    c_prev = cell.row(t);
  }
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->cell = std::move(cell);
    cache->hidden = hidden;
    cache->reverse = reverse;
  }
  return hidden;
}

Eigen::MatrixXd lstm_backward(const LstmParams& p, const LstmCache& cache,
                              const Eigen::MatrixXd& d_hidden, LstmParams& grad) {
  const Eigen::Index len = cache.x.rows();
  const Eigen::Index h = p.hidden();
  Eigen::MatrixXd dz(len, 4 * h);
  Eigen::RowVectorXd dh_carry = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd dc_carry = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd dz_t(4 * h);
  for (Eigen::Index step = len - 1; step >= 0; --step) {
    const Eigen::Index t = cache.reverse ? len - 1 - step : step;
    const bool first = step == 0;
    const Eigen::Index prev = cache.reverse ? t + 1 : t - 1;
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = cache.gates(t, j);
      const double f = cache.gates(t, h + j);
      const double g = cache.gates(t, 2 * h + j);
      const double o = cache.gates(t, 3 * h + j);
      const double tc = std::tanh(cache.cell(t, j));
      const double c_prev = first ? 0.0 : cache.cell(prev, j);
      const double dh = d_hidden(t, j) + dh_carry(j);
      const double dc = dc_carry(j) + dh * o * (1.0 - tc * tc);
      dz_t(j) = dc * g * i * (1.0 - i);
      dz_t(h + j) = dc * c_prev * f * (1.0 - f);
      dz_t(2 * h + j) = dc * i * (1.0 - g * g);
      dz_t(3 * h + j) = dh * tc * o * (1.0 - o);
      dc_carry(j) = dc * f;
    }
    dz.row(t) = dz_t;
    if (!first) {
      grad.w_rec.noalias() += dz_t.transpose() * cache.hidden.row(prev);
    }
    dh_carry.noalias() = dz_t * p.w_rec;
  }
  grad.w_in.noalias() += dz.transpose() * cache.x;
  grad.bias += dz.colwise().sum().transpose();
  return dz * p.w_in;
}

AttentionParams AttentionParams::zeros(int dim) {
  return {Eigen::MatrixXd::Zero(dim, dim), Eigen::MatrixXd::Zero(dim, dim),
          Eigen::MatrixXd::Zero(dim, dim)};
}

void AttentionParams::init(Rng& rng) {
  glorot_init(wq, rng);
  glorot_init(wk, rng);
  glorot_init(wv, rng);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Eigen::MatrixXd attention_forward(const AttentionParams& p, const Eigen::MatrixXd& x,
                                  AttentionCache* cache) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.wq.cols()));
  Eigen::MatrixXd q = x * p.wq;
  Eigen::MatrixXd k = x * p.wk;
  Eigen::MatrixXd v = x * p.wv;
  Eigen::MatrixXd weights = softmax_rows((q * k.transpose()) * scale);
  Eigen::MatrixXd out = weights * v;
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
  }
  return out;
}

Eigen::MatrixXd attention_backward(const AttentionParams& p, const AttentionCache& cache,
                                   const Eigen::MatrixXd& d_out, AttentionParams& grad) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.wq.cols()));
  const Eigen::MatrixXd& a = cache.weights;
  Eigen::MatrixXd dv = a.transpose() * d_out;
  Eigen::MatrixXd da = d_out * cache.v.transpose();
  Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
  Eigen::MatrixXd ds = a.array() * (da.colwise() - row_dot).array();
  ds *= scale;
  Eigen::MatrixXd dq = ds * cache.k;
  Eigen::MatrixXd dk = ds.transpose() * cache.q;
  grad.wq.noalias() += cache.x.transpose() * dq;
  grad.wk.noalias() += cache.x.transpose() * dk;
  grad.wv.noalias() += cache.x.transpose() * dv;
  return dq * p.wq.transpose() + dk * p.wk.transpose() + dv * p.wv.transpose();
}

LinearParams LinearParams::zeros(int input_dim, int output_dim) {
  return {Eigen::MatrixXd::Zero(output_dim, input_dim), Eigen::VectorXd::Zero(output_dim)};
}

void LinearParams::init(Rng& rng) {
  glorot_init(w, rng);
  b.setZero();
}

}  // namespace cral::nn

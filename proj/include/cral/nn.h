#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cral::nn {

// Portable deterministic random source. Only raw 64-bit draws from the
// engine are used, so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[static_cast<std::ptrdiff_t>(i - 1)],
                first[static_cast<std::ptrdiff_t>(below(i))]);
    }
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Inverted-dropout mask: entries are 0 or 1/(1-p). Returns an empty matrix
// when p == 0 so callers can skip the multiply.
Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

void glorot_init(Eigen::MatrixXd& m, Rng& rng);

struct LstmParams {
  Eigen::MatrixXd w_in;   // 4H x D, gate blocks ordered i, f, g, o
  Eigen::MatrixXd w_rec;  // 4H x H
  Eigen::VectorXd bias;   // 4H

  static LstmParams zeros(int input_dim, int hidden);
  void init(Rng& rng);
  int hidden() const { return static_cast<int>(w_rec.cols()); }
  int input_dim() const { return static_cast<int>(w_in.cols()); }
};

struct LstmCache {
  Eigen::MatrixXd x;      // L x D
  Eigen::MatrixXd gates;  // L x 4H, post-activation
  Eigen::MatrixXd cell;   // L x H
  Eigen::MatrixXd hidden; // L x H
  bool reverse = false;
};

// Runs over the rows of x (right to left when reverse); row t of the result
// is the state after consuming x.row(t).
Eigen::MatrixXd lstm_forward(const LstmParams& p, const Eigen::MatrixXd& x, bool reverse,
                             LstmCache* cache);

// Accumulates parameter gradients into grad and returns dL/dx.
Eigen::MatrixXd lstm_backward(const LstmParams& p, const LstmCache& cache,
                              const Eigen::MatrixXd& d_hidden, LstmParams& grad);

struct BiLstmParams {
  LstmParams fwd;
  LstmParams bwd;

  static BiLstmParams zeros(int input_dim, int hidden) {
    return {LstmParams::zeros(input_dim, hidden), LstmParams::zeros(input_dim, hidden)};
  }
  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }
};

// Single-head scaled dot-product self-attention over the rows of x.
struct AttentionParams {
  Eigen::MatrixXd wq, wk, wv;  // d x d, applied as x * w

  static AttentionParams zeros(int dim);
  void init(Rng& rng);
};

struct AttentionCache {
  Eigen::MatrixXd x, q, k, v, weights;
};

Eigen::MatrixXd attention_forward(const AttentionParams& p, const Eigen::MatrixXd& x,
                                  AttentionCache* cache);
Eigen::MatrixXd attention_backward(const AttentionParams& p, const AttentionCache& cache,
                                   const Eigen::MatrixXd& d_out, AttentionParams& grad);

struct LinearParams {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out

  static LinearParams zeros(int input_dim, int output_dim);
  void init(Rng& rng);
};

// Numerically stable row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// A named view over one parameter tensor, used for optimizers, checkpoints
// and gradient audits.
struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
};

template <class Derived>
TensorRef tensor_ref(std::string name, Eigen::PlainObjectBase<Derived>& m) {
  return {std::move(name), m.data(), m.rows(), m.cols()};
}

}  // namespace cral::nn

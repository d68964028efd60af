#pragma once

// Dense ReLU network with a linear output layer, squared-error losses and
// Adam. Samples are stored column-wise (one column per sample).

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "mcast/model.hpp"

namespace mcast {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

class Mlp {
 public:
  Mlp() = default;

  /// He-style uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases.
  Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
    allocate();
    for (std::size_t l = 0; l < w_.size(); ++l) {
      double a = std::sqrt(6.0 / sizes_[l]);
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index i = 0; i < w_[l].size(); ++i) w_[l].data()[i] = u(rng);
    }
  }

  static Mlp zeros(std::vector<int> sizes) {
    Mlp m;
    m.sizes_ = std::move(sizes);
    m.allocate();
    return m;
  }

  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return w_.size(); }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Eigen::MatrixXd& weight(std::size_t l) { return w_[l]; }
  Eigen::VectorXd& bias(std::size_t l) { return b_[l]; }
  const Eigen::MatrixXd& weight(std::size_t l) const { return w_[l]; }
  const Eigen::VectorXd& bias(std::size_t l) const { return b_[l]; }
  long adam_steps() const { return t_; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) n += static_cast<std::size_t>(w_[l].size() + b_[l].size());
    return n;
  }

  /// Parameters flattened layer by layer: W (column-major) then b.
  std::vector<double> params() const {
    std::vector<double> p;
    p.reserve(num_params());
    for (std::size_t l = 0; l < w_.size(); ++l) {
      p.insert(p.end(), w_[l].data(), w_[l].data() + w_[l].size());
      p.insert(p.end(), b_[l].data(), b_[l].data() + b_[l].size());
    }
    return p;
  }

  void set_params(const std::vector<double>& p) {
    if (p.size() != num_params()) throw std::invalid_argument("set_params: size mismatch");
    std::size_t k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      std::memcpy(w_[l].data(), p.data() + k, sizeof(double) * static_cast<std::size_t>(w_[l].size()));
      k += static_cast<std::size_t>(w_[l].size());
      std::memcpy(b_[l].data(), p.data() + k, sizeof(double) * static_cast<std::size_t>(b_[l].size()));
      k += static_cast<std::size_t>(b_[l].size());
    }
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    check_input(x);
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      Eigen::MatrixXd z = w_[l] * a;
      z.colwise() += b_[l];
      if (l + 1 < w_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    return forward(Eigen::MatrixXd(x)).col(0);
  }

  /// L = (1/n) sum_i ||f(x_i) - y_i||^2 over all outputs.
  double mse_and_grad(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, MlpGradients& g) const {
    std::vector<Eigen::MatrixXd> acts;
    Eigen::MatrixXd out = forward_cached(x, acts);
    if (y.rows() != out.rows() || y.cols() != out.cols()) throw std::invalid_argument("mse: target shape");
    Eigen::MatrixXd err = out - y;
    double n = static_cast<double>(x.cols());
    backward(acts, (2.0 / n) * err, g);
    return err.squaredNorm() / n;
  }

  /// Q-learning loss: only output `actions[i]` of sample i is regressed
  /// onto `targets[i]`; the other outputs get zero gradient.
  double masked_mse_and_grad(const Eigen::MatrixXd& x, const std::vector<int>& actions,
                             const Eigen::VectorXd& targets, MlpGradients& g) const {
    std::vector<Eigen::MatrixXd> acts;
    Eigen::MatrixXd out = forward_cached(x, acts);
    const Eigen::Index n = x.cols();
    if (static_cast<Eigen::Index>(actions.size()) != n || targets.size() != n)
      throw std::invalid_argument("masked_mse: batch size mismatch");
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(out.rows(), n);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int a = actions[static_cast<std::size_t>(i)];
      if (a < 0 || a >= out.rows()) throw std::out_of_range("masked_mse: action index");
      double e = out(a, i) - targets(i);
      loss += e * e;
      delta(a, i) = 2.0 * e / static_cast<double>(n);
    }
    backward(acts, delta, g);
    return loss / static_cast<double>(n);
  }

  /// d f_k / d x at a single input, by backpropagation.
  Eigen::VectorXd input_gradient(const Eigen::VectorXd& x, int k) const {
    std::vector<Eigen::MatrixXd> acts;
    Eigen::MatrixXd out = forward_cached(Eigen::MatrixXd(x), acts);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(out.rows(), 1);
    delta(k, 0) = 1.0;
    for (std::size_t l = w_.size(); l-- > 0;) {
      Eigen::MatrixXd prev = w_[l].transpose() * delta;
      if (l > 0) prev = prev.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
      delta = std::move(prev);
    }
    return delta.col(0);
  }

  /// Bias-corrected Adam with learning rate `lr`.
  void adam_step(const MlpGradients& g, double lr, const AdamConfig& cfg = {}) {
    if (g.dw.size() != w_.size()) throw std::invalid_argument("adam_step: gradient shape");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    auto update = [&](auto& p, const auto& grad, auto& m, auto& v) {
      if (grad.rows() != p.rows() || grad.cols() != p.cols()) throw std::invalid_argument("adam_step: gradient shape");
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    };
    for (std::size_t l = 0; l < w_.size(); ++l) {
      update(w_[l], g.dw[l], mw_[l], vw_[l]);
      update(b_[l], g.db[l], mb_[l], vb_[l]);
    }
  }

  /// Parameters only; this network's Adam state is kept.
  void copy_weights_from(const Mlp& src) {
    if (src.sizes_ != sizes_) throw std::invalid_argument("copy_weights: architecture mismatch");
    w_ = src.w_;
    b_ = src.b_;
  }

  const Eigen::MatrixXd& first_moment_w(std::size_t l) const { return mw_[l]; }
  const Eigen::MatrixXd& second_moment_w(std::size_t l) const { return vw_[l]; }

  // Snapshot: "MCASTMLP", u64 layer-count, u64 sizes..., f64 params (all
  // little-endian, order as params()).
  void save(std::ostream& os) const {
    os.write("MCASTMLP", 8);
    write_u64(os, sizes_.size());
    for (int s : sizes_) write_u64(os, static_cast<std::uint64_t>(s));
    for (double p : params()) write_u64(os, std::bit_cast<std::uint64_t>(p));
    if (!os) throw std::runtime_error("mlp snapshot: write failed");
  }

  static Mlp load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MCASTMLP", 8) != 0) throw std::runtime_error("mlp snapshot: bad magic");
    std::uint64_t n = read_u64(is);
    if (n < 2 || n > 64) throw std::runtime_error("mlp snapshot: bad layer count");
    std::vector<int> sizes;
    for (std::uint64_t i = 0; i < n; ++i) sizes.push_back(static_cast<int>(read_u64(is)));
    Mlp m = zeros(sizes);
    std::vector<double> p(m.num_params());
    for (double& v : p) v = std::bit_cast<double>(read_u64(is));
    m.set_params(p);
    return m;
  }

 private:
  void allocate() {
    if (sizes_.size() < 2) throw std::invalid_argument("mlp: need at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw std::invalid_argument("mlp: layer sizes must be positive");
    const std::size_t n = sizes_.size() - 1;
    w_.resize(n);
    b_.resize(n);
    mw_.resize(n);
    vw_.resize(n);
    mb_.resize(n);
    vb_.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
      w_[l] = Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]);
      b_[l] = Eigen::VectorXd::Zero(sizes_[l + 1]);
      mw_[l] = vw_[l] = Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]);
      mb_[l] = vb_[l] = Eigen::VectorXd::Zero(sizes_[l + 1]);
    }
  }

  void check_input(const Eigen::MatrixXd& x) const {
    if (x.rows() != sizes_.front()) throw std::invalid_argument("mlp: input size mismatch");
  }

  // acts[l] is the input to layer l (acts[0] = x); returns the output.
  Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& x, std::vector<Eigen::MatrixXd>& acts) const {
    check_input(x);
    acts.assign(1, x);
    for (std::size_t l = 0; l < w_.size(); ++l) {
      Eigen::MatrixXd z = w_[l] * acts.back();
      z.colwise() += b_[l];
      if (l + 1 == w_.size()) return z;
      acts.push_back(z.cwiseMax(0.0));
    }
    return {};
  }

  void backward(const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd delta, MlpGradients& g) const {
    g.dw.resize(w_.size());
    g.db.resize(w_.size());
    for (std::size_t l = w_.size(); l-- > 0;) {
      g.dw[l].noalias() = delta * acts[l].transpose();
      g.db[l] = delta.rowwise().sum();
      if (l > 0) {
        Eigen::MatrixXd prev = w_[l].transpose() * delta;
        delta = prev.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
      }
    }
  }

  static void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  }

  static std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("mlp snapshot: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> w_;
  std::vector<Eigen::VectorXd> b_;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
  long t_ = 0;
};

}  // namespace mcast

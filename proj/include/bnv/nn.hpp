#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "bnv/parallel.hpp"
#include "bnv/rng.hpp"

namespace bnv::nn {

// Row-major doubles throughout; rows are batch samples. 64-bit keeps the
// finite-difference gradient checks at the 1e-6 level meaningful.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kIdentity };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kRelu;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

struct Mlp {
  std::vector<DenseLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  std::size_t parameter_count() const;
};

// Glorot-uniform weights, zero biases. Hidden layers get `hidden`, the last
// layer `last` as activation.
Mlp make_mlp(int input_dim, const std::vector<int>& layer_sizes, Activation hidden,
             Activation last, Rng& rng);

// Holds everything backward needs: the input to each layer plus each layer's
// pre-activation values. Valid only for the forward call that produced it.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;
  bool valid() const { return !inputs.empty() && inputs.size() == preacts.size(); }
};

// y = f(x), batch by rows. Rows are processed in fixed chunks so the parallel
// and serial paths produce bit-identical results.
Matrix mlp_forward(const Mlp& net, const Matrix& x, ForwardCache* cache = nullptr,
                   ExecMode mode = ExecMode::kParallel);

struct MlpGrads {
  std::vector<Matrix> dweight;
  std::vector<Vector> dbias;

  void set_zero(const Mlp& net);
  void add(const MlpGrads& other);
  void scale(double s);
};

// Exact gradients of the cached forward pass. Returns dL/dx; accumulates
// weight/bias gradients into `grads` when given (summed over the batch).
Matrix mlp_backward(const Mlp& net, const ForwardCache& cache, const Matrix& dl_dy,
                    MlpGrads* grads = nullptr, ExecMode mode = ExecMode::kParallel);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;  // first moment, parameter-shaped
  Vector v;  // second moment
  std::int64_t t = 0;

  static AdamState zeros(Eigen::Index n) {
    AdamState s;
    s.m = Vector::Zero(n);
    s.v = Vector::Zero(n);
    return s;
  }
};

// Standard bias-corrected Adam update, in place. Rejects non-finite gradients
// before touching any state, so a failed step leaves params unchanged.
void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad, AdamState& state,
               const AdamConfig& cfg);

// Per-layer Adam over a whole network.
class MlpAdam {
 public:
  explicit MlpAdam(const Mlp& net);
  void step(Mlp& net, const MlpGrads& grads, const AdamConfig& cfg);

 private:
  std::vector<AdamState> weight_states_;
  std::vector<AdamState> bias_states_;
};

// Max over components of |analytic - central_difference| / max(|fd|, floor).
// The scaled-wrong-gradient sanity case (analytic = 2 * true) reports ~1.
double finite_diff_max_rel_error(const std::function<double(const Vector&)>& f, const Vector& x,
                                 const Vector& analytic_grad, double h = 1e-5);

}  // namespace bnv::nn

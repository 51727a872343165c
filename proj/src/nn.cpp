#include "bnv/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace bnv::nn {

namespace {

constexpr std::size_t kRowChunk = 512;

inline void apply_activation(Activation act, const Matrix& z, Matrix& a) {
  if (act == Activation::kRelu)
    a = z.cwiseMax(0.0);
  else
    a = z;
}

}  // namespace

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size()) + l.bias.size();
  return n;
}

Mlp make_mlp(int input_dim, const std::vector<int>& layer_sizes, Activation hidden,
             Activation last, Rng& rng) {
  if (layer_sizes.empty()) throw std::invalid_argument("make_mlp: no layers");
  Mlp net;
  int in = input_dim;
  for (std::size_t k = 0; k < layer_sizes.size(); ++k) {
    DenseLayer layer;
    const int out = layer_sizes[k];
    const double bound = std::sqrt(6.0 / (in + out));
    layer.weight.resize(out, in);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = rng.uniform(-bound, bound);
    layer.bias = Vector::Zero(out);
    layer.activation = (k + 1 == layer_sizes.size()) ? last : hidden;
    net.layers.push_back(std::move(layer));
    in = out;
  }
  return net;
}

Matrix mlp_forward(const Mlp& net, const Matrix& x, ForwardCache* cache, ExecMode mode) {
  if (net.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
  if (x.cols() != net.input_dim())
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols()) +
                                " columns, network expects " + std::to_string(net.input_dim()));
  const std::size_t n_layers = net.layers.size();
  if (cache) {
    cache->inputs.assign(n_layers, Matrix());
    cache->preacts.assign(n_layers, Matrix());
    for (std::size_t k = 0; k < n_layers; ++k) {
      const Eigen::Index rows = x.rows();
      cache->inputs[k].resize(rows, net.layers[k].in_dim());
      cache->preacts[k].resize(rows, net.layers[k].out_dim());
    }
  }
  Matrix y(x.rows(), net.output_dim());

  parallel_for_chunks(
      static_cast<std::size_t>(x.rows()), kRowChunk,
      [&](std::size_t begin, std::size_t end) {
        const Eigen::Index b = static_cast<Eigen::Index>(begin);
        const Eigen::Index n = static_cast<Eigen::Index>(end - begin);
        Matrix a = x.middleRows(b, n);
        for (std::size_t k = 0; k < n_layers; ++k) {
          const DenseLayer& layer = net.layers[k];
          if (cache) cache->inputs[k].middleRows(b, n) = a;
          Matrix z = a * layer.weight.transpose();
          z.rowwise() += layer.bias.transpose();
          if (cache) cache->preacts[k].middleRows(b, n) = z;
          apply_activation(layer.activation, z, a);
        }
        y.middleRows(b, n) = a;
      },
      mode);
  return y;
}

void MlpGrads::set_zero(const Mlp& net) {
  dweight.clear();
  dbias.clear();
  for (const auto& l : net.layers) {
    dweight.emplace_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    dbias.emplace_back(Vector::Zero(l.bias.size()));
  }
}

void MlpGrads::add(const MlpGrads& other) {
  for (std::size_t k = 0; k < dweight.size(); ++k) {
    dweight[k] += other.dweight[k];
    dbias[k] += other.dbias[k];
  }
}

void MlpGrads::scale(double s) {
  for (std::size_t k = 0; k < dweight.size(); ++k) {
    dweight[k] *= s;
    dbias[k] *= s;
  }
}

Matrix mlp_backward(const Mlp& net, const ForwardCache& cache, const Matrix& dl_dy,
                    MlpGrads* grads, ExecMode mode) {
  if (!cache.valid() || cache.inputs.size() != net.layers.size())
    throw std::invalid_argument("mlp_backward: cache does not match network");
  if (cache.preacts.back().rows() != dl_dy.rows() ||
      dl_dy.cols() != net.output_dim())
    throw std::invalid_argument("mlp_backward: dl_dy shape does not match cached forward");

  const std::size_t n_layers = net.layers.size();
  const std::size_t rows = static_cast<std::size_t>(dl_dy.rows());
  Matrix dl_dx(dl_dy.rows(), net.input_dim());

  const std::size_t n_chunks = (rows + kRowChunk - 1) / kRowChunk;
  std::vector<MlpGrads> partials;
  if (grads) {
    partials.resize(n_chunks);
    for (auto& p : partials) p.set_zero(net);
  }

  parallel_for_chunks(
      rows, kRowChunk,
      [&](std::size_t begin, std::size_t end) {
        const Eigen::Index b = static_cast<Eigen::Index>(begin);
        const Eigen::Index n = static_cast<Eigen::Index>(end - begin);
        const std::size_t chunk = begin / kRowChunk;
        Matrix delta = dl_dy.middleRows(b, n);
        for (std::size_t k = n_layers; k-- > 0;) {
          const DenseLayer& layer = net.layers[k];
          if (layer.activation == Activation::kRelu) {
            delta.array() *=
                (cache.preacts[k].middleRows(b, n).array() > 0.0).cast<double>();
          }
          if (grads) {
            partials[chunk].dweight[k].noalias() +=
                delta.transpose() * cache.inputs[k].middleRows(b, n);
            partials[chunk].dbias[k] += delta.colwise().sum().transpose();
          }
          if (k > 0)
            delta = (delta * layer.weight).eval();
          else
            dl_dx.middleRows(b, n).noalias() = delta * layer.weight;
        }
      },
      mode);

  if (grads) {
    // Merge chunk partials in chunk order: the sum is independent of how
    // chunks were scheduled across threads.
    for (auto& p : partials) grads->add(p);
  }
  return dl_dx;
}

void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grad.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (!grad.allFinite()) throw std::invalid_argument("adam_step: non-finite gradient rejected");
  if (state.m.size() != params.size()) state = AdamState::zeros(params.size());
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const Vector m_hat = state.m / bc1;
  const Vector v_hat = state.v / bc2;
  params.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
}

MlpAdam::MlpAdam(const Mlp& net) {
  for (const auto& l : net.layers) {
    weight_states_.push_back(AdamState::zeros(l.weight.size()));
    bias_states_.push_back(AdamState::zeros(l.bias.size()));
  }
}

void MlpAdam::step(Mlp& net, const MlpGrads& grads, const AdamConfig& cfg) {
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Eigen::Map<Vector> w(net.layers[k].weight.data(), net.layers[k].weight.size());
    Eigen::Map<const Vector> gw(grads.dweight[k].data(), grads.dweight[k].size());
    adam_step(w, gw, weight_states_[k], cfg);
    adam_step(net.layers[k].bias, grads.dbias[k], bias_states_[k], cfg);
  }
}

double finite_diff_max_rel_error(const std::function<double(const Vector&)>& f, const Vector& x,
                                 const Vector& analytic_grad, double h) {
  if (analytic_grad.size() != x.size())
    throw std::invalid_argument("finite_diff_max_rel_error: gradient size mismatch");
  double worst = 0.0;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double fp = f(probe);
    probe(i) = x(i) - h;
    const double fm = f(probe);
    probe(i) = x(i);
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic_grad(i) - fd) / std::max(std::abs(fd), 1e-8);
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace bnv::nn

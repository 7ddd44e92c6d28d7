#include "flockid/initfit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "flockid/errors.hpp"

namespace flockid {

namespace {

constexpr int kInputs = 3;
constexpr int kOutputs = 4;

std::vector<int> layer_widths(std::span<const int> hidden) {
  std::vector<int> widths{kInputs};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(kOutputs);
  return widths;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Activations of one forward pass, kept for the backward pass.
struct Tape {
  std::vector<std::vector<double>> act;  // act[0] = scaled input, act[l] = tanh(z_l) for hidden layers
  std::vector<double> out;               // pre-activation outputs (kOutputs)
};

void forward(const NetWeights& wts, const std::vector<int>& widths, const Vec3& x, Tape& tape) {
  const std::size_t layers = widths.size() - 1;
  tape.act.resize(layers);
  tape.act[0] = {x[0] * wts.input_scale, x[1] * wts.input_scale, x[2] * wts.input_scale};
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int nin = widths[l], nout = widths[l + 1];
    const double* W = wts.w.data() + off;
    const double* b = W + static_cast<std::size_t>(nin) * nout;
    const std::vector<double>& in = tape.act[l];
    std::vector<double> z(nout);
    for (int o = 0; o < nout; ++o) {
      double s = b[o];
      const double* row = W + static_cast<std::size_t>(o) * nin;
      for (int i = 0; i < nin; ++i) s += row[i] * in[i];
      z[o] = s;
    }
    off += static_cast<std::size_t>(nin) * nout + nout;
    if (l + 1 < layers) {
      for (double& v : z) v = std::tanh(v);
      tape.act[l + 1] = std::move(z);
    } else {
      tape.out = std::move(z);
    }
  }
}

/// Accumulates d(loss)/d(weights) given d(loss)/d(pre-activation outputs).
void backward(const NetWeights& wts, const std::vector<int>& widths, const Tape& tape, std::vector<double> delta,
              std::vector<double>& grad) {
  const std::size_t layers = widths.size() - 1;
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
  }
  for (std::size_t l = layers; l-- > 0;) {
    const int nin = widths[l], nout = widths[l + 1];
    const double* W = wts.w.data() + offsets[l];
    double* gW = grad.data() + offsets[l];
    double* gb = gW + static_cast<std::size_t>(nin) * nout;
    const std::vector<double>& in = tape.act[l];
    for (int o = 0; o < nout; ++o) {
      gb[o] += delta[o];
      double* grow = gW + static_cast<std::size_t>(o) * nin;
      for (int i = 0; i < nin; ++i) grow[i] += delta[o] * in[i];
    }
    if (l == 0) break;
    std::vector<double> prev(nin, 0.0);
    for (int o = 0; o < nout; ++o) {
      const double* row = W + static_cast<std::size_t>(o) * nin;
      for (int i = 0; i < nin; ++i) prev[i] += row[i] * delta[o];
    }
    for (int i = 0; i < nin; ++i) prev[i] *= 1.0 - in[i] * in[i];  // tanh'
    delta = std::move(prev);
  }
}

void check_inputs(const NetWeights& wts, const DensityField& q0, const MomentumField& j0, const CellMask& mask) {
  wts.validate();
  if (q0.values.size() != mask.size() || j0.values.size() != mask.size())
    throw std::invalid_argument("initfit: field and mask sizes differ");
}

}  // namespace

std::size_t NetWeights::parameter_count(std::span<const int> hidden) {
  const auto widths = layer_widths(hidden);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    n += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
  return n;
}

void NetWeights::validate() const {
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("NetWeights: hidden widths must be >= 1");
  if (w.size() != expected_size())
    throw std::invalid_argument("NetWeights: expected " + std::to_string(expected_size()) + " weights, got " +
                                std::to_string(w.size()));
  for (double v : w)
    if (!std::isfinite(v)) throw std::invalid_argument("NetWeights: non-finite weight");
}

NetWeights init_weights(std::span<const int> hidden, double input_scale, double momentum_bound, std::uint64_t seed) {
  NetWeights wts;
  wts.hidden.assign(hidden.begin(), hidden.end());
  wts.input_scale = input_scale;
  wts.momentum_bound = momentum_bound;
  wts.w.assign(wts.expected_size(), 0.0);
  std::mt19937_64 rng(seed);
  const auto widths = layer_widths(hidden);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int nin = widths[l], nout = widths[l + 1];
    const double limit = std::sqrt(6.0 / (nin + nout));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t q = 0; q < static_cast<std::size_t>(nin) * nout; ++q) wts.w[off + q] = dist(rng);
    off += static_cast<std::size_t>(nin) * nout + nout;
  }
  return wts;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

NetOutput net_forward(const NetWeights& wts, const Vec3& x) {
  const auto widths = layer_widths(wts.hidden);
  Tape tape;
  forward(wts, widths, x, tape);
  NetOutput o;
  o.density = softplus(tape.out[0]);
  for (std::size_t a = 0; a < 3; ++a) o.momentum[a] = wts.momentum_bound * std::tanh(tape.out[a + 1]);
  return o;
}

DensityField normalized_density(const NetWeights& wts, const GridSpec& grid, const CellMask& mask) {
  if (mask.size() != grid.size()) throw std::invalid_argument("normalized_density: mask size mismatch");
  if (fluid_count(mask) == 0) throw std::invalid_argument("normalized_density: no fluid cells");
  DensityField rho(grid);
  double total = 0.0;
  for (std::size_t c = 0; c < mask.size(); ++c) {
    if (mask[c] != CellKind::fluid) continue;
    rho.values[c] = net_forward(wts, grid.center(c)).density;
    total += rho.values[c];
  }
  total *= grid.cell_volume();
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("normalized_density: raw density has no mass");
  for (double& v : rho.values) v /= total;
  return rho;
}

MomentumField net_momentum(const NetWeights& wts, const GridSpec& grid, const CellMask& mask) {
  MomentumField j(grid);
  for (std::size_t c = 0; c < mask.size(); ++c)
    if (mask[c] == CellKind::fluid) j.values[c] = net_forward(wts, grid.center(c)).momentum;
  return j;
}

namespace {

double evaluate_L1(const NetWeights& wts, const DensityField& q0, const MomentumField& j0, const CellMask& mask,
                   std::vector<double>* grad) {
  check_inputs(wts, q0, j0, mask);
  const GridSpec& grid = q0.grid;
  const double vol = grid.cell_volume();
  const auto widths = layer_widths(wts.hidden);
  const std::size_t n = mask.size();

  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < n; ++c)
    if (mask[c] == CellKind::fluid) cells.push_back(c);
  if (cells.empty()) throw std::invalid_argument("loss_L1: no fluid cells");

  std::vector<Tape> tapes(cells.size());
  std::vector<double> raw(cells.size());
  double total = 0.0;
  for (std::size_t q = 0; q < cells.size(); ++q) {
    forward(wts, widths, grid.center(cells[q]), tapes[q]);
    raw[q] = softplus(tapes[q].out[0]);
    total += raw[q];
  }
  const double Z = total * vol;
  if (!(Z > 0.0) || !std::isfinite(Z)) throw NumericalError("loss_L1: raw density has no mass");

  // Hellinger part. Non-fluid cells carry model density 0.
  std::vector<char> is_fluid(n, 0);
  for (std::size_t c : cells) is_fluid[c] = 1;
  double h2 = 0.0;
  for (std::size_t c = 0; c < n; ++c)
    if (!is_fluid[c]) h2 += q0.values[c];
  std::vector<double> dh(cells.size(), 0.0);  // d H^2 / d rho_hat
  double weighted = 0.0;                      // sum dh * rho_hat
  for (std::size_t q = 0; q < cells.size(); ++q) {
    const double rho = raw[q] / Z;
    const double target = q0.values[cells[q]];
    if (target < 0.0) throw std::invalid_argument("loss_L1: negative observed density");
    const double d = std::sqrt(rho) - std::sqrt(target);
    h2 += d * d;
    dh[q] = rho > 0.0 ? 0.5 * vol * (1.0 - std::sqrt(target / rho)) : 0.0;
    weighted += dh[q] * rho;
  }
  h2 *= 0.5 * vol;

  double mom = 0.0;
  if (grad) grad->assign(wts.w.size(), 0.0);
  for (std::size_t q = 0; q < cells.size(); ++q) {
    const Tape& tape = tapes[q];
    std::vector<double> delta(kOutputs, 0.0);
    // d rho_hat_c / d raw_k = delta_ck / Z - raw_c vol / Z^2
    const double d_raw = (dh[q] - vol * weighted) / Z;
    delta[0] = d_raw * sigmoid(tape.out[0]);
    const Vec3& target = j0.values[cells[q]];
    for (std::size_t a = 0; a < 3; ++a) {
      const double t = std::tanh(tape.out[a + 1]);
      const double diff = wts.momentum_bound * t - target[a];
      mom += diff * diff;
      delta[a + 1] = 2.0 * vol * diff * wts.momentum_bound * (1.0 - t * t);
    }
    if (grad) backward(wts, widths, tape, std::move(delta), *grad);
  }
  mom *= vol;
  return h2 + mom;
}

}  // namespace

double loss_L1(const NetWeights& wts, const DensityField& q0, const MomentumField& j0, const CellMask& mask) {
  return evaluate_L1(wts, q0, j0, mask, nullptr);
}

double loss_L1_grad(const NetWeights& wts, const DensityField& q0, const MomentumField& j0, const CellMask& mask,
                    std::vector<double>& grad) {
  return evaluate_L1(wts, q0, j0, mask, &grad);
}

AdamResult adam_minimize(const std::function<double(std::span<const double>, std::vector<double>&)>& loss_grad,
                         std::vector<double> x, const AdamConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("adam: steps must be >= 1");
  if (!(cfg.decay_iterations > 0.0)) throw std::invalid_argument("adam: decay_iterations must be > 0");
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), g;
  AdamResult res;
  res.curve.reserve(cfg.steps + 1);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t it = 0; it <= cfg.steps; ++it) {
    const double loss = loss_grad(x, g);
    if (!std::isfinite(loss))
      throw NumericalError("adam: non-finite loss at iteration " + std::to_string(it));
    res.curve.push_back(loss);
    if (it == 0 || loss < res.best_loss) {
      res.best_loss = loss;
      res.best = x;
    }
    if (it == cfg.steps) break;
    const double rate = cfg.base_rate / (1.0 + static_cast<double>(it) / cfg.decay_iterations);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t q = 0; q < n; ++q) {
      m[q] = cfg.beta1 * m[q] + (1.0 - cfg.beta1) * g[q];
      v[q] = cfg.beta2 * v[q] + (1.0 - cfg.beta2) * g[q] * g[q];
      const double mh = m[q] / (1.0 - b1t);
      const double vh = v[q] / (1.0 - b2t);
      x[q] -= rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }
  }
  return res;
}

InitFitResult adam_train(const DensityField& q0, const MomentumField& j0, const CellMask& mask,
                         const InitFitConfig& cfg) {
  double bound = 0.0;
  for (std::size_t c = 0; c < mask.size(); ++c)
    if (mask[c] == CellKind::fluid) bound = std::max(bound, norm_inf(j0.values[c]));
  NetWeights wts = init_weights(cfg.hidden, 1.0 / q0.grid.half_width, bound, cfg.seed);

  NetWeights scratch = wts;
  auto objective = [&](std::span<const double> x, std::vector<double>& g) {
    std::copy(x.begin(), x.end(), scratch.w.begin());
    return loss_L1_grad(scratch, q0, j0, mask, g);
  };
  AdamResult r = adam_minimize(objective, wts.w, cfg.adam);
  wts.w = std::move(r.best);
  return {std::move(wts), std::move(r.curve)};
}

}  // namespace flockid

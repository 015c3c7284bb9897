#pragma once

#include "acrl/common.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <vector>

namespace acrl {

enum class Activation { ReLU, Tanh, Identity };

inline std::string activation_name(Activation a) {
  switch (a) {
  case Activation::ReLU: return "relu";
  case Activation::Tanh: return "tanh";
  case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string &s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + s);
}

/// Fully connected network with all parameters in one flat vector
/// (per layer: W column-major, then b). Batches are columns.
struct Mlp {
  std::vector<int> widths;             // input, hidden..., output
  std::vector<Activation> activations; // one per layer
  Vec params;

  Mlp() = default;

  Mlp(std::vector<int> w, std::vector<Activation> acts) : widths(std::move(w)), activations(std::move(acts)) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    if (activations.size() != widths.size() - 1) throw std::invalid_argument("Mlp: one activation per layer");
    for (int w_ : widths)
      if (w_ <= 0) throw std::invalid_argument("Mlp: widths must be positive");
    params = Vec::Zero(offset(layers()));
  }

  /// Hidden layers share one activation; the output layer has its own.
  static Mlp make(int in, const std::vector<int> &hidden, int out, Activation hidden_act, Activation out_act) {
    std::vector<int> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    std::vector<Activation> a(hidden.size(), hidden_act);
    a.push_back(out_act);
    return Mlp(std::move(w), std::move(a));
  }

  int layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  Eigen::Index num_params() const { return params.size(); }

  Eigen::Index offset(int layer) const {
    Eigen::Index o = 0;
    for (int l = 0; l < layer; ++l) o += static_cast<Eigen::Index>(widths[l + 1]) * (widths[l] + 1);
    return o;
  }

  Eigen::Map<const Mat> W(int l) const { return {params.data() + offset(l), widths[l + 1], widths[l]}; }
  Eigen::Map<const Vec> b(int l) const {
    return {params.data() + offset(l) + static_cast<Eigen::Index>(widths[l + 1]) * widths[l], widths[l + 1]};
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void init(std::mt19937_64 &rng) {
    for (int l = 0; l < layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
      std::uniform_real_distribution<double> U(-bound, bound);
      const Eigen::Index o = offset(l), n = static_cast<Eigen::Index>(widths[l + 1]) * (widths[l] + 1);
      for (Eigen::Index i = 0; i < n; ++i) params[o + i] = U(rng);
    }
  }

  std::string signature() const {
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (i) s += "-";
      s += std::to_string(widths[i]);
    }
    return s;
  }
};

/// Per-layer activations recorded by a forward pass; outputs[l] is the
/// output of layer l, outputs[-1] the batch input.
struct Tape {
  Mat input;
  std::vector<Mat> outputs;
};

inline void activate(Activation a, Mat &z) {
  switch (a) {
  case Activation::ReLU: z = z.cwiseMax(0.0); break;
  case Activation::Tanh: z = z.array().tanh().matrix(); break;
  case Activation::Identity: break;
  }
}

/// Batched forward pass; X is input_dim x batch.
inline Mat forward(const Mlp &net, const Mat &X, Tape *tape = nullptr) {
  if (X.rows() != net.input_dim()) throw std::invalid_argument("forward: input width mismatch");
  Mat h = X;
  if (tape) {
    tape->input = X;
    tape->outputs.resize(static_cast<std::size_t>(net.layers()));
  }
  for (int l = 0; l < net.layers(); ++l) {
    Mat z = net.W(l) * h;
    z.colwise() += net.b(l);
    activate(net.activations[static_cast<std::size_t>(l)], z);
    if (tape) tape->outputs[static_cast<std::size_t>(l)] = z;
    h = std::move(z);
  }
  return h;
}

inline Vec forward(const Mlp &net, const Vec &x) { return forward(net, Mat(x)).col(0); }

/// Premultiplies each column of the upstream adjoint by the transpose of the
/// matching per-sample Jacobian of a layer applied after the network.
inline Mat inject_jacobians(const Mat &upstream, const std::vector<Mat> &jacobians) {
  if (static_cast<Eigen::Index>(jacobians.size()) != upstream.cols())
    throw std::invalid_argument("inject_jacobians: one Jacobian per sample");
  Mat out(jacobians.empty() ? upstream.rows() : jacobians.front().cols(), upstream.cols());
  for (Eigen::Index i = 0; i < upstream.cols(); ++i) {
    const Mat &J = jacobians[static_cast<std::size_t>(i)];
    if (J.rows() != upstream.rows()) throw std::invalid_argument("inject_jacobians: shape mismatch");
    out.col(i) = J.transpose() * upstream.col(i);
  }
  return out;
}

/// Reverse accumulation. `upstream` is dLoss/dOutput (output_dim x batch);
/// parameter gradients are added to grad (sized like params), and the input
/// gradient is written to grad_input when requested.
inline void backward(const Mlp &net, const Tape &tape, const Mat &upstream, Vec &grad, Mat *grad_input = nullptr) {
  if (upstream.rows() != net.output_dim() || upstream.cols() != tape.input.cols())
    throw std::invalid_argument("backward: upstream shape mismatch");
  if (grad.size() != net.num_params()) grad = Vec::Zero(net.num_params());
  Mat delta = upstream;
  for (int l = net.layers() - 1; l >= 0; --l) {
    const Mat &out = tape.outputs[static_cast<std::size_t>(l)];
    switch (net.activations[static_cast<std::size_t>(l)]) {
    case Activation::ReLU: delta = (out.array() > 0.0).select(delta, 0.0); break;
    case Activation::Tanh: delta = delta.cwiseProduct((1.0 - out.array().square()).matrix()); break;
    case Activation::Identity: break;
    }
    const Mat &in = l == 0 ? tape.input : tape.outputs[static_cast<std::size_t>(l - 1)];
    const Eigen::Index o = net.offset(l);
    const int rows = net.widths[static_cast<std::size_t>(l + 1)], cols = net.widths[static_cast<std::size_t>(l)];
    Eigen::Map<Mat>(grad.data() + o, rows, cols).noalias() += delta * in.transpose();
    Eigen::Map<Vec>(grad.data() + o + static_cast<Eigen::Index>(rows) * cols, rows) += delta.rowwise().sum();
    if (l > 0 || grad_input) delta = net.W(l).transpose() * delta;
  }
  if (grad_input) *grad_input = delta;
}

/// Single-sample backward with an optional injected Jacobian of a layer
/// that follows the network.
inline Vec backward(const Mlp &net, const Tape &tape, const Vec &upstream, const Mat *injected_jacobian,
                    Vec *grad_input = nullptr) {
  Vec g = Vec::Zero(net.num_params());
  const Vec up = injected_jacobian ? Vec(injected_jacobian->transpose() * upstream) : upstream;
  Mat gi;
  backward(net, tape, Mat(up), g, grad_input ? &gi : nullptr);
  if (grad_input) *grad_input = gi.col(0);
  return g;
}

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index n, double learning_rate) : m(Vec::Zero(n)), v(Vec::Zero(n)), lr(learning_rate) {}
};

/// Adam with bias correction. Gradients are clipped to max_grad_norm first
/// when it is positive.
inline void adam_step(Vec &params, const Vec &grad, AdamState &st, double max_grad_norm = 0.0) {
  if (grad.size() != params.size() || st.m.size() != params.size()) throw std::invalid_argument("adam_step: shape mismatch");
  Vec g = grad;
  if (max_grad_norm > 0.0) {
    const double n = g.norm();
    if (n > max_grad_norm) g *= max_grad_norm / n;
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * g;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

/// target <- tau * online + (1 - tau) * target
inline void polyak_update(Mlp &target, const Mlp &online, double tau) {
  target.params = tau * online.params + (1.0 - tau) * target.params;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const Mlp &net) {
  nlohmann::json j;
  j["signature"] = net.signature();
  j["widths"] = net.widths;
  std::vector<std::string> acts;
  for (auto a : net.activations) acts.push_back(activation_name(a));
  j["activations"] = acts;
  j["params"] = std::vector<double>(net.params.data(), net.params.data() + net.params.size());
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json &j) {
  std::vector<Activation> acts;
  for (const auto &s : j.at("activations")) acts.push_back(parse_activation(s.get<std::string>()));
  Mlp net(j.at("widths").get<std::vector<int>>(), acts);
  if (j.contains("signature") && j.at("signature").get<std::string>() != net.signature())
    throw std::invalid_argument("mlp_from_json: width signature mismatch");
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(p.size()) != net.num_params()) throw std::invalid_argument("mlp_from_json: parameter count");
  net.params = Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
  return net;
}

inline nlohmann::json to_json(const AdamState &st) {
  return {{"m", std::vector<double>(st.m.data(), st.m.data() + st.m.size())},
          {"v", std::vector<double>(st.v.data(), st.v.data() + st.v.size())},
          {"step", st.step},
          {"lr", st.lr},
          {"beta1", st.beta1},
          {"beta2", st.beta2},
          {"eps", st.eps}};
}

inline AdamState adam_from_json(const nlohmann::json &j) {
  AdamState st;
  const auto m = j.at("m").get<std::vector<double>>(), v = j.at("v").get<std::vector<double>>();
  st.m = Eigen::Map<const Vec>(m.data(), static_cast<Eigen::Index>(m.size()));
  st.v = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  st.step = j.at("step").get<long>();
  st.lr = j.at("lr").get<double>();
  st.beta1 = j.at("beta1").get<double>();
  st.beta2 = j.at("beta2").get<double>();
  st.eps = j.at("eps").get<double>();
  return st;
}

inline void save_mlp(const Mlp &net, const std::string &path) {
  std::ofstream f(path);
  if (!f) throw Error("save_mlp: cannot open " + path);
  f << to_json(net).dump();
}

inline Mlp load_mlp(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw Error("load_mlp: cannot open " + path);
  return mlp_from_json(nlohmann::json::parse(f));
}

} // namespace acrl

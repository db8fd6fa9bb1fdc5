#include "lvr/policy.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace lvr {

namespace {

inline double elu(double z) { return z > 0.0 ? z : std::expm1(z); }

// elu'(z) recovered from the activation: 1 for z > 0, a + 1 otherwise.
inline double elu_deriv_from_act(double a) { return a > 0.0 ? 1.0 : a + 1.0; }

}  // namespace

std::size_t PolicyNet::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_w.size(); ++l)
    n += layer_w[l].rows() * layer_w[l].cols() + layer_b[l].size();
  n += readout_w.rows() * readout_w.cols() + readout_b.size();
  return n;
}

void PolicyNet::validate() const {
  if (layer_w.empty()) throw InvalidInput("policy: no hidden layers");
  if (layer_w.size() != layer_b.size()) throw InvalidInput("policy: weight/bias count mismatch");
  for (std::size_t l = 0; l < layer_w.size(); ++l) {
    if (layer_w[l].rows() != layer_b[l].size())
      throw InvalidInput("policy: bias length mismatch at layer " + std::to_string(l));
    if (l > 0 && layer_w[l].cols() != layer_w[l - 1].rows())
      throw InvalidInput("policy: layer dimensions do not chain at layer " + std::to_string(l));
    if (!layer_w[l].all_finite()) throw InvalidInput("policy: non-finite weights");
  }
  if (readout_w.cols() != latent_dim()) throw InvalidInput("policy: readout width mismatch");
  if (readout_w.rows() != readout_b.size()) throw InvalidInput("policy: readout bias mismatch");
  if (!norm.empty() && norm.mean.size() != input_dim())
    throw InvalidInput("policy: standardizer dimension mismatch");
}

Vec PolicyNet::to_flat() const {
  Vec flat;
  flat.reserve(num_params());
  for (std::size_t l = 0; l < layer_w.size(); ++l) {
    flat.insert(flat.end(), layer_w[l].data().begin(), layer_w[l].data().end());
    flat.insert(flat.end(), layer_b[l].begin(), layer_b[l].end());
  }
  flat.insert(flat.end(), readout_w.data().begin(), readout_w.data().end());
  flat.insert(flat.end(), readout_b.begin(), readout_b.end());
  return flat;
}

void PolicyNet::from_flat(const Vec& flat) {
  if (flat.size() != num_params()) throw InvalidInput("policy from_flat: size mismatch");
  std::size_t at = 0;
  for (std::size_t l = 0; l < layer_w.size(); ++l) {
    std::copy(flat.begin() + at, flat.begin() + at + layer_w[l].data().size(),
              layer_w[l].data().begin());
    at += layer_w[l].data().size();
    std::copy(flat.begin() + at, flat.begin() + at + layer_b[l].size(), layer_b[l].begin());
    at += layer_b[l].size();
  }
  std::copy(flat.begin() + at, flat.begin() + at + readout_w.data().size(),
            readout_w.data().begin());
  at += readout_w.data().size();
  std::copy(flat.begin() + at, flat.end(), readout_b.begin());
}

GradientBundle GradientBundle::zeros_like(const PolicyNet& net) {
  GradientBundle g;
  g.layer_w.reserve(net.layer_w.size());
  g.layer_b.reserve(net.layer_b.size());
  for (std::size_t l = 0; l < net.layer_w.size(); ++l) {
    g.layer_w.emplace_back(net.layer_w[l].rows(), net.layer_w[l].cols());
    g.layer_b.emplace_back(net.layer_b[l].size(), 0.0);
  }
  g.readout_w = Matrix(net.readout_w.rows(), net.readout_w.cols());
  g.readout_b.assign(net.readout_b.size(), 0.0);
  g.input.assign(net.input_dim(), 0.0);
  return g;
}

Vec GradientBundle::to_flat() const {
  Vec flat;
  for (std::size_t l = 0; l < layer_w.size(); ++l) {
    flat.insert(flat.end(), layer_w[l].data().begin(), layer_w[l].data().end());
    flat.insert(flat.end(), layer_b[l].begin(), layer_b[l].end());
  }
  flat.insert(flat.end(), readout_w.data().begin(), readout_w.data().end());
  flat.insert(flat.end(), readout_b.begin(), readout_b.end());
  return flat;
}

double GradientBundle::max_abs() const {
  double m = 0.0;
  for (const Matrix& w : layer_w) m = std::max(m, w.max_abs());
  for (const Vec& b : layer_b)
    for (double v : b) m = std::max(m, std::abs(v));
  m = std::max(m, readout_w.max_abs());
  for (double v : readout_b) m = std::max(m, std::abs(v));
  return m;
}

ForwardTape forward_tape(const PolicyNet& net, const Vec& x) {
  if (x.size() != net.input_dim()) throw InvalidInput("policy forward: input dimension mismatch");
  ForwardTape tape;
  tape.a.reserve(net.layer_w.size() + 1);
  tape.a.push_back(net.norm.empty() ? x : net.norm.apply(x));
  for (std::size_t l = 0; l < net.layer_w.size(); ++l) {
    Vec z = net.layer_w[l].apply(tape.a.back());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = elu(z[i] + net.layer_b[l][i]);
    tape.a.push_back(std::move(z));
  }
  return tape;
}

Vec forward_latent(const PolicyNet& net, const Vec& x) { return forward_tape(net, x).a.back(); }

Vec forward_action(const PolicyNet& net, const Vec& x) {
  Vec u = net.readout_w.apply(forward_latent(net, x));
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += net.readout_b[i];
  return u;
}

void accumulate_backward(const PolicyNet& net, const ForwardTape& tape, const Vec& action_grad,
                         const Vec& latent_grad, GradientBundle& out) {
  const std::size_t layers = net.layer_w.size();
  if (tape.a.size() != layers + 1) throw InvalidInput("backward: tape does not match net");
  if (!action_grad.empty() && action_grad.size() != net.action_dim())
    throw InvalidInput("backward: action_grad dimension mismatch");
  if (!latent_grad.empty() && latent_grad.size() != net.latent_dim())
    throw InvalidInput("backward: latent_grad dimension mismatch");

  Vec g(net.latent_dim(), 0.0);
  if (!action_grad.empty()) {
    const Vec& h = tape.latent();
    for (std::size_t r = 0; r < net.readout_w.rows(); ++r) {
      const double gr = action_grad[r];
      out.readout_b[r] += gr;
      if (gr == 0.0) continue;
      double* wrow = out.readout_w.row_ptr(r);
      const double* nrow = net.readout_w.row_ptr(r);
      for (std::size_t c = 0; c < net.readout_w.cols(); ++c) {
        wrow[c] += gr * h[c];
        g[c] += gr * nrow[c];
      }
    }
  }
  if (!latent_grad.empty())
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += latent_grad[c];

  for (std::size_t l = layers; l-- > 0;) {
    const Vec& a_out = tape.a[l + 1];
    const Vec& a_in = tape.a[l];
    // g at post-activation -> g at pre-activation
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= elu_deriv_from_act(a_out[i]);
    Vec g_prev(a_in.size(), 0.0);
    for (std::size_t r = 0; r < g.size(); ++r) {
      const double gr = g[r];
      out.layer_b[l][r] += gr;
      if (gr == 0.0) continue;
      double* wrow = out.layer_w[l].row_ptr(r);
      const double* nrow = net.layer_w[l].row_ptr(r);
      for (std::size_t c = 0; c < a_in.size(); ++c) {
        wrow[c] += gr * a_in[c];
        g_prev[c] += gr * nrow[c];
      }
    }
    g = std::move(g_prev);
  }

  // Through standardization back to the raw input.
  if (net.norm.empty()) {
    for (std::size_t i = 0; i < g.size(); ++i) out.input[i] += g[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) out.input[i] += g[i] / net.norm.std[i];
  }
}

GradientBundle backward(const PolicyNet& net, const ForwardTape& tape, const Vec& action_grad,
                        const Vec& latent_grad) {
  GradientBundle out = GradientBundle::zeros_like(net);
  accumulate_backward(net, tape, action_grad, latent_grad, out);
  return out;
}

PolicyNet init_params(std::uint64_t seed, const std::vector<std::size_t>& widths) {
  if (widths.size() < 3)
    throw InvalidInput("init_params: widths must list input, hidden layers, action");
  for (std::size_t w : widths)
    if (w == 0) throw InvalidInput("init_params: zero width");

  Rng rng(seed);
  PolicyNet net;
  const std::size_t n_hidden = widths.size() - 2;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-lim, lim);
    net.layer_w.push_back(std::move(w));
    net.layer_b.emplace_back(fan_out, 0.0);
  }
  const std::size_t latent = widths[widths.size() - 2];
  const std::size_t action = widths.back();
  const double lim = std::sqrt(6.0 / static_cast<double>(latent + action));
  net.readout_w = Matrix(action, latent);
  for (double& v : net.readout_w.data()) v = rng.uniform(-lim, lim);
  net.readout_b.assign(action, 0.0);
  return net;
}

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const PolicyNet& net, const std::string& path) {
  net.validate();
  json j;
  j["format_version"] = 1;
  json widths = json::array();
  widths.push_back(net.input_dim());
  for (const Matrix& w : net.layer_w) widths.push_back(w.rows());
  widths.push_back(net.action_dim());
  j["widths"] = widths;
  json layers = json::array();
  for (std::size_t l = 0; l < net.layer_w.size(); ++l)
    layers.push_back({{"W", matrix_to_json(net.layer_w[l])}, {"b", net.layer_b[l]}});
  j["layers"] = layers;
  j["readout"] = {{"W", matrix_to_json(net.readout_w)}, {"b", net.readout_b}};
  j["x_mean"] = net.norm.mean;
  j["x_std"] = net.norm.std;
  j["config_hash"] = net.config_hash;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(1) << "\n";
}

PolicyNet load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  json j;
  f >> j;
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw InvalidInput("checkpoint: unsupported format version");
  PolicyNet net;
  for (const auto& layer : j["layers"]) {
    net.layer_w.push_back(matrix_from_json(layer["W"]));
    net.layer_b.push_back(layer["b"].get<Vec>());
  }
  net.readout_w = matrix_from_json(j["readout"]["W"]);
  net.readout_b = j["readout"]["b"].get<Vec>();
  net.norm.mean = j["x_mean"].get<Vec>();
  net.norm.std = j["x_std"].get<Vec>();
  net.config_hash = j.value("config_hash", "");
  net.validate();
  return net;
}

}  // namespace lvr

#pragma once

#include <string>

#include "lvr/dataset.hpp"
#include "lvr/numerics.hpp"

namespace lvr {

/// Feedforward policy u = W phi(x) + b where phi is an ELU MLP (alpha = 1).
/// The latent is the post-activation output of the last hidden layer, i.e.
/// exactly the vector the readout multiplies. Inputs are standardized with
/// statistics fit on the training set and serialized with the net.
struct PolicyNet {
  std::vector<Matrix> layer_w;  // hidden layers
  std::vector<Vec> layer_b;
  Matrix readout_w;  // action_dim x latent_dim
  Vec readout_b;
  Standardizer norm;        // identity when empty
  std::string config_hash;  // recorded at training time

  std::size_t input_dim() const { return layer_w.empty() ? 0 : layer_w.front().cols(); }
  std::size_t latent_dim() const { return layer_w.empty() ? 0 : layer_w.back().rows(); }
  std::size_t action_dim() const { return readout_w.rows(); }
  std::size_t num_params() const;

  void validate() const;

  // Flat parameter view in a fixed order (layers first, then readout);
  // used by the optimizer and by finite-difference checks.
  Vec to_flat() const;
  void from_flat(const Vec& flat);
};

/// Activations recorded by a forward pass: a[0] is the standardized input,
/// a[l] the post-activation output of hidden layer l. ELU derivatives are
/// recovered from the activations themselves (elu'(z) = a + 1 for z <= 0).
struct ForwardTape {
  std::vector<Vec> a;
  const Vec& latent() const { return a.back(); }
};

/// Per-parameter gradients mirroring PolicyNet's shapes, plus the gradient
/// with respect to the raw (unstandardized) input.
struct GradientBundle {
  std::vector<Matrix> layer_w;
  std::vector<Vec> layer_b;
  Matrix readout_w;
  Vec readout_b;
  Vec input;

  static GradientBundle zeros_like(const PolicyNet& net);
  Vec to_flat() const;
  double max_abs() const;
};

/// phi_theta(x): latent at x. Throws on input dimension mismatch.
Vec forward_latent(const PolicyNet& net, const Vec& x);

/// W phi_theta(x) + b.
Vec forward_action(const PolicyNet& net, const Vec& x);

/// Forward pass that records the activations needed by backward().
ForwardTape forward_tape(const PolicyNet& net, const Vec& x);

/// Accumulates into `out` the exact gradients of
///   <action_grad, W phi(x) + b> + <latent_grad, phi(x)>
/// with respect to every parameter and the input. Either vector may be empty.
/// Supplying only action_grad differentiates through the readout; supplying
/// only latent_grad enters directly at the latent (the KL term needs this).
void accumulate_backward(const PolicyNet& net, const ForwardTape& tape, const Vec& action_grad,
                         const Vec& latent_grad, GradientBundle& out);

/// Convenience wrapper returning a fresh bundle.
GradientBundle backward(const PolicyNet& net, const ForwardTape& tape, const Vec& action_grad,
                        const Vec& latent_grad);

/// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
/// widths = {input, hidden..., action}; at least one hidden layer.
/// Deterministic: the same seed gives bit-identical parameters.
PolicyNet init_params(std::uint64_t seed, const std::vector<std::size_t>& widths);

/// Versioned JSON checkpoint holding widths, parameters, standardization
/// statistics and the training config hash. Round-trips bit-exactly.
void save_checkpoint(const PolicyNet& net, const std::string& path);
PolicyNet load_checkpoint(const std::string& path);

}  // namespace lvr

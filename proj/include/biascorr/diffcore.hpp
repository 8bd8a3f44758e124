#pragma once

// Small differentiable scorers with hand-written backward passes.
//
// Two families are provided: a plain multilayer perceptron and a kernel
// logit head of the form  sum_u K(g_u(x)) * l_u(x)  where g_u is a scalar
// affine map, l_u a vector-valued affine map and K(t) = exp(-(t/bw)^2).
// A composite scorer sums the logits of both on the same input.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace biascorr {

enum class ScorerKind { mlp, kernel_head, composite };
enum class Activation { relu, tanh };

struct ScorerSpec {
  ScorerKind kind = ScorerKind::mlp;
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation activation = Activation::relu;
  std::size_t kernel_units = 8;
  double kernel_bandwidth = 1.0;

  // Throws ConfigError when any dimension is zero or the bandwidth is not
  // strictly positive.
  void validate() const;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  bool bias = false;

  std::size_t size() const;
};

// Flat parameter storage with a named segment layout. Gradients share the
// layout of the parameters they differentiate.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<Segment> layout);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<Segment>& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  const Segment& segment(const std::string& name) const;
  std::span<double> segment_values(const std::string& name);
  std::span<const double> segment_values(const std::string& name) const;

  ParamVector zeros_like() const;
  bool same_layout(const ParamVector& other) const;
  bool all_finite() const;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator*=(double a);

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.values_ == b.values_ && a.same_layout(b);
  }

 private:
  std::vector<double> values_;
  std::vector<Segment> layout_;
};

std::size_t param_count(const ScorerSpec& spec);

// Layout implied by a spec, with all values zero.
ParamVector make_layout(const ScorerSpec& spec);

// Weights uniform in [-sqrt(6/fan_in), sqrt(6/fan_in)], biases zero.
ParamVector init_params(const ScorerSpec& spec, std::uint64_t seed);

// Cached intermediates of one forward evaluation. Holds non-owning
// pointers to the parameters and spec, which must outlive it. A tape can be
// consumed by backward() exactly once.
class ForwardTape {
 public:
  ForwardTape() = default;
  ForwardTape(ForwardTape&&) noexcept = default;
  ForwardTape& operator=(ForwardTape&&) noexcept = default;
  ForwardTape(const ForwardTape&) = delete;
  ForwardTape& operator=(const ForwardTape&) = delete;

  bool consumed() const { return consumed_; }

 private:
  friend struct ScorerOps;

  const ParamVector* params_ = nullptr;
  const ScorerSpec* spec_ = nullptr;
  std::vector<double> input_;
  // MLP: activations[0] is the input, pre[l] the pre-activation of hidden l.
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> act_;
  // Kernel head: per-unit argument t_u, kernel value K(t_u) and l_u(x).
  std::vector<double> kernel_arg_;
  std::vector<double> kernel_val_;
  std::vector<double> kernel_out_;
  bool consumed_ = false;
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardTape tape;
};

ForwardResult forward(const ParamVector& params, const ScorerSpec& spec, std::span<const double> x);

// Logits only, no tape retained.
std::vector<double> forward_logits(const ParamVector& params, const ScorerSpec& spec,
                                   std::span<const double> x);

// Gradient of dot(dlogits, logits) with respect to the parameters.
ParamVector backward(ForwardTape& tape, std::span<const double> dlogits);

// Same as backward() but adds into an existing gradient buffer.
void backward_accumulate(ForwardTape& tape, std::span<const double> dlogits, ParamVector& grad);

double kernel_rbf(double t, double bandwidth);

const char* to_string(ScorerKind kind);
const char* to_string(Activation act);
ScorerKind scorer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

}  // namespace biascorr

#include "biascorr/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "biascorr/error.hpp"

namespace biascorr {

void ScorerSpec::validate() const {
  if (input_dim == 0) throw ConfigError("scorer: input_dim must be positive");
  if (output_dim == 0) throw ConfigError("scorer: output_dim must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("scorer: hidden layer widths must be positive");
  }
  if (kind != ScorerKind::mlp) {
    if (kernel_units == 0) throw ConfigError("scorer: kernel_units must be positive");
    if (!(kernel_bandwidth > 0.0) || !std::isfinite(kernel_bandwidth)) {
      throw ConfigError("scorer: kernel_bandwidth must be positive");
    }
  }
}

std::size_t Segment::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ParamVector::ParamVector(std::vector<Segment> layout) : layout_(std::move(layout)) {
  std::size_t total = 0;
  for (const auto& s : layout_) total = std::max(total, s.offset + s.size());
  values_.assign(total, 0.0);
}

const Segment& ParamVector::segment(const std::string& name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  throw UsageError("no parameter segment named '" + name + "'");
}

std::span<double> ParamVector::segment_values(const std::string& name) {
  const Segment& s = segment(name);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::segment_values(const std::string& name) const {
  const Segment& s = segment(name);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

ParamVector ParamVector::zeros_like() const { return ParamVector(layout_); }

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layout_.size() != other.layout_.size() || values_.size() != other.values_.size()) return false;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const auto& a = layout_[i];
    const auto& b = other.layout_[i];
    if (a.name != b.name || a.offset != b.offset || a.shape != b.shape) return false;
  }
  return true;
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  if (!same_layout(other)) throw ShapeError("parameter layouts differ");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double a) {
  for (double& v : values_) v *= a;
  return *this;
}

namespace {

struct MlpOffsets {
  std::vector<std::size_t> dims;  // input, hidden..., output
  std::vector<std::size_t> weight;
  std::vector<std::size_t> bias;
};

struct KernelOffsets {
  std::size_t units = 0;
  std::size_t gate_w = 0;
  std::size_t gate_b = 0;
  std::size_t out_w = 0;
  std::size_t out_b = 0;
};

void append_mlp(const ScorerSpec& spec, const std::string& prefix, std::vector<Segment>& out,
                std::size_t& offset) {
  std::vector<std::size_t> dims{spec.input_dim};
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Segment w{prefix + "W" + std::to_string(l), offset, {dims[l + 1], dims[l]}, false};
    offset += w.size();
    Segment b{prefix + "b" + std::to_string(l), offset, {dims[l + 1]}, true};
    offset += b.size();
    out.push_back(std::move(w));
    out.push_back(std::move(b));
  }
}

void append_kernel(const ScorerSpec& spec, const std::string& prefix, std::vector<Segment>& out,
                   std::size_t& offset) {
  const std::size_t h = spec.kernel_units;
  const std::size_t d = spec.input_dim;
  const std::size_t k = spec.output_dim;
  Segment segs[] = {
      {prefix + "G", 0, {h, d}, false},
      {prefix + "g", 0, {h}, true},
      {prefix + "L", 0, {h, k, d}, false},
      {prefix + "l", 0, {h, k}, true},
  };
  for (auto& s : segs) {
    s.offset = offset;
    offset += s.size();
    out.push_back(std::move(s));
  }
}

MlpOffsets mlp_offsets(const ScorerSpec& spec, std::size_t base) {
  MlpOffsets m;
  m.dims.push_back(spec.input_dim);
  m.dims.insert(m.dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  m.dims.push_back(spec.output_dim);
  std::size_t off = base;
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    m.weight.push_back(off);
    off += m.dims[l + 1] * m.dims[l];
    m.bias.push_back(off);
    off += m.dims[l + 1];
  }
  return m;
}

std::size_t mlp_size(const ScorerSpec& spec) {
  const auto m = mlp_offsets(spec, 0);
  return m.bias.back() + m.dims.back();
}

KernelOffsets kernel_offsets(const ScorerSpec& spec, std::size_t base) {
  KernelOffsets k;
  k.units = spec.kernel_units;
  const std::size_t d = spec.input_dim;
  k.gate_w = base;
  k.gate_b = k.gate_w + k.units * d;
  k.out_w = k.gate_b + k.units;
  k.out_b = k.out_w + k.units * spec.output_dim * d;
  return k;
}

double activate(Activation a, double z) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the pre-activation; relu uses 0 at the kink.
double activate_grad(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

}  // namespace

struct ScorerOps {
  static void mlp_forward(const ScorerSpec& spec, std::span<const double> w, std::size_t base,
                          ForwardTape& tape, std::span<double> logits) {
    const MlpOffsets m = mlp_offsets(spec, base);
    const std::size_t layers = m.dims.size() - 1;
    tape.act_.assign(1, tape.input_);
    tape.pre_.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = m.dims[l];
      const std::size_t out = m.dims[l + 1];
      const std::vector<double>& a = tape.act_.back();
      std::vector<double> z(out);
      for (std::size_t i = 0; i < out; ++i) {
        double s = w[m.bias[l] + i];
        const double* row = &w[m.weight[l] + i * in];
        for (std::size_t j = 0; j < in; ++j) s += row[j] * a[j];
        z[i] = s;
      }
      if (l + 1 == layers) {
        for (std::size_t i = 0; i < out; ++i) logits[i] += z[i];
      } else {
        std::vector<double> act(out);
        for (std::size_t i = 0; i < out; ++i) act[i] = activate(spec.activation, z[i]);
        tape.pre_.push_back(std::move(z));
        tape.act_.push_back(std::move(act));
      }
    }
  }

  static void mlp_backward(const ScorerSpec& spec, std::span<const double> w, std::size_t base,
                           const ForwardTape& tape, std::span<const double> dlogits,
                           std::span<double> g) {
    const MlpOffsets m = mlp_offsets(spec, base);
    const std::size_t layers = m.dims.size() - 1;
    std::vector<double> delta(dlogits.begin(), dlogits.end());
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = m.dims[l];
      const std::size_t out = m.dims[l + 1];
      const std::vector<double>& a = tape.act_[l];
      for (std::size_t i = 0; i < out; ++i) {
        const double d = delta[i];
        g[m.bias[l] + i] += d;
        if (d == 0.0) continue;
        double* row = &g[m.weight[l] + i * in];
        for (std::size_t j = 0; j < in; ++j) row[j] += d * a[j];
      }
      if (l == 0) break;
      std::vector<double> prev(in, 0.0);
      for (std::size_t i = 0; i < out; ++i) {
        const double d = delta[i];
        if (d == 0.0) continue;
        const double* row = &w[m.weight[l] + i * in];
        for (std::size_t j = 0; j < in; ++j) prev[j] += row[j] * d;
      }
      const std::vector<double>& z = tape.pre_[l - 1];
      for (std::size_t j = 0; j < in; ++j) prev[j] *= activate_grad(spec.activation, z[j]);
      delta = std::move(prev);
    }
  }

  static void kernel_forward(const ScorerSpec& spec, std::span<const double> w, std::size_t base,
                             ForwardTape& tape, std::span<double> logits) {
    const KernelOffsets k = kernel_offsets(spec, base);
    const std::size_t d = spec.input_dim;
    const std::size_t out = spec.output_dim;
    const auto& x = tape.input_;
    tape.kernel_arg_.assign(k.units, 0.0);
    tape.kernel_val_.assign(k.units, 0.0);
    tape.kernel_out_.assign(k.units * out, 0.0);
    for (std::size_t u = 0; u < k.units; ++u) {
      double t = w[k.gate_b + u];
      for (std::size_t j = 0; j < d; ++j) t += w[k.gate_w + u * d + j] * x[j];
      const double kv = kernel_rbf(t, spec.kernel_bandwidth);
      tape.kernel_arg_[u] = t;
      tape.kernel_val_[u] = kv;
      for (std::size_t c = 0; c < out; ++c) {
        double v = w[k.out_b + u * out + c];
        const double* row = &w[k.out_w + (u * out + c) * d];
        for (std::size_t j = 0; j < d; ++j) v += row[j] * x[j];
        tape.kernel_out_[u * out + c] = v;
        logits[c] += kv * v;
      }
    }
  }

  static void kernel_backward(const ScorerSpec& spec, std::size_t base, const ForwardTape& tape,
                              std::span<const double> dlogits, std::span<double> g) {
    const KernelOffsets k = kernel_offsets(spec, base);
    const std::size_t d = spec.input_dim;
    const std::size_t out = spec.output_dim;
    const double bw2 = spec.kernel_bandwidth * spec.kernel_bandwidth;
    const auto& x = tape.input_;
    for (std::size_t u = 0; u < k.units; ++u) {
      const double kv = tape.kernel_val_[u];
      double dk = 0.0;
      for (std::size_t c = 0; c < out; ++c) {
        const double dc = dlogits[c];
        dk += dc * tape.kernel_out_[u * out + c];
        const double s = kv * dc;
        g[k.out_b + u * out + c] += s;
        double* row = &g[k.out_w + (u * out + c) * d];
        for (std::size_t j = 0; j < d; ++j) row[j] += s * x[j];
      }
      const double dt = dk * kv * (-2.0 * tape.kernel_arg_[u] / bw2);
      g[k.gate_b + u] += dt;
      for (std::size_t j = 0; j < d; ++j) g[k.gate_w + u * d + j] += dt * x[j];
    }
  }

  static ForwardResult run_forward(const ParamVector& params, const ScorerSpec& spec,
                                   std::span<const double> x) {
    if (x.size() != spec.input_dim) {
      throw ShapeError("forward: input has " + std::to_string(x.size()) + " features, scorer expects " +
                       std::to_string(spec.input_dim));
    }
    ForwardResult r;
    r.logits.assign(spec.output_dim, 0.0);
    ForwardTape& tape = r.tape;
    tape.params_ = &params;
    tape.spec_ = &spec;
    tape.input_.assign(x.begin(), x.end());
    const auto w = params.values();
    switch (spec.kind) {
      case ScorerKind::mlp:
        mlp_forward(spec, w, 0, tape, r.logits);
        break;
      case ScorerKind::kernel_head:
        kernel_forward(spec, w, 0, tape, r.logits);
        break;
      case ScorerKind::composite:
        mlp_forward(spec, w, 0, tape, r.logits);
        kernel_forward(spec, w, mlp_size(spec), tape, r.logits);
        break;
    }
    return r;
  }

  static ParamVector zero_grad(const ForwardTape& tape) {
    if (tape.params_ == nullptr) throw UsageError("backward: tape was never filled by forward()");
    return tape.params_->zeros_like();
  }

  static void run_backward(ForwardTape& tape, std::span<const double> dlogits, ParamVector& grad) {
    if (tape.spec_ == nullptr) throw UsageError("backward: tape was never filled by forward()");
    if (tape.consumed_) throw UsageError("backward: tape already consumed");
    const ScorerSpec& spec = *tape.spec_;
    if (dlogits.size() != spec.output_dim) {
      throw ShapeError("backward: cotangent has " + std::to_string(dlogits.size()) +
                       " entries, scorer has " + std::to_string(spec.output_dim) + " logits");
    }
    if (!grad.same_layout(*tape.params_)) throw ShapeError("backward: gradient layout mismatch");
    tape.consumed_ = true;
    const auto w = tape.params_->values();
    auto g = grad.values();
    switch (spec.kind) {
      case ScorerKind::mlp:
        mlp_backward(spec, w, 0, tape, dlogits, g);
        break;
      case ScorerKind::kernel_head:
        kernel_backward(spec, 0, tape, dlogits, g);
        break;
      case ScorerKind::composite:
        mlp_backward(spec, w, 0, tape, dlogits, g);
        kernel_backward(spec, mlp_size(spec), tape, dlogits, g);
        break;
    }
  }
};

std::size_t param_count(const ScorerSpec& spec) {
  std::size_t n = 0;
  if (spec.kind != ScorerKind::kernel_head) n += mlp_size(spec);
  if (spec.kind != ScorerKind::mlp) {
    n += spec.kernel_units * (1 + spec.input_dim) * (1 + spec.output_dim);
  }
  return n;
}

ParamVector make_layout(const ScorerSpec& spec) {
  spec.validate();
  std::vector<Segment> layout;
  std::size_t offset = 0;
  switch (spec.kind) {
    case ScorerKind::mlp:
      append_mlp(spec, "", layout, offset);
      break;
    case ScorerKind::kernel_head:
      append_kernel(spec, "", layout, offset);
      break;
    case ScorerKind::composite:
      append_mlp(spec, "mlp/", layout, offset);
      append_kernel(spec, "kernel/", layout, offset);
      break;
  }
  return ParamVector(std::move(layout));
}

ParamVector init_params(const ScorerSpec& spec, std::uint64_t seed) {
  ParamVector p = make_layout(spec);
  std::mt19937_64 rng(seed);
  auto values = p.values();
  for (const Segment& s : p.layout()) {
    if (s.bias) continue;
    const std::size_t fan_in = s.shape.back();
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < s.size(); ++i) values[s.offset + i] = dist(rng);
  }
  return p;
}

ForwardResult forward(const ParamVector& params, const ScorerSpec& spec, std::span<const double> x) {
  if (params.size() != param_count(spec)) {
    throw ShapeError("forward: parameter vector does not match scorer layout");
  }
  return ScorerOps::run_forward(params, spec, x);
}

std::vector<double> forward_logits(const ParamVector& params, const ScorerSpec& spec,
                                   std::span<const double> x) {
  return forward(params, spec, x).logits;
}

ParamVector backward(ForwardTape& tape, std::span<const double> dlogits) {
  ParamVector grad = ScorerOps::zero_grad(tape);
  ScorerOps::run_backward(tape, dlogits, grad);
  return grad;
}

void backward_accumulate(ForwardTape& tape, std::span<const double> dlogits, ParamVector& grad) {
  ScorerOps::run_backward(tape, dlogits, grad);
}

double kernel_rbf(double t, double bandwidth) {
  const double s = t / bandwidth;
  return std::exp(-s * s);
}

const char* to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::mlp:
      return "mlp";
    case ScorerKind::kernel_head:
      return "kernel_head";
    case ScorerKind::composite:
      return "composite";
  }
  return "?";
}

const char* to_string(Activation act) { return act == Activation::relu ? "relu" : "tanh"; }

ScorerKind scorer_kind_from_string(const std::string& s) {
  if (s == "mlp") return ScorerKind::mlp;
  if (s == "kernel_head") return ScorerKind::kernel_head;
  if (s == "composite") return ScorerKind::composite;
  throw ConfigError("unknown scorer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace biascorr

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "metanode/adiff.hpp"

namespace metanode::field {

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t parameter_count() const { return in * out + out; }
};

/// Shape of the tanh MLP vector field:
///   Linear(D->H), (hidden_layers-1) x Linear(H->H), Linear(H->D),
/// with tanh after every linear layer except the last.
struct FieldSpec {
  std::size_t input_dim = 23;
  std::size_t hidden_dim = 10;
  std::size_t hidden_layers = 4;

  /// The shipped default profile: D = 23, H = 10, four hidden layers.
  static FieldSpec paper() { return {}; }
  static FieldSpec with_dim(std::size_t dim) { return {dim, 10, 4}; }

  void validate() const;
  std::vector<LayerShape> layers() const;
  std::size_t parameter_count() const;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

/// Flat parameter vector. Layout per layer, in order: weight (out x in,
/// row-major) followed by bias (out).
class FieldParams {
 public:
  explicit FieldParams(FieldSpec spec);
  FieldParams(FieldSpec spec, std::vector<double> theta);

  const FieldSpec& spec() const { return spec_; }
  std::span<const double> theta() const { return theta_; }
  std::span<double> theta() { return theta_; }

  /// Offsets of each layer's weight block within theta.
  const std::vector<std::size_t>& layer_offsets() const { return offsets_; }

  friend bool operator==(const FieldParams&, const FieldParams&) = default;

 private:
  FieldSpec spec_;
  std::vector<std::size_t> offsets_;
  std::vector<double> theta_;
};

/// Weights ~ Normal(0, 0.1) from NormalSampler(seed); biases zero.
FieldParams init_params(const FieldSpec& spec, std::uint64_t seed);

/// Untaped evaluation of du/dt = f(u). Throws ShapeError on dimension mismatch.
void eval(const FieldParams& params, std::span<const double> u, std::span<double> du);
std::vector<double> eval(const FieldParams& params, std::span<const double> u);

/// Parameters bound to a tape as leaves, one weight and one bias leaf per
/// layer, so that many evaluations share the same leaves.
class TapedField {
 public:
  TapedField(const FieldParams& params, adiff::Tape& tape, bool requires_grad = true);

  adiff::Var operator()(adiff::Var u) const;

  /// Gathers d(root)/d(theta) into `grad` in FieldParams layout.
  void gather_gradient(const adiff::Gradients& grads, std::span<double> grad) const;

  const FieldSpec& spec() const { return spec_; }

 private:
  FieldSpec spec_;
  adiff::Tape* tape_;
  std::vector<adiff::Var> weights_;
  std::vector<adiff::Var> biases_;
};

/// One-off taped evaluation (binds fresh leaves on every call).
adiff::Var eval(const FieldParams& params, adiff::Var u, adiff::Tape& tape);

// Checkpoint file, version 1, all integers and floats little-endian:
//   offset  size  field
//   0       8     magic "MNODECKP"
//   8       4     u32 format version (1)
//   12      4     u32 input_dim
//   16      4     u32 hidden_dim
//   20      4     u32 hidden_layers
//   24      8     u64 init seed
//   32      8     u64 parameter count N
//   40      8N    f64 theta[0..N)
struct Checkpoint {
  FieldParams params;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const FieldParams& params,
                     std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metanode::field

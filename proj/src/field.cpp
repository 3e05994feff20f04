#include "metanode/field.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "metanode/errors.hpp"
#include "metanode/rng.hpp"

namespace metanode::field {

void FieldSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || hidden_layers == 0)
    throw ConfigError("field: input_dim, hidden_dim and hidden_layers must be positive");
}

std::vector<LayerShape> FieldSpec::layers() const {
  validate();
  std::vector<LayerShape> out;
  out.push_back({input_dim, hidden_dim});
  for (std::size_t i = 1; i < hidden_layers; ++i) out.push_back({hidden_dim, hidden_dim});
  out.push_back({hidden_dim, input_dim});
  return out;
}

std::size_t FieldSpec::parameter_count() const {
  std::size_t n = 0;
  for (const LayerShape& l : layers()) n += l.parameter_count();
  return n;
}

FieldParams::FieldParams(FieldSpec spec) : FieldParams(spec, std::vector<double>(spec.parameter_count(), 0.0)) {}

FieldParams::FieldParams(FieldSpec spec, std::vector<double> theta)
    : spec_(spec), theta_(std::move(theta)) {
  std::size_t offset = 0;
  for (const LayerShape& l : spec_.layers()) {
    offsets_.push_back(offset);
    offset += l.parameter_count();
  }
  if (theta_.size() != offset)
    throw ShapeError("field: theta has " + std::to_string(theta_.size()) +
                     " entries, spec needs " + std::to_string(offset));
  for (double v : theta_)
    if (!std::isfinite(v)) throw NumericalError("field: non-finite parameter");
}

FieldParams init_params(const FieldSpec& spec, std::uint64_t seed) {
  FieldParams params(spec);
  NormalSampler rng(seed);
  auto theta = params.theta();
  const auto layers = spec.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t off = params.layer_offsets()[l];
    for (std::size_t i = 0; i < layers[l].in * layers[l].out; ++i)
      theta[off + i] = rng.normal(0.0, 0.1);
  }
  return params;
}

void eval(const FieldParams& params, std::span<const double> u, std::span<double> du) {
  const FieldSpec& spec = params.spec();
  if (u.size() != spec.input_dim || du.size() != spec.input_dim)
    throw ShapeError("field: state has dimension " + std::to_string(u.size()) +
                     ", field expects " + std::to_string(spec.input_dim));
  const auto layers = spec.layers();
  const auto theta = params.theta();
  std::vector<double> x(u.begin(), u.end());
  std::vector<double> y;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& shape = layers[l];
    const double* w = theta.data() + params.layer_offsets()[l];
    const double* b = w + shape.in * shape.out;
    y.assign(shape.out, 0.0);
    for (std::size_t i = 0; i < shape.out; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < shape.in; ++j) acc += w[i * shape.in + j] * x[j];
      acc += b[i];
      y[i] = (l + 1 < layers.size()) ? std::tanh(acc) : acc;
    }
    x.swap(y);
  }
  std::copy(x.begin(), x.end(), du.begin());
}

std::vector<double> eval(const FieldParams& params, std::span<const double> u) {
  std::vector<double> du(params.spec().input_dim);
  eval(params, u, du);
  return du;
}

TapedField::TapedField(const FieldParams& params, adiff::Tape& tape, bool requires_grad)
    : spec_(params.spec()), tape_(&tape) {
  const auto layers = spec_.layers();
  const auto theta = params.theta();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    const std::size_t off = params.layer_offsets()[l];
    weights_.push_back(tape.leaf(theta.subspan(off, s.in * s.out), {s.out, s.in}, requires_grad));
    biases_.push_back(tape.leaf(theta.subspan(off + s.in * s.out, s.out), {s.out, 1}, requires_grad));
  }
}

adiff::Var TapedField::operator()(adiff::Var u) const {
  if (u.shape() != adiff::Shape{spec_.input_dim, 1})
    throw ShapeError("field: state has dimension " + std::to_string(u.shape().size()) +
                     ", field expects " + std::to_string(spec_.input_dim));
  adiff::Var x = u;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = adiff::add(*tape_, adiff::matmul(*tape_, weights_[l], x), biases_[l]);
    if (l + 1 < weights_.size()) x = adiff::tanh(*tape_, x);
  }
  return x;
}

void TapedField::gather_gradient(const adiff::Gradients& grads, std::span<double> grad) const {
  if (grad.size() != spec_.parameter_count())
    throw ShapeError("field: gradient buffer has wrong length");
  std::size_t off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (adiff::Var v : {weights_[l], biases_[l]}) {
      const auto g = grads.wrt(v);
      std::copy(g.begin(), g.end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
      off += g.size();
    }
  }
}

adiff::Var eval(const FieldParams& params, adiff::Var u, adiff::Tape& tape) {
  return TapedField(params, tape)(u);
}

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'N', 'O', 'D', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos, const std::filesystem::path& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) throw IoError("checkpoint truncated: " + path.string());
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FieldParams& params,
                     std::uint64_t seed) {
  std::string buf(kMagic.begin(), kMagic.end());
  const FieldSpec& s = params.spec();
  put_le(buf, kVersion);
  put_le(buf, static_cast<std::uint32_t>(s.input_dim));
  put_le(buf, static_cast<std::uint32_t>(s.hidden_dim));
  put_le(buf, static_cast<std::uint32_t>(s.hidden_layers));
  put_le(buf, seed);
  put_le(buf, static_cast<std::uint64_t>(params.theta().size()));
  for (double v : params.theta()) put_le(buf, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), buf.begin()))
    throw IoError("not a checkpoint file: " + path.string());
  std::size_t pos = kMagic.size();
  const auto version = get_le<std::uint32_t>(buf, pos, path);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  FieldSpec spec;
  spec.input_dim = get_le<std::uint32_t>(buf, pos, path);
  spec.hidden_dim = get_le<std::uint32_t>(buf, pos, path);
  spec.hidden_layers = get_le<std::uint32_t>(buf, pos, path);
  const auto seed = get_le<std::uint64_t>(buf, pos, path);
  const auto count = get_le<std::uint64_t>(buf, pos, path);
  spec.validate();
  if (count != spec.parameter_count())
    throw IoError("checkpoint parameter count does not match its header: " + path.string());
  std::vector<double> theta(count);
  for (auto& v : theta) v = get_le<double>(buf, pos, path);
  if (pos != buf.size()) throw IoError("trailing bytes in checkpoint: " + path.string());
  return {FieldParams(spec, std::move(theta)), seed};
}

}  // namespace metanode::field

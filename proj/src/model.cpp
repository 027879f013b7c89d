#include "dualglob/model.hpp"

#include <algorithm>
#include <cmath>

#include "dualglob/error.hpp"
#include "dualglob/rng.hpp"

namespace dualglob::nn {

EncoderConfig EncoderConfig::standard(std::size_t d_emb) {
  if (std::find(kEmbeddingSizes.begin(), kEmbeddingSizes.end(), d_emb) == kEmbeddingSizes.end())
    throw ConfigError("embedding size " + std::to_string(d_emb) +
                      " is not one of 64, 128, 256, 512, 1024");
  EncoderConfig c;
  c.layers = {{16, 16, 1}, {32, 12, 2}, {64, 9, 2}, {128, 6, 1}, {256, 6, 1}, {d_emb, 6, 1}};
  return c;
}

std::size_t EncoderConfig::latent_length(std::size_t length) const {
  for (const auto& l : layers) length = (length + l.stride - 1) / l.stride;
  return length;
}

void EncoderConfig::validate() const {
  if (layers.empty()) throw ConfigError("encoder needs at least one conv layer");
  for (const auto& l : layers)
    if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0)
      throw ConfigError("conv layer with zero channels, kernel or stride");
  if (in_channels == 0 || head_hidden == 0 || head_out == 0)
    throw ConfigError("encoder head sizes must be positive");
}

namespace {

template <typename T>
ContourBatch<T> build_batch(std::size_t n, auto&& contour_at, std::size_t begin, std::size_t end) {
  if (n == 0) throw ShapeError("empty contour batch");
  const std::size_t full = contour_at(0).size();
  end = std::min(end, full);
  if (begin >= end) throw ShapeError("empty frame range");
  const std::size_t L = end - begin;
  ContourBatch<T> out;
  out.x = Tensor<T>({n, 1, L});
  out.mask = FrameMask(n, L, 0);
  for (std::size_t b = 0; b < n; ++b) {
    const F0Contour& c = contour_at(b);
    if (c.size() != full) throw ShapeError("contours in a batch differ in length");
    for (std::size_t t = 0; t < L; ++t) {
      const bool v = c.voiced(begin + t);
      out.mask.bits[b * L + t] = v ? 1 : 0;
      out.x[b * L + t] = v ? static_cast<T>(c.values[begin + t]) : T(0);
    }
  }
  return out;
}

template <typename T>
Var<T> uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return Var<T>::parameter(std::move(t));
}

template <typename T>
Var<T> zero_param(Shape shape) {
  return Var<T>::parameter(Tensor<T>(std::move(shape), T(0)));
}

template <typename T>
typename Model<T>::Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  typename Model<T>::Mlp m;
  m.w1 = uniform_param<T>({hidden, in}, std::sqrt(6.0 / static_cast<double>(in)), rng);
  m.b1 = zero_param<T>({hidden});
  m.w2 = uniform_param<T>({out, hidden}, std::sqrt(6.0 / static_cast<double>(hidden)), rng);
  m.b2 = zero_param<T>({out});
  return m;
}

template <typename T>
Var<T> run_mlp(const typename Model<T>::Mlp& m, const Var<T>& x) {
  return linear(relu(linear(x, m.w1, m.b1)), m.w2, m.b2);
}

template <typename T>
Var<T> copy_param(const Var<T>& v) {
  return Var<T>::parameter(v.value());
}

}  // namespace

template <typename T>
ContourBatch<T> ContourBatch<T>::from(std::span<const F0Contour> contours, std::size_t begin,
                                      std::size_t end) {
  return build_batch<T>(
      contours.size(), [&](std::size_t i) -> const F0Contour& { return contours[i]; }, begin, end);
}

template <typename T>
ContourBatch<T> ContourBatch<T>::from(std::span<const F0Contour* const> contours,
                                      std::size_t begin, std::size_t end) {
  return build_batch<T>(
      contours.size(), [&](std::size_t i) -> const F0Contour& { return *contours[i]; }, begin,
      end);
}

template <typename T>
Model<T>::Model(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, Stream::init));
  std::size_t in = config_.in_channels;
  for (const auto& spec : config_.layers) {
    const auto fan_in = static_cast<double>(in * spec.kernel);
    Conv c;
    c.spec = spec;
    c.weight = uniform_param<T>({spec.out_channels, in, spec.kernel}, std::sqrt(6.0 / fan_in), rng);
    c.bias = zero_param<T>({spec.out_channels});
    convs_.push_back(std::move(c));
    in = spec.out_channels;
  }
  projector_ = make_mlp<T>(config_.d_emb(), config_.head_hidden, config_.head_out, rng);
  predictor_ = make_mlp<T>(config_.head_out, config_.head_hidden, config_.head_out, rng);
}

template <typename T>
Var<T> Model<T>::encode(const ContourBatch<T>& batch) const {
  if (batch.x.rank() != 3 || batch.x.dim(1) != config_.in_channels)
    throw ShapeError("encoder expects [B, " + std::to_string(config_.in_channels) +
                     ", L] input, got " + shape_str(batch.x.shape()));
  Var<T> h(batch.x);
  FrameMask mask = batch.mask;
  for (const auto& c : convs_) {
    h = relu(conv1d(h, c.weight, c.bias, c.spec.stride));
    mask = mask.downsample(c.spec.stride);
  }
  return masked_gap(h, mask);
}

template <typename T>
Var<T> Model<T>::head(const Var<T>& z) const {
  return run_mlp<T>(projector_, z);
}

template <typename T>
Var<T> Model<T>::project(const Var<T>& z) const {
  return l2_normalize_rows(head(z));
}

template <typename T>
Var<T> Model<T>::predict(const Var<T>& z) const {
  return l2_normalize_rows(run_mlp<T>(predictor_, head(z)));
}

template <typename T>
std::vector<Var<T>> Model<T>::parameters() const {
  std::vector<Var<T>> out;
  for (const auto& c : convs_) {
    out.push_back(c.weight);
    out.push_back(c.bias);
  }
  for (const auto* m : {&projector_, &predictor_}) {
    out.push_back(m->w1);
    out.push_back(m->b1);
    out.push_back(m->w2);
    out.push_back(m->b2);
  }
  return out;
}

template <typename T>
std::vector<std::string> Model<T>::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.push_back("conv" + std::to_string(i + 1) + ".weight");
    out.push_back("conv" + std::to_string(i + 1) + ".bias");
  }
  for (const char* h : {"projector", "predictor"}) {
    for (const char* p : {"w1", "b1", "w2", "b2"}) out.push_back(std::string(h) + "." + p);
  }
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value().size();
  return n;
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model out;
  out.config_ = config_;
  for (const auto& c : convs_) out.convs_.push_back({c.spec, copy_param(c.weight), copy_param(c.bias)});
  auto copy_mlp = [](const Mlp& m) {
    return Mlp{copy_param(m.w1), copy_param(m.b1), copy_param(m.w2), copy_param(m.b2)};
  };
  out.projector_ = copy_mlp(projector_);
  out.predictor_ = copy_mlp(predictor_);
  return out;
}

template struct ContourBatch<float>;
template struct ContourBatch<double>;
template class Model<float>;
template class Model<double>;

}  // namespace dualglob::nn

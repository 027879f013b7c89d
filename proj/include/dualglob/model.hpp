#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dualglob/autograd.hpp"
#include "dualglob/corpus.hpp"

namespace dualglob::nn {

inline constexpr std::array<std::size_t, 5> kEmbeddingSizes = {64, 128, 256, 512, 1024};

struct ConvSpec {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

struct EncoderConfig {
  std::vector<ConvSpec> layers;
  std::size_t in_channels = 1;
  std::size_t head_hidden = 64;
  std::size_t head_out = 64;

  // Six conv layers: kernels 16,12,9,6,6,6; strides 1,2,2,1,1,1;
  // channels 16,32,64,128,256,d_emb. d_emb must be one of kEmbeddingSizes.
  static EncoderConfig standard(std::size_t d_emb);

  std::size_t d_emb() const { return layers.back().out_channels; }
  // Length of the last feature map for an input of `length` frames.
  std::size_t latent_length(std::size_t length) const;
  void validate() const;
};

// Encoder input: values of invalid frames are zeroed so the encoder never
// reads them. Built from frames [begin, end) of each contour.
template <typename T>
struct ContourBatch {
  Tensor<T> x;  // [B, 1, L]
  FrameMask mask;

  static ContourBatch from(std::span<const F0Contour> contours, std::size_t begin = 0,
                           std::size_t end = static_cast<std::size_t>(-1));
  static ContourBatch from(std::span<const F0Contour* const> contours, std::size_t begin = 0,
                           std::size_t end = static_cast<std::size_t>(-1));
  std::size_t batch() const { return mask.batch; }
};

// Shared encoder E with projection head P and prediction head.
//   z = masked_gap(relu(conv_6(... relu(conv_1(x)))))
//   project(z) = normalize(P(z)), P = linear -> relu -> linear
//   predict(z) = normalize(Q(P(z))), Q = linear -> relu -> linear
template <typename T>
class Model {
 public:
  struct Conv {
    ConvSpec spec;
    Var<T> weight;  // [out, in, kernel]
    Var<T> bias;    // [out]
  };
  struct Mlp {
    Var<T> w1, b1, w2, b2;
  };

  Model() = default;
  // Kaiming-uniform fan-in weights, zero biases.
  Model(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  Var<T> encode(const ContourBatch<T>& batch) const;
  Var<T> head(const Var<T>& z) const;  // unnormalized projector output
  Var<T> project(const Var<T>& z) const;
  Var<T> predict(const Var<T>& z) const;

  // Fixed order: conv weight/bias per layer, projector, predictor.
  std::vector<Var<T>> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  // Deep copy with fresh parameter nodes.
  Model clone() const;

 private:
  EncoderConfig config_;
  std::vector<Conv> convs_;
  Mlp projector_;
  Mlp predictor_;
};

}  // namespace dualglob::nn

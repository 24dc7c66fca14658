#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sit/rng.hpp"
#include "sit/tensor.hpp"

namespace sit {

inline constexpr int64_t kRotationClasses = 4;

struct ModelConfig {
  int64_t image_size = 32;
  int64_t channels = 3;
  int64_t patch_size = 4;
  int64_t dim = 64;
  int64_t depth = 4;
  int64_t num_heads = 4;
  int64_t mlp_ratio = 4;
  int64_t contrastive_dim = 32;
  // 0 keeps the pretext heads (rotation + contrastive + reconstruction);
  // a positive value builds two classification heads of that width instead.
  int64_t head_classes = 0;

  int64_t grid() const { return image_size / patch_size; }
  int64_t num_patches() const { return grid() * grid(); }
  int64_t patch_dim() const { return patch_size * patch_size * channels; }
  // Two task tokens ride in front of the patch tokens.
  int64_t tokens() const { return num_patches() + 2; }
  int64_t mlp_hidden() const { return dim * mlp_ratio; }

  void validate() const;
  static ModelConfig preset(const std::string& name);
};

// Rearranges (N,C,H,W) images into (N, patches, patch_size^2*C) rows. The grid
// is traversed row-major and each row is laid out channel-major, then pixel
// row, then pixel column. Differentiable (a pure permutation).
template <typename T>
TensorT<T> patchify(const TensorT<T>& images, int64_t patch_size);

// Exact inverse of patchify for the given geometry.
template <typename T>
TensorT<T> unpatchify(const TensorT<T>& patches, int64_t channels, int64_t height, int64_t width,
                      int64_t patch_size);

template <typename T>
struct SiTOutputT {
  TensorT<T> reconstruction;     // (N, C, H, W)
  TensorT<T> rotation_logits;    // (N, 4)
  TensorT<T> contrastive;        // (N, contrastive_dim)
};

template <typename T>
struct ClassifierOutputT {
  TensorT<T> logits0;  // head on the first task token, (N, classes)
  TensorT<T> logits1;  // head on the second task token, (N, classes)
};

using SiTOutput = SiTOutputT<float>;
using ClassifierOutput = ClassifierOutputT<float>;

// Class-token-free vision transformer with two learned task tokens prepended
// to the patch sequence. Pre-norm blocks, GELU MLPs, learned position table
// over all tokens, final layer norm. Heads: per-patch reconstruction plus
// either the two pretext heads or two classification heads.
template <typename T>
class SiTModelT {
 public:
  SiTModelT(ModelConfig config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<ParameterT<T>>& parameters() { return params_; }
  const std::vector<ParameterT<T>>& parameters() const { return params_; }
  // nullptr when the name is unknown.
  ParameterT<T>* find(const std::string& name);
  int64_t parameter_count() const;
  static int64_t expected_parameter_count(const ModelConfig& config);

  void set_requires_grad(bool v);

  // (N,C,H,W) -> (N, tokens, dim) after the final norm.
  TensorT<T> encode(const TensorT<T>& images);
  // Pretext heads; model must have head_classes == 0.
  SiTOutputT<T> forward(const TensorT<T>& images);
  // Classification heads; model must have head_classes > 0.
  ClassifierOutputT<T> forward_classifier(const TensorT<T>& images);
  // Concatenated task-token embeddings, (N, 2*dim). Runs under whatever tape
  // is active; callers wanting frozen features simply call it without one.
  TensorT<T> probe_features(const TensorT<T>& images);

  // Swaps the two task heads for fresh classification heads of the given
  // width (reconstruction head is kept). Parameter names stay the same.
  void replace_heads_for_classification(int64_t classes, Rng& rng);

 private:
  struct Block {
    TensorT<T> n1g, n1b;
    TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;
    TensorT<T> n2g, n2b;
    TensorT<T> fc1w, fc1b, fc2w, fc2b;
  };

  TensorT<T> reg(const std::string& name, Shape shape);
  void init_params(uint64_t seed);
  void check_images(const TensorT<T>& images) const;

  ModelConfig config_;
  std::vector<ParameterT<T>> params_;

  TensorT<T> patch_w_, patch_b_;
  TensorT<T> pos_embed_;
  TensorT<T> rot_token_, contr_token_;
  std::vector<Block> blocks_;
  TensorT<T> norm_g_, norm_b_;
  TensorT<T> recon_w_, recon_b_;
  TensorT<T> rot_head_w_, rot_head_b_;
  TensorT<T> contr_head_w_, contr_head_b_;
};

using SiTModel = SiTModelT<float>;

}  // namespace sit

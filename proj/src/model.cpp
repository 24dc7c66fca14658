#include "sit/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sit/autograd.hpp"
#include "sit/ops.hpp"

namespace sit {

void ModelConfig::validate() const {
  if (image_size <= 0 || channels <= 0 || patch_size <= 0 || dim <= 0 || depth <= 0 || num_heads <= 0 ||
      mlp_ratio <= 0 || contrastive_dim <= 0 || head_classes < 0) {
    throw std::invalid_argument("model config: all sizes must be positive");
  }
  if (image_size % patch_size != 0) {
    throw std::invalid_argument("model config: image_size " + std::to_string(image_size) +
                                " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (dim % num_heads != 0) {
    throw std::invalid_argument("model config: dim " + std::to_string(dim) + " not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "tiny-cifar") {
    return c;
  }
  if (name == "tiny-stl") {
    c.image_size = 64;
    c.patch_size = 8;
    return c;
  }
  if (name == "vitb-paper") {
    c.image_size = 224;
    c.patch_size = 16;
    c.dim = 768;
    c.depth = 12;
    c.num_heads = 12;
    c.contrastive_dim = 512;
    return c;
  }
  throw std::invalid_argument("unknown model preset '" + name + "' (tiny-cifar, tiny-stl, vitb-paper)");
}

template <typename T>
TensorT<T> patchify(const TensorT<T>& images, int64_t patch_size) {
  if (images.rank() != 4) {
    throw std::invalid_argument("patchify: expects (N,C,H,W), got " + shape_str(images.shape()));
  }
  const int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (patch_size <= 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw std::invalid_argument("patchify: image " + shape_str(images.shape()) + " not divisible into " +
                                std::to_string(patch_size) + "-pixel patches");
  }
  const int64_t p = patch_size, gw = w / p, gh = h / p, np = gh * gw, pd = c * p * p;
  TensorT<T> out({n, np, pd});
  const T* src = images.data();
  T* dst = out.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ic = 0; ic < c; ++ic) {
      for (int64_t ih = 0; ih < h; ++ih) {
        for (int64_t iw = 0; iw < w; ++iw) {
          const int64_t patch = (ih / p) * gw + iw / p;
          const int64_t inner = ic * p * p + (ih % p) * p + iw % p;
          dst[(in * np + patch) * pd + inner] = src[((in * c + ic) * h + ih) * w + iw];
        }
      }
    }
  }
  if (tracing<T>({&images})) {
    out.set_requires_grad(true);
    auto xn = images.node(), on = out.node();
    GradTape<T>::active()->record([xn, on, n, c, h, w, p, gw, np, pd] {
      if (on->grad.empty() || !xn->requires_grad) return;
      const T* gy = on->grad.data();
      T* gx = grad_buf(xn).data();
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t ic = 0; ic < c; ++ic) {
          for (int64_t ih = 0; ih < h; ++ih) {
            for (int64_t iw = 0; iw < w; ++iw) {
              const int64_t patch = (ih / p) * gw + iw / p;
              const int64_t inner = ic * p * p + (ih % p) * p + iw % p;
              gx[((in * c + ic) * h + ih) * w + iw] += gy[(in * np + patch) * pd + inner];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> unpatchify(const TensorT<T>& patches, int64_t channels, int64_t height, int64_t width,
                      int64_t patch_size) {
  if (patches.rank() != 3) {
    throw std::invalid_argument("unpatchify: expects (N,patches,patch_dim), got " + shape_str(patches.shape()));
  }
  const int64_t p = patch_size;
  if (p <= 0 || height % p != 0 || width % p != 0) {
    throw std::invalid_argument("unpatchify: geometry not divisible by patch size");
  }
  const int64_t gw = width / p, gh = height / p, np = gh * gw, pd = channels * p * p;
  if (patches.dim(1) != np || patches.dim(2) != pd) {
    throw std::invalid_argument("unpatchify: " + shape_str(patches.shape()) + " does not match " +
                                std::to_string(np) + " patches of " + std::to_string(pd) + " values");
  }
  const int64_t n = patches.dim(0), c = channels, h = height, w = width;
  TensorT<T> out({n, c, h, w});
  const T* src = patches.data();
  T* dst = out.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ic = 0; ic < c; ++ic) {
      for (int64_t ih = 0; ih < h; ++ih) {
        for (int64_t iw = 0; iw < w; ++iw) {
          const int64_t patch = (ih / p) * gw + iw / p;
          const int64_t inner = ic * p * p + (ih % p) * p + iw % p;
          dst[((in * c + ic) * h + ih) * w + iw] = src[(in * np + patch) * pd + inner];
        }
      }
    }
  }
  if (tracing<T>({&patches})) {
    out.set_requires_grad(true);
    auto xn = patches.node(), on = out.node();
    GradTape<T>::active()->record([xn, on, n, c, h, w, p, gw, np, pd] {
      if (on->grad.empty() || !xn->requires_grad) return;
      const T* gy = on->grad.data();
      T* gx = grad_buf(xn).data();
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t ic = 0; ic < c; ++ic) {
          for (int64_t ih = 0; ih < h; ++ih) {
            for (int64_t iw = 0; iw < w; ++iw) {
              const int64_t patch = (ih / p) * gw + iw / p;
              const int64_t inner = ic * p * p + (ih % p) * p + iw % p;
              gx[(in * np + patch) * pd + inner] += gy[((in * c + ic) * h + ih) * w + iw];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
SiTModelT<T>::SiTModelT(ModelConfig config, uint64_t seed) : config_(config) {
  config_.validate();
  const int64_t d = config_.dim;
  patch_w_ = reg("patch_embed.weight", {config_.patch_dim(), d});
  patch_b_ = reg("patch_embed.bias", {d});
  pos_embed_ = reg("pos_embed", {config_.tokens(), d});
  rot_token_ = reg("rot_token", {d});
  contr_token_ = reg("contr_token", {d});
  blocks_.resize(static_cast<size_t>(config_.depth));
  for (int64_t i = 0; i < config_.depth; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    Block& b = blocks_[static_cast<size_t>(i)];
    b.n1g = reg(pre + "norm1.gamma", {d});
    b.n1b = reg(pre + "norm1.beta", {d});
    b.wq = reg(pre + "attn.wq.weight", {d, d});
    b.bq = reg(pre + "attn.wq.bias", {d});
    b.wk = reg(pre + "attn.wk.weight", {d, d});
    b.bk = reg(pre + "attn.wk.bias", {d});
    b.wv = reg(pre + "attn.wv.weight", {d, d});
    b.bv = reg(pre + "attn.wv.bias", {d});
    b.wo = reg(pre + "attn.wo.weight", {d, d});
    b.bo = reg(pre + "attn.wo.bias", {d});
    b.n2g = reg(pre + "norm2.gamma", {d});
    b.n2b = reg(pre + "norm2.beta", {d});
    b.fc1w = reg(pre + "mlp.fc1.weight", {d, config_.mlp_hidden()});
    b.fc1b = reg(pre + "mlp.fc1.bias", {config_.mlp_hidden()});
    b.fc2w = reg(pre + "mlp.fc2.weight", {config_.mlp_hidden(), d});
    b.fc2b = reg(pre + "mlp.fc2.bias", {d});
  }
  norm_g_ = reg("norm.gamma", {d});
  norm_b_ = reg("norm.beta", {d});
  recon_w_ = reg("recon_head.weight", {d, config_.patch_dim()});
  recon_b_ = reg("recon_head.bias", {config_.patch_dim()});
  const int64_t rot_out = config_.head_classes > 0 ? config_.head_classes : kRotationClasses;
  const int64_t con_out = config_.head_classes > 0 ? config_.head_classes : config_.contrastive_dim;
  rot_head_w_ = reg("rot_head.weight", {d, rot_out});
  rot_head_b_ = reg("rot_head.bias", {rot_out});
  contr_head_w_ = reg("contr_head.weight", {d, con_out});
  contr_head_b_ = reg("contr_head.bias", {con_out});
  init_params(seed);
}

template <typename T>
TensorT<T> SiTModelT<T>::reg(const std::string& name, Shape shape) {
  TensorT<T> t(std::move(shape));
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

namespace {

template <typename T>
void init_parameter(ParameterT<T>& p, Rng& rng) {
  const std::string& name = p.name;
  TensorT<T>& t = p.tensor;
  if (name == "pos_embed" || name == "rot_token" || name == "contr_token") {
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.truncated_normal(0.02));
  } else if (name.ends_with(".weight")) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  } else if (name.ends_with(".gamma")) {
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = T(1);
  } else {
    // beta and bias start at zero
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = T(0);
  }
}

}  // namespace

template <typename T>
void SiTModelT<T>::init_params(uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_) init_parameter(p, rng);
}

template <typename T>
ParameterT<T>* SiTModelT<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
int64_t SiTModelT<T>::parameter_count() const {
  int64_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

template <typename T>
int64_t SiTModelT<T>::expected_parameter_count(const ModelConfig& config) {
  const int64_t d = config.dim, m = config.mlp_hidden(), pd = config.patch_dim();
  const int64_t rot_out = config.head_classes > 0 ? config.head_classes : kRotationClasses;
  const int64_t con_out = config.head_classes > 0 ? config.head_classes : config.contrastive_dim;
  int64_t total = pd * d + d;                 // patch embed
  total += config.tokens() * d;               // position table
  total += 2 * d;                             // task tokens
  const int64_t block = 2 * d + 4 * (d * d + d) + 2 * d + (d * m + m) + (m * d + d);
  total += config.depth * block;
  total += 2 * d;                             // final norm
  total += d * pd + pd;                       // reconstruction head
  total += d * rot_out + rot_out;
  total += d * con_out + con_out;
  return total;
}

template <typename T>
void SiTModelT<T>::set_requires_grad(bool v) {
  for (auto& p : params_) p.tensor.set_requires_grad(v);
}

template <typename T>
void SiTModelT<T>::check_images(const TensorT<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.channels || images.dim(2) != config_.image_size ||
      images.dim(3) != config_.image_size) {
    throw std::invalid_argument("model: expected images (N," + std::to_string(config_.channels) + "," +
                                std::to_string(config_.image_size) + "," + std::to_string(config_.image_size) +
                                "), got " + shape_str(images.shape()));
  }
}

template <typename T>
TensorT<T> SiTModelT<T>::encode(const TensorT<T>& images) {
  check_images(images);
  const int64_t n = images.dim(0);
  const int64_t np = config_.num_patches();
  const int64_t d = config_.dim;
  const int64_t s = config_.tokens();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / config_.num_heads));

  auto patches = patchify(images, config_.patch_size);
  auto emb = linear(reshape(patches, {n * np, config_.patch_dim()}), patch_w_, patch_b_);
  auto x = prepend_task_tokens(reshape(emb, {n, np, d}), rot_token_, contr_token_);
  x = add(x, pos_embed_);
  for (auto& blk : blocks_) {
    auto flat = reshape(layer_norm(x, blk.n1g, blk.n1b), {n * s, d});
    auto q = split_heads(reshape(linear(flat, blk.wq, blk.bq), {n, s, d}), config_.num_heads);
    auto k = split_heads(reshape(linear(flat, blk.wk, blk.bk), {n, s, d}), config_.num_heads);
    auto v = split_heads(reshape(linear(flat, blk.wv, blk.bv), {n, s, d}), config_.num_heads);
    auto att = softmax(mul_scalar(bmm(q, k, true), scale), 2);
    auto ctx = merge_heads(bmm(att, v), config_.num_heads);
    auto proj = reshape(linear(reshape(ctx, {n * s, d}), blk.wo, blk.bo), {n, s, d});
    x = add(x, proj);
    auto hidden = gelu(linear(reshape(layer_norm(x, blk.n2g, blk.n2b), {n * s, d}), blk.fc1w, blk.fc1b));
    x = add(x, reshape(linear(hidden, blk.fc2w, blk.fc2b), {n, s, d}));
  }
  return layer_norm(x, norm_g_, norm_b_);
}

template <typename T>
SiTOutputT<T> SiTModelT<T>::forward(const TensorT<T>& images) {
  if (config_.head_classes != 0) {
    throw std::invalid_argument("forward: model carries classification heads; use forward_classifier");
  }
  auto enc = encode(images);
  const int64_t n = images.dim(0);
  const int64_t np = config_.num_patches();
  const int64_t d = config_.dim;
  SiTOutputT<T> out;
  out.rotation_logits = linear(reshape(slice_tokens(enc, 0, 1), {n, d}), rot_head_w_, rot_head_b_);
  out.contrastive = linear(reshape(slice_tokens(enc, 1, 1), {n, d}), contr_head_w_, contr_head_b_);
  auto rec = linear(reshape(slice_tokens(enc, 2, np), {n * np, d}), recon_w_, recon_b_);
  out.reconstruction = unpatchify(reshape(rec, {n, np, config_.patch_dim()}), config_.channels,
                                  config_.image_size, config_.image_size, config_.patch_size);
  return out;
}

template <typename T>
ClassifierOutputT<T> SiTModelT<T>::forward_classifier(const TensorT<T>& images) {
  if (config_.head_classes <= 0) {
    throw std::invalid_argument("forward_classifier: model still carries pretext heads");
  }
  auto enc = encode(images);
  const int64_t n = images.dim(0);
  const int64_t d = config_.dim;
  ClassifierOutputT<T> out;
  out.logits0 = linear(reshape(slice_tokens(enc, 0, 1), {n, d}), rot_head_w_, rot_head_b_);
  out.logits1 = linear(reshape(slice_tokens(enc, 1, 1), {n, d}), contr_head_w_, contr_head_b_);
  return out;
}

template <typename T>
TensorT<T> SiTModelT<T>::probe_features(const TensorT<T>& images) {
  auto enc = encode(images);
  const int64_t n = images.dim(0);
  const int64_t d = config_.dim;
  auto t0 = reshape(slice_tokens(enc, 0, 1), {n, d});
  auto t1 = reshape(slice_tokens(enc, 1, 1), {n, d});
  return concat_cols(t0, t1);
}

template <typename T>
void SiTModelT<T>::replace_heads_for_classification(int64_t classes, Rng& rng) {
  if (classes <= 0) throw std::invalid_argument("replace_heads_for_classification: classes must be positive");
  config_.head_classes = classes;
  const int64_t d = config_.dim;
  rot_head_w_ = TensorT<T>({d, classes});
  rot_head_b_ = TensorT<T>({classes});
  contr_head_w_ = TensorT<T>({d, classes});
  contr_head_b_ = TensorT<T>({classes});
  const TensorT<T>* repl[4] = {&rot_head_w_, &rot_head_b_, &contr_head_w_, &contr_head_b_};
  const char* names[4] = {"rot_head.weight", "rot_head.bias", "contr_head.weight", "contr_head.bias"};
  for (int i = 0; i < 4; ++i) {
    ParameterT<T>* p = find(names[i]);
    p->tensor = *repl[i];
    p->tensor.set_requires_grad(true);
    init_parameter(*p, rng);
  }
}

#define SIT_INSTANTIATE_MODEL(T)                                                             \
  template TensorT<T> patchify(const TensorT<T>&, int64_t);                                  \
  template TensorT<T> unpatchify(const TensorT<T>&, int64_t, int64_t, int64_t, int64_t);     \
  template class SiTModelT<T>;

SIT_INSTANTIATE_MODEL(float)
SIT_INSTANTIATE_MODEL(double)

#undef SIT_INSTANTIATE_MODEL

}  // namespace sit

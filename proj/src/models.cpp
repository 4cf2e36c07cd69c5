#include "sige/models.hpp"

#include <cmath>

namespace sige {

namespace {

std::vector<float> init_weights(Rng& rng, int c_out, int c_in, int k) {
  float bound = 1.0f / std::sqrt(static_cast<float>(c_in * k * k));
  std::vector<float> w(static_cast<size_t>(c_out) * c_in * k * k);
  for (float& v : w) v = rng.uniform(-bound, bound);
  return w;
}

ConvLayer make_conv(Rng& rng, int c_in, int c_out, int k, int stride) {
  ConvLayer c;
  c.c_in = c_in;
  c.c_out = c_out;
  c.k = k;
  c.stride = stride;
  c.weight = init_weights(rng, c_out, c_in, k);
  c.bias.resize(c_out);
  for (float& v : c.bias) v = rng.uniform(-0.05f, 0.05f);
  return c;
}

NormLayer make_norm(Rng& rng, NormKind kind, int channels, int groups) {
  NormLayer n;
  n.kind = kind;
  n.groups = kind == NormKind::Instance ? channels : groups;
  n.gamma.resize(channels);
  n.beta.resize(channels);
  for (float& v : n.gamma) v = rng.uniform(0.8f, 1.2f);
  for (float& v : n.beta) v = rng.uniform(-0.1f, 0.1f);
  if (kind == NormKind::Batch) {
    n.running_mean.resize(channels);
    n.running_var.resize(channels);
    for (float& v : n.running_mean) v = rng.uniform(-0.3f, 0.3f);
    for (float& v : n.running_var) v = rng.uniform(0.5f, 1.5f);
  }
  return n;
}

Layer conv_layer(Rng& rng, const std::string& name, int c_in, int c_out, int k,
                 int stride) {
  Layer L;
  L.kind = stride == 2 ? LayerKind::Downsample : LayerKind::Conv;
  L.name = name;
  L.conv = make_conv(rng, c_in, c_out, k, stride);
  return L;
}

Layer norm_layer(Rng& rng, const std::string& name, NormKind kind, int channels,
                 int groups) {
  Layer L;
  L.kind = LayerKind::Norm;
  L.name = name;
  L.norm = make_norm(rng, kind, channels, groups);
  return L;
}

Layer act_layer(const std::string& name, ActKind act) {
  Layer L;
  L.kind = LayerKind::Activation;
  L.name = name;
  L.act = act;
  return L;
}

Layer upsample_layer(const std::string& name) {
  Layer L;
  L.kind = LayerKind::Upsample;
  L.name = name;
  return L;
}

Layer resblock_layer(Rng& rng, const std::string& name, int c_in, int c_out,
                     NormKind kind, int groups, ActKind act) {
  Layer L;
  L.kind = LayerKind::ResBlock;
  L.name = name;
  L.res.conv1 = make_conv(rng, c_in, c_out, 3, 1);
  L.res.norm = make_norm(rng, kind, c_out, groups);
  L.res.act = act;
  L.res.conv2 = make_conv(rng, c_out, c_out, 3, 1);
  if (c_in != c_out) L.res.shortcut = make_conv(rng, c_in, c_out, 1, 1);
  return L;
}

ModelSpec build_conv3x3_128() {
  Rng rng(1001);
  ModelSpec m;
  m.name = "conv3x3_128";
  m.in_channels = 128;
  m.in_h = 256;
  m.in_w = 256;
  m.layers.push_back(conv_layer(rng, "conv", 128, 128, 3, 1));
  return m;
}

ModelSpec build_mini_unet(NormKind kind, const std::string& name,
                          uint32_t seed) {
  Rng rng(seed);
  ModelSpec m;
  m.name = name;
  m.in_channels = 3;
  m.in_h = 64;
  m.in_w = 64;
  m.layers.push_back(conv_layer(rng, "stem", 3, 16, 3, 1));
  m.layers.push_back(norm_layer(rng, "stem_norm", kind, 16, 4));
  m.layers.push_back(act_layer("stem_act", ActKind::Silu));
  m.layers.push_back(resblock_layer(rng, "rb_enc1", 16, 16, kind, 4, ActKind::Silu));
  m.layers.push_back(conv_layer(rng, "down1", 16, 32, 3, 2));
  m.layers.push_back(resblock_layer(rng, "rb_enc2", 32, 32, kind, 8, ActKind::Silu));
  m.layers.push_back(conv_layer(rng, "down2", 32, 64, 3, 2));
  m.layers.push_back(resblock_layer(rng, "rb_mid", 64, 64, kind, 8, ActKind::Silu));
  m.layers.push_back(upsample_layer("up1"));
  m.layers.push_back(resblock_layer(rng, "rb_dec1", 64, 32, kind, 8, ActKind::Silu));
  m.layers.push_back(upsample_layer("up2"));
  m.layers.push_back(resblock_layer(rng, "rb_dec2", 32, 16, kind, 4, ActKind::Silu));
  m.layers.push_back(conv_layer(rng, "head", 16, 3, 3, 1));
  return m;
}

ModelSpec build_gaugan_stack() {
  Rng rng(1004);
  ModelSpec m;
  m.name = "gaugan_stack_in";
  m.in_channels = 3;
  m.in_h = 64;
  m.in_w = 64;
  m.layers.push_back(conv_layer(rng, "enc1", 3, 16, 3, 2));
  m.layers.push_back(act_layer("enc1_act", ActKind::Relu));
  m.layers.push_back(conv_layer(rng, "enc2", 16, 32, 3, 2));
  m.layers.push_back(act_layer("enc2_act", ActKind::Relu));
  m.layers.push_back(
      resblock_layer(rng, "rb_mid", 32, 32, NormKind::Instance, 32, ActKind::Relu));
  m.layers.push_back(upsample_layer("up1"));
  m.layers.push_back(
      resblock_layer(rng, "rb_dec", 32, 16, NormKind::Instance, 16, ActKind::Relu));
  m.layers.push_back(upsample_layer("up2"));
  m.layers.push_back(conv_layer(rng, "head", 16, 3, 3, 1));
  return m;
}

}  // namespace

std::vector<std::string> toy_model_names() {
  return {"conv3x3_128", "mini_unet_gn", "mini_unet_bn", "gaugan_stack_in"};
}

ModelSpec toy_model(const std::string& name) {
  if (name == "conv3x3_128") return build_conv3x3_128();
  if (name == "mini_unet_gn") return build_mini_unet(NormKind::Group, name, 1002);
  if (name == "mini_unet_bn") return build_mini_unet(NormKind::Batch, name, 1003);
  if (name == "gaugan_stack_in") return build_gaugan_stack();
  throw ConfigError("unknown model: " + name +
                    " (expected one of conv3x3_128, mini_unet_gn, mini_unet_bn,"
                    " gaugan_stack_in, or a path to a model json)");
}

namespace {

uint64_t hash_vec(const std::vector<float>& v, uint64_t h) {
  return fnv1a64(v.data(), v.size() * sizeof(float), h);
}

uint64_t hash_conv_weights(const ConvLayer& c, uint64_t h) {
  h = hash_vec(c.weight, h);
  h = hash_vec(c.bias, h);
  return h;
}

uint64_t hash_norm_weights(const NormLayer& n, uint64_t h) {
  h = hash_vec(n.gamma, h);
  h = hash_vec(n.beta, h);
  h = hash_vec(n.running_mean, h);
  h = hash_vec(n.running_var, h);
  return h;
}

}  // namespace

uint64_t model_weight_hash(const ModelSpec& model) {
  uint64_t h = fnv1a64(model.name.data(), model.name.size());
  for (const Layer& L : model.layers) {
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        h = hash_conv_weights(L.conv, h);
        break;
      case LayerKind::Norm:
        h = hash_norm_weights(L.norm, h);
        break;
      case LayerKind::ResBlock:
        h = hash_conv_weights(L.res.conv1, h);
        h = hash_norm_weights(L.res.norm, h);
        h = hash_conv_weights(L.res.conv2, h);
        if (L.res.shortcut) h = hash_conv_weights(*L.res.shortcut, h);
        break;
      default:
        break;
    }
  }
  return h;
}

}  // namespace sige

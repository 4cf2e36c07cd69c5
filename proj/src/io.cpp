#include "sige/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sige {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

void put_u32(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw ConfigError(path + ": truncated tensor file");
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void write_sigt_raw(const std::string& path, uint32_t d0, uint32_t d1,
                    uint32_t d2, uint32_t d3, const float* data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError(path + ": cannot open for writing");
  os.write("SIGT", 4);
  put_u32(os, 1);
  put_u32(os, d0);
  put_u32(os, d1);
  put_u32(os, d2);
  put_u32(os, d3);
  size_t count = static_cast<size_t>(d0) * d1 * d2 * d3;
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32(os, bits);
  }
  if (!os) throw ConfigError(path + ": write failed");
}

struct RawSigt {
  uint32_t dims[4];
  std::vector<float> data;
};

RawSigt read_sigt_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SIGT", 4) != 0) {
    throw ConfigError(path + ": not a SIGT tensor file (bad magic)");
  }
  uint32_t version = get_u32(is, path);
  if (version != 1) {
    throw ConfigError(path + ": unsupported SIGT version " +
                      std::to_string(version));
  }
  RawSigt r;
  for (uint32_t& d : r.dims) d = get_u32(is, path);
  size_t count =
      static_cast<size_t>(r.dims[0]) * r.dims[1] * r.dims[2] * r.dims[3];
  if (count > (1ull << 31)) throw ConfigError(path + ": unreasonable tensor size");
  r.data.resize(count);
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = get_u32(is, path);
    std::memcpy(&r.data[i], &bits, 4);
  }
  char extra;
  if (is.read(&extra, 1)) throw ConfigError(path + ": trailing bytes");
  return r;
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
  write_sigt_raw(path, static_cast<uint32_t>(t.n), static_cast<uint32_t>(t.c),
                 static_cast<uint32_t>(t.h), static_cast<uint32_t>(t.w),
                 t.data.data());
}

Tensor load_tensor(const std::string& path) {
  RawSigt r = read_sigt_raw(path);
  for (uint32_t d : r.dims) {
    if (d == 0) throw ConfigError(path + ": zero dimension");
  }
  Tensor t(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]),
           static_cast<int>(r.dims[2]), static_cast<int>(r.dims[3]));
  t.data = std::move(r.data);
  return t;
}

void save_mask_pbm(const std::string& path, const DifferenceMask& m) {
  std::ofstream os(path);
  if (!os) throw ConfigError(path + ": cannot open for writing");
  os << "P1\n" << m.w << " " << m.h << "\n";
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      os << (m.at(y, x) ? '1' : '0') << (x + 1 == m.w ? '\n' : ' ');
    }
  }
  if (!os) throw ConfigError(path + ": write failed");
}

namespace {

std::string next_pbm_token(std::istream& is, const std::string& path) {
  std::string tok;
  while (is >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    return tok;
  }
  throw ConfigError(path + ": truncated PBM file");
}

}  // namespace

DifferenceMask load_mask_pbm(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ": cannot open");
  std::string magic = next_pbm_token(is, path);
  if (magic != "P1") {
    throw ConfigError(path + ": expected plain PBM (P1), got '" + magic + "'");
  }
  int w = std::stoi(next_pbm_token(is, path));
  int h = std::stoi(next_pbm_token(is, path));
  if (w < 1 || h < 1) throw ConfigError(path + ": bad PBM dimensions");
  DifferenceMask m;
  m.h = h;
  m.w = w;
  m.bits.assign(static_cast<size_t>(h) * w, 0);
  // P1 pixels may be packed without whitespace; read digit by digit.
  size_t filled = 0;
  char ch;
  while (filled < m.bits.size() && is.get(ch)) {
    if (ch == '0' || ch == '1') {
      m.bits[filled++] = ch == '1' ? 1 : 0;
    } else if (ch == '#') {
      std::string rest;
      std::getline(is, rest);
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      throw ConfigError(path + ": unexpected character in PBM payload");
    }
  }
  if (filled != m.bits.size()) throw ConfigError(path + ": truncated PBM file");
  return m;
}

Tensor mask_to_tensor(const DifferenceMask& m) {
  Tensor t(1, 1, m.h, m.w);
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) t.at(0, 0, y, x) = m.at(y, x) ? 1.0f : 0.0f;
  }
  return t;
}

DifferenceMask tensor_to_mask(const Tensor& t, float threshold) {
  DifferenceMask m;
  m.h = t.h;
  m.w = t.w;
  m.bits.assign(static_cast<size_t>(t.h) * t.w, 0);
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      bool on = false;
      for (int in = 0; in < t.n && !on; ++in) {
        for (int ic = 0; ic < t.c && !on; ++ic) {
          on = t.at(in, ic, y, x) > threshold;
        }
      }
      m.set(y, x, on);
    }
  }
  return m;
}

namespace {

Tensor vec_as_tensor(const std::vector<float>& v) {
  Tensor t(1, static_cast<int>(v.size()), 1, 1);
  t.data = v;
  return t;
}

json save_conv(const ConvLayer& c, const std::string& stem,
               const std::string& dir) {
  json j;
  j["c_in"] = c.c_in;
  j["c_out"] = c.c_out;
  j["k"] = c.k;
  j["stride"] = c.stride;
  Tensor w(c.c_out, c.c_in, c.k, c.k);
  w.data = c.weight;
  std::string wrel = "weights/" + stem + ".weight.sigt";
  save_tensor(dir + "/" + wrel, w);
  j["weight"] = wrel;
  if (!c.bias.empty()) {
    std::string brel = "weights/" + stem + ".bias.sigt";
    save_tensor(dir + "/" + brel, vec_as_tensor(c.bias));
    j["bias"] = brel;
  } else {
    j["bias"] = nullptr;
  }
  return j;
}

ConvLayer load_conv(const json& j, const fs::path& base,
                    const std::string& where) {
  ConvLayer c;
  c.c_in = j.at("c_in").get<int>();
  c.c_out = j.at("c_out").get<int>();
  c.k = j.at("k").get<int>();
  c.stride = j.at("stride").get<int>();
  Tensor w = load_tensor((base / j.at("weight").get<std::string>()).string());
  if (w.n != c.c_out || w.c != c.c_in || w.h != c.k || w.w != c.k) {
    throw ConfigError(where + ": weight tensor is " + w.shape_str() +
                      ", expected (" + std::to_string(c.c_out) + ", " +
                      std::to_string(c.c_in) + ", " + std::to_string(c.k) +
                      ", " + std::to_string(c.k) + ")");
  }
  c.weight = std::move(w.data);
  if (!j.at("bias").is_null()) {
    Tensor b = load_tensor((base / j.at("bias").get<std::string>()).string());
    if (static_cast<int>(b.numel()) != c.c_out) {
      throw ConfigError(where + ": bias size mismatch");
    }
    c.bias = std::move(b.data);
  }
  return c;
}

json save_norm(const NormLayer& n, const std::string& stem,
               const std::string& dir) {
  json j;
  j["kind"] = norm_name(n.kind);
  j["groups"] = n.groups;
  j["eps"] = n.eps;
  auto dump = [&](const std::vector<float>& v, const std::string& leaf) {
    std::string rel = "weights/" + stem + "." + leaf + ".sigt";
    save_tensor(dir + "/" + rel, vec_as_tensor(v));
    return rel;
  };
  j["gamma"] = dump(n.gamma, "gamma");
  j["beta"] = dump(n.beta, "beta");
  if (n.kind == NormKind::Batch) {
    j["running_mean"] = dump(n.running_mean, "running_mean");
    j["running_var"] = dump(n.running_var, "running_var");
  }
  return j;
}

NormLayer load_norm(const json& j, const fs::path& base) {
  NormLayer n;
  n.kind = norm_from_name(j.at("kind").get<std::string>());
  n.groups = j.at("groups").get<int>();
  n.eps = j.at("eps").get<float>();
  auto grab = [&](const std::string& field) {
    Tensor t = load_tensor((base / j.at(field).get<std::string>()).string());
    return std::move(t.data);
  };
  n.gamma = grab("gamma");
  n.beta = grab("beta");
  if (n.kind == NormKind::Batch) {
    n.running_mean = grab("running_mean");
    n.running_var = grab("running_var");
  }
  return n;
}

json policy_json(const SparsePolicy& p) {
  return json{{"sparse", p.sparse}, {"min_resolution", p.min_resolution}};
}

SparsePolicy load_policy(const json& j) {
  SparsePolicy p;
  if (j.contains("policy")) {
    p.sparse = j["policy"].value("sparse", true);
    p.min_resolution = j["policy"].value("min_resolution", 16);
  }
  return p;
}

}  // namespace

void save_model(const ModelSpec& model, const std::string& dir) {
  model.validate();
  fs::create_directories(fs::path(dir) / "weights");
  json j;
  j["format"] = "sige_model_v1";
  j["name"] = model.name;
  j["input"] = {{"channels", model.in_channels},
                {"height", model.in_h},
                {"width", model.in_w}};
  j["layers"] = json::array();
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    std::string stem = "L" + std::to_string(i);
    json lj;
    lj["kind"] = layer_kind_name(L.kind);
    lj["name"] = L.name;
    lj["policy"] = policy_json(L.policy);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        lj["conv"] = save_conv(L.conv, stem, dir);
        break;
      case LayerKind::Norm:
        lj["norm"] = save_norm(L.norm, stem, dir);
        break;
      case LayerKind::Activation:
        lj["activation"] = act_name(L.act);
        break;
      case LayerKind::ResBlock: {
        json rj;
        rj["conv1"] = save_conv(L.res.conv1, stem + ".conv1", dir);
        rj["norm"] = save_norm(L.res.norm, stem + ".norm1", dir);
        rj["activation"] = act_name(L.res.act);
        rj["conv2"] = save_conv(L.res.conv2, stem + ".conv2", dir);
        if (L.res.shortcut) {
          rj["shortcut"] = save_conv(*L.res.shortcut, stem + ".shortcut", dir);
        } else {
          rj["shortcut"] = nullptr;
        }
        lj["resblock"] = rj;
        break;
      }
      case LayerKind::Upsample:
        break;
    }
    j["layers"].push_back(lj);
  }
  write_text_file((fs::path(dir) / "model.json").string(), j.dump(2) + "\n");
}

ModelSpec load_model(const std::string& json_path) {
  std::ifstream is(json_path);
  if (!is) throw ConfigError(json_path + ": cannot open");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(json_path + ": json parse error: " + e.what());
  }
  if (j.value("format", "") != "sige_model_v1") {
    throw ConfigError(json_path + ": not a sige_model_v1 file");
  }
  fs::path base = fs::path(json_path).parent_path();
  ModelSpec m;
  m.name = j.value("name", "model");
  m.in_channels = j.at("input").at("channels").get<int>();
  m.in_h = j.at("input").at("height").get<int>();
  m.in_w = j.at("input").at("width").get<int>();
  for (size_t i = 0; i < j.at("layers").size(); ++i) {
    const json& lj = j["layers"][i];
    std::string where = json_path + ": layer " + std::to_string(i);
    Layer L;
    L.kind = layer_kind_from_name(lj.at("kind").get<std::string>());
    L.name = lj.value("name", "L" + std::to_string(i));
    L.policy = load_policy(lj);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        L.conv = load_conv(lj.at("conv"), base, where);
        break;
      case LayerKind::Norm:
        L.norm = load_norm(lj.at("norm"), base);
        break;
      case LayerKind::Activation:
        L.act = act_from_name(lj.at("activation").get<std::string>());
        break;
      case LayerKind::ResBlock: {
        const json& rj = lj.at("resblock");
        L.res.conv1 = load_conv(rj.at("conv1"), base, where + " conv1");
        L.res.norm = load_norm(rj.at("norm"), base);
        L.res.act = act_from_name(rj.at("activation").get<std::string>());
        L.res.conv2 = load_conv(rj.at("conv2"), base, where + " conv2");
        if (!rj.at("shortcut").is_null()) {
          L.res.shortcut = load_conv(rj.at("shortcut"), base, where + " shortcut");
        }
        break;
      }
      case LayerKind::Upsample:
        break;
    }
    m.layers.push_back(std::move(L));
  }
  m.validate();
  return m;
}

void save_block_stack(const std::string& path_prefix, const BlockStack& s) {
  write_sigt_raw(path_prefix + ".sigt", static_cast<uint32_t>(s.count()),
                 static_cast<uint32_t>(s.channels),
                 static_cast<uint32_t>(s.bh()), static_cast<uint32_t>(s.bh()),
                 s.data.data());
  json j;
  j["format"] = "sige_blocks_v1";
  j["block"] = s.block;
  j["overlap"] = s.overlap;
  j["origin"] = {{"block_size", s.origin.block_size},
                 {"h", s.origin.h},
                 {"w", s.origin.w}};
  j["indices"] = json::array();
  for (const BlockIndex& bi : s.origin.indices) {
    j["indices"].push_back({bi.n, bi.r, bi.c});
  }
  write_text_file(path_prefix + ".json", j.dump(2) + "\n");
}

BlockStack load_block_stack(const std::string& path_prefix) {
  std::ifstream is(path_prefix + ".json");
  if (!is) throw ConfigError(path_prefix + ".json: cannot open");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path_prefix + ".json: json parse error: " + e.what());
  }
  if (j.value("format", "") != "sige_blocks_v1") {
    throw ConfigError(path_prefix + ".json: not a sige_blocks_v1 file");
  }
  BlockStack s;
  s.block = j.at("block").get<int>();
  s.overlap = j.at("overlap").get<int>();
  s.origin.block_size = j.at("origin").at("block_size").get<int>();
  s.origin.h = j.at("origin").at("h").get<int>();
  s.origin.w = j.at("origin").at("w").get<int>();
  for (const json& e : j.at("indices")) {
    s.origin.indices.push_back({e.at(0).get<int>(), e.at(1).get<int>(),
                                e.at(2).get<int>()});
  }
  RawSigt raw = read_sigt_raw(path_prefix + ".sigt");
  if (raw.dims[0] != s.origin.indices.size()) {
    throw ConfigError(path_prefix + ": payload/index count mismatch");
  }
  if (static_cast<int>(raw.dims[2]) != s.bh() ||
      static_cast<int>(raw.dims[3]) != s.bh()) {
    throw ConfigError(path_prefix + ": payload block geometry mismatch");
  }
  s.channels = static_cast<int>(raw.dims[1]);
  s.data = std::move(raw.data);
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw ConfigError(path + ": cannot open for writing");
  os << content;
  if (!os) throw ConfigError(path + ": write failed");
}

}  // namespace sige

#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hwprox/autodiff.hpp"
#include "hwprox/cube.hpp"
#include "hwprox/rng.hpp"
#include "hwprox/tensor.hpp"

#include "json.hpp"

namespace hwprox {

struct ConvBlock {
  Tensor weight;  // (Cout, Cin, kh, kw, kb)
  Tensor bias;    // (Cout)
};

// Four-layer weight-prediction network: three pseudo-3D layers
// (3x3x1 conv + ReLU + 1x1x3 conv + ReLU) and a final 3x3x3 convolution,
// followed by a whole-cube softmax rescaled so the output mean is 1.
// No batch normalization.
struct HWnetParams {
  std::int64_t channels = 16;
  std::array<ConvBlock, 3> spatial;
  std::array<ConvBlock, 3> spectral;
  ConvBlock final_conv;

  void validate() const {
    if (channels < 1) throw ArgumentError("channels must be >= 1");
    const std::int64_t c = channels;
    auto expect = [](const ConvBlock& blk, std::vector<std::int64_t> wsh) {
      if (blk.weight.shape != wsh) throw ArgumentError("hwnet block shape mismatch");
      if (blk.bias.shape != std::vector<std::int64_t>{wsh[0]})
        throw ArgumentError("hwnet bias shape mismatch");
      if (!blk.weight.all_finite() || !blk.bias.all_finite())
        throw ArgumentError("hwnet parameters must be finite");
    };
    expect(spatial[0], {c, 1, 3, 3, 1});
    expect(spectral[0], {c, c, 1, 1, 3});
    for (int l = 1; l < 3; ++l) {
      expect(spatial[static_cast<std::size_t>(l)], {c, c, 3, 3, 1});
      expect(spectral[static_cast<std::size_t>(l)], {c, c, 1, 1, 3});
    }
    expect(final_conv, {1, c, 3, 3, 3});
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto* blk : blocks())
      n += blk->weight.numel() + blk->bias.numel();
    return n;
  }

  std::vector<const ConvBlock*> blocks() const {
    return {&spatial[0], &spectral[0], &spatial[1], &spectral[1],
            &spatial[2], &spectral[2], &final_conv};
  }
  std::vector<ConvBlock*> blocks() {
    return {&spatial[0], &spectral[0], &spatial[1], &spectral[1],
            &spatial[2], &spectral[2], &final_conv};
  }

  static std::vector<std::string> block_names() {
    return {"layer1_spatial", "layer1_spectral", "layer2_spatial", "layer2_spectral",
            "layer3_spatial", "layer3_spectral", "final"};
  }
};

// Kaiming-style fan-in scaled normal weights, zero biases.
inline HWnetParams hwnet_init(std::int64_t channels, std::uint64_t seed) {
  if (channels < 1) throw ArgumentError("channels must be >= 1");
  HWnetParams p;
  p.channels = channels;
  const std::int64_t c = channels;
  auto make = [&](std::vector<std::int64_t> wsh) {
    ConvBlock blk;
    blk.weight = Tensor(wsh);
    blk.bias = Tensor({wsh[0]});
    return blk;
  };
  p.spatial[0] = make({c, 1, 3, 3, 1});
  p.spectral[0] = make({c, c, 1, 1, 3});
  for (int l = 1; l < 3; ++l) {
    p.spatial[static_cast<std::size_t>(l)] = make({c, c, 3, 3, 1});
    p.spectral[static_cast<std::size_t>(l)] = make({c, c, 1, 1, 3});
  }
  p.final_conv = make({1, c, 3, 3, 3});

  Rng rng(derive_seed(seed, "hwnet_init"));
  for (ConvBlock* blk : p.blocks()) {
    const auto& s = blk->weight.shape;
    const double fan_in = static_cast<double>(s[1] * s[2] * s[3] * s[4]);
    const double std = std::sqrt(2.0 / fan_in);
    for (double& v : blk->weight.v) v = std * rng.normal();
  }
  return p;
}

// --- forward pass ------------------------------------------------------------------

inline void hwnet_check_input(const Tensor& y) {
  if (y.shape.size() != 3) throw ArgumentError("hwnet input must be cube-shaped");
  if (y.shape[0] < 3 || y.shape[1] < 3 || y.shape[2] < 3)
    throw ArgumentError("cube smaller than the network receptive field");
}

// W = hwnet(y); mean(W) = 1, W > 0.
inline Tensor hwnet_forward(const HWnetParams& p, const Tensor& y) {
  p.validate();
  hwnet_check_input(y);
  Tensor feats = y;
  feats.shape = {1, y.shape[0], y.shape[1], y.shape[2]};
  for (int l = 0; l < 3; ++l) {
    feats = kernels::relu(conv3d_forward(feats, p.spatial[static_cast<std::size_t>(l)].weight,
                                         p.spatial[static_cast<std::size_t>(l)].bias));
    feats = kernels::relu(conv3d_forward(feats, p.spectral[static_cast<std::size_t>(l)].weight,
                                         p.spectral[static_cast<std::size_t>(l)].bias));
  }
  Tensor logits = conv3d_forward(feats, p.final_conv.weight, p.final_conv.bias);
  logits.shape = {y.shape[0], y.shape[1], y.shape[2]};
  return kernels::softmax_mean1(logits);
}

inline HsiCube hwnet_forward(const HWnetParams& p, const HsiCube& y) {
  return HsiCube::from_tensor(hwnet_forward(p, y.tensor()));
}

struct HWnetTapeForward {
  int out_node = -1;                  // the weight map W, shape (h,w,b)
  std::vector<int> param_nodes;       // weight/bias node ids in block order (w,b per block)
};

// Records the forward pass on a tape with every parameter as an input leaf.
inline HWnetTapeForward hwnet_forward_tape(Tape& tape, const HWnetParams& p, int y_node) {
  p.validate();
  const Tensor& y = tape.value(y_node);
  hwnet_check_input(y);
  HWnetTapeForward out;
  auto add_block = [&](const ConvBlock& blk) {
    const int w = tape.input(blk.weight);
    const int b = tape.input(blk.bias);
    out.param_nodes.push_back(w);
    out.param_nodes.push_back(b);
    return std::pair{w, b};
  };
  int feats = tape.reshape(y_node, {1, y.shape[0], y.shape[1], y.shape[2]});
  for (int l = 0; l < 3; ++l) {
    auto [sw, sb] = add_block(p.spatial[static_cast<std::size_t>(l)]);
    feats = tape.relu(tape.conv3d(feats, sw, sb));
    auto [cw, cb] = add_block(p.spectral[static_cast<std::size_t>(l)]);
    feats = tape.relu(tape.conv3d(feats, cw, cb));
  }
  auto [fw, fb] = add_block(p.final_conv);
  int logits = tape.conv3d(feats, fw, fb);
  logits = tape.reshape(logits, {y.shape[0], y.shape[1], y.shape[2]});
  out.out_node = tape.softmax_mean1(logits);
  return out;
}

// --- weights file ---------------------------------------------------------------------
//
// Format: magic "HWN1", u32 header length, JSON header
// {channels, blocks:[{name, weight_shape, bias_shape}], dtype:"f32"},
// then raw little-endian f32 in header order (weight then bias per block).

inline void hwnet_save(const HWnetParams& p, const std::filesystem::path& path) {
  p.validate();
  nlohmann::ordered_json header;
  header["channels"] = p.channels;
  header["dtype"] = "f32";
  header["blocks"] = nlohmann::ordered_json::array();
  const auto names = HWnetParams::block_names();
  const auto blocks = p.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i)
    header["blocks"].push_back({{"name", names[i]},
                                {"weight_shape", blocks[i]->weight.shape},
                                {"bias_shape", blocks[i]->bias.shape}});
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write("HWN1", 4);
  const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const ConvBlock* blk : blocks) {
    for (const Tensor* t : {&blk->weight, &blk->bias}) {
      std::vector<float> payload(t->v.size());
      for (std::size_t i = 0; i < t->v.size(); ++i) payload[i] = static_cast<float>(t->v[i]);
      out.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline HWnetParams hwnet_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HWN1", 4) != 0)
    throw FormatError("bad magic in " + path.string());
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (1u << 20))
    throw CorruptFileError("bad header length in " + path.string());
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw CorruptFileError("truncated header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("weights header parse error: " + std::string(e.what()));
  }
  if (header.at("dtype").get<std::string>() != "f32")
    throw FormatError("unsupported dtype in " + path.string());

  HWnetParams p = hwnet_init(header.at("channels").get<std::int64_t>(), 0);
  const auto names = HWnetParams::block_names();
  const auto& jblocks = header.at("blocks");
  if (jblocks.size() != names.size()) throw FormatError("unexpected block count");
  auto blocks = p.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& jb = jblocks.at(i);
    if (jb.at("name").get<std::string>() != names[i])
      throw FormatError("unexpected block name in " + path.string());
    const auto wsh = jb.at("weight_shape").get<std::vector<std::int64_t>>();
    const auto bsh = jb.at("bias_shape").get<std::vector<std::int64_t>>();
    if (wsh != blocks[i]->weight.shape || bsh != blocks[i]->bias.shape)
      throw FormatError("block shape does not match channels in " + path.string());
    for (Tensor* t : {&blocks[i]->weight, &blocks[i]->bias}) {
      std::vector<float> payload(t->v.size());
      in.read(reinterpret_cast<char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
      if (static_cast<std::size_t>(in.gcount()) != payload.size() * sizeof(float))
        throw CorruptFileError("truncated payload in " + path.string());
      for (std::size_t k = 0; k < payload.size(); ++k)
        t->v[k] = static_cast<double>(payload[k]);
    }
  }
  p.validate();
  return p;
}

}  // namespace hwprox

#include "annp/checkpoint.hpp"

#include <algorithm>

#include "annp/binary_io.hpp"
#include "annp/error.hpp"

namespace annp {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'N', 'P', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

void write_dims(BinaryWriter &w, const TransformerDims &d) {
  w.u64(d.width);
  w.u64(d.heads);
  w.u64(d.ffn);
  w.u64(d.layers);
}

TransformerDims read_dims(BinaryReader &r) {
  TransformerDims d;
  d.width = r.u64();
  d.heads = r.u64();
  d.ffn = r.u64();
  d.layers = r.u64();
  return d;
}

void write_encoder_config(BinaryWriter &w, const EncoderConfig &c) {
  w.u64(c.embed_dim);
  w.u64(c.output_dim);
  w.u64(c.layers);
  w.u64(c.heads);
  w.u64(c.ffn_dim);
  w.u64(c.max_positions);
}

EncoderConfig read_encoder_config(BinaryReader &r) {
  EncoderConfig c;
  c.embed_dim = r.u64();
  c.output_dim = r.u64();
  c.layers = r.u64();
  c.heads = r.u64();
  c.ffn_dim = r.u64();
  c.max_positions = r.u64();
  return c;
}

void write_tensors(BinaryWriter &w, const ParamStore &tensors) {
  w.u64(tensors.size());
  for (const auto &[name, m] : tensors) {
    w.str(name);
    w.u64(m.rows);
    w.u64(m.cols);
    for (double v : m.data) w.f64(v);
  }
}

ParamStore read_tensors(BinaryReader &r) {
  ParamStore out;
  const std::uint64_t n = r.count(24);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (cols != 0 && rows > r.remaining() / 8 / cols) {
      r.fail("tensor " + name + " exceeds file size");
    }
    Matrix m(rows, cols);
    for (double &v : m.data) v = r.f64();
    if (!out.emplace(std::move(name), std::move(m)).second) {
      r.fail("duplicate tensor name");
    }
  }
  return out;
}

void begin(BinaryWriter &w, std::uint8_t kind) {
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u8(kind);
}

std::uint8_t read_header(BinaryReader &r) {
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) r.fail("not a checkpoint file");
  if (r.u32() != kVersion) r.fail("unsupported checkpoint version");
  return r.u8();
}

// Shapes must match a freshly initialized parameter set of the same config.
void check_against(BinaryReader &r, const ParamStore &loaded,
                   const ParamStore &reference) {
  if (loaded.size() != reference.size()) r.fail("tensor set does not match config");
  for (const auto &[name, m] : reference) {
    auto it = loaded.find(name);
    if (it == loaded.end()) r.fail("missing tensor " + name);
    if (!it->second.same_shape(m)) r.fail("tensor " + name + " has wrong shape");
  }
}

}  // namespace

void save_encoder(const EncoderParams &params, const std::filesystem::path &path) {
  if (path.empty()) throw InvalidArgument("checkpoint path is empty");
  BinaryWriter w;
  begin(w, 0);
  write_encoder_config(w, params.config);
  write_tensors(w, params.tensors);
  w.write_with_checksum(path);
}

EncoderParams load_encoder(const std::filesystem::path &path) {
  if (path.empty()) throw InvalidArgument("checkpoint path is empty");
  BinaryReader r = BinaryReader::open_with_checksum(path);
  if (read_header(r) != 0) r.fail("not an encoder checkpoint");
  EncoderParams p;
  p.config = read_encoder_config(r);
  p.tensors = read_tensors(r);
  r.expect_end();
  try {
    check_against(r, p.tensors, init_encoder(p.config, 0).tensors);
  } catch (const InvalidArgument &e) {
    r.fail(e.what());
  }
  return p;
}

void save_checkpoint(const ModelParams &params, MaskMode mask,
                     const std::filesystem::path &path) {
  if (path.empty()) throw InvalidArgument("checkpoint path is empty");
  const ModelConfig &c = params.config;
  BinaryWriter w;
  begin(w, 1);
  write_encoder_config(w, c.context);
  w.u64(c.feature_dim);
  write_dims(w, c.audio);
  write_dims(w, c.label);
  w.u64(c.bias_heads);
  w.u64(c.joint_dim);
  w.u64(c.vocab);
  w.str(mask.to_string());
  w.u64(mask.chunk_frames);
  write_tensors(w, params.tensors);
  w.write_with_checksum(path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path &path) {
  if (path.empty()) throw InvalidArgument("checkpoint path is empty");
  BinaryReader r = BinaryReader::open_with_checksum(path);
  if (read_header(r) != 1) r.fail("not a model checkpoint");
  ModelCheckpoint ck;
  ModelConfig &c = ck.params.config;
  c.context = read_encoder_config(r);
  c.feature_dim = r.u64();
  c.audio = read_dims(r);
  c.label = read_dims(r);
  c.bias_heads = r.u64();
  c.joint_dim = r.u64();
  c.vocab = r.u64();
  const std::string mode = r.str();
  const std::uint64_t chunk = r.u64();
  ck.params.tensors = read_tensors(r);
  r.expect_end();
  try {
    ck.mask = MaskMode::parse(mode, chunk);
    check_against(r, ck.params.tensors, init_model(c, 0).tensors);
  } catch (const InvalidArgument &e) {
    r.fail(e.what());
  }
  return ck;
}

}  // namespace annp

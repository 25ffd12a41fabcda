#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "annp/checkpoint.hpp"
#include "annp/error.hpp"

using namespace annp;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.feature_dim = 4;
  c.audio = {8, 2, 12, 1};
  c.label = {8, 2, 12, 1};
  c.context.embed_dim = 8;
  c.context.output_dim = 8;
  c.context.heads = 2;
  c.context.ffn_dim = 12;
  c.context.layers = 1;
  c.joint_dim = 8;
  return c;
}

std::string read_all(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_all(const fs::path &p, const std::string &s) {
  std::ofstream f(p, std::ios::binary);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

TEST_CASE("model checkpoints round trip with the mask mode") {
  const auto params = init_model(small_model(), 3);
  const auto path = fs::temp_directory_path() / "annp_test_model.ckpt";
  save_checkpoint(params, MaskMode::streaming(5), path);
  const auto back = load_checkpoint(path);
  CHECK(back.params.config == params.config);
  CHECK(back.params.tensors == params.tensors);
  CHECK(back.mask == MaskMode::streaming(5));
  CHECK_THROWS_AS(load_encoder(path), ParseError);

  std::string bytes = read_all(path);
  bytes[bytes.size() / 3] ^= 1;
  write_all(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  write_all(path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  fs::remove(path);
}

TEST_CASE("encoder checkpoints round trip") {
  EncoderConfig c;
  c.embed_dim = 8;
  c.output_dim = 4;
  c.heads = 2;
  c.ffn_dim = 8;
  const auto params = init_encoder(c, 9);
  const auto path = fs::temp_directory_path() / "annp_test_encoder.ckpt";
  save_encoder(params, path);
  const auto back = load_encoder(path);
  CHECK(back.config == params.config);
  CHECK(back.tensors == params.tensors);
  CHECK(encode(back, tokenize("jean")) == encode(params, tokenize("jean")));
  fs::remove(path);
  CHECK_THROWS_AS(load_encoder(path), ParseError);
}

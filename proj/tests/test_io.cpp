#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "sige/common.hpp"
#include "sige/graph.hpp"
#include "sige/io.hpp"
#include "sige/kernels.hpp"
#include "sige/mask.hpp"
#include "sige/models.hpp"
#include "sige/tensor.hpp"

using namespace sige;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sige_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace

TEST_SUITE("io") {

TEST_CASE("tensor files round trip bit for bit") {
  TempDir dir;
  Rng rng(401);
  Tensor t(2, 3, 5, 7);
  fill_uniform(t, rng, -10.0f, 10.0f);
  t.data[0] = 0.0f;
  t.data[1] = -0.0f;
  const std::string p = dir.file("t.sigt");
  save_tensor(p, t);
  Tensor back = load_tensor(p);
  CHECK(back.n == 2);
  CHECK(back.c == 3);
  CHECK(back.h == 5);
  CHECK(back.w == 7);
  CHECK(back.data == t.data);
}

TEST_CASE("tensor loader rejects malformed files") {
  TempDir dir;
  CHECK_THROWS_AS(load_tensor(dir.file("missing.sigt")), ConfigError);

  const std::string bad_magic = dir.file("bad_magic.sigt");
  std::ofstream(bad_magic, std::ios::binary) << "NOPE1234567890123456";
  CHECK_THROWS_AS(load_tensor(bad_magic), ConfigError);

  Tensor t(1, 1, 2, 2, 1.0f);
  const std::string truncated = dir.file("trunc.sigt");
  save_tensor(truncated, t);
  fs::resize_file(truncated, fs::file_size(truncated) - 5);
  CHECK_THROWS_AS(load_tensor(truncated), ConfigError);

  const std::string trailing = dir.file("trail.sigt");
  save_tensor(trailing, t);
  std::ofstream(trailing, std::ios::binary | std::ios::app) << "xx";
  CHECK_THROWS_AS(load_tensor(trailing), ConfigError);
}

TEST_CASE("pbm masks round trip and tolerate comments") {
  TempDir dir;
  DifferenceMask m(3, 5);
  m.set(0, 0, true);
  m.set(2, 4, true);
  m.set(1, 2, true);
  const std::string p = dir.file("m.pbm");
  save_mask_pbm(p, m);
  DifferenceMask back = load_mask_pbm(p);
  CHECK(back.h == 3);
  CHECK(back.w == 5);
  CHECK(back.bits == m.bits);

  const std::string hand = dir.file("hand.pbm");
  std::ofstream(hand) << "P1\n# a comment\n2 2\n1 0\n# mid comment\n0 1\n";
  DifferenceMask h = load_mask_pbm(hand);
  CHECK(h.at(0, 0));
  CHECK_FALSE(h.at(0, 1));
  CHECK(h.at(1, 1));

  const std::string garbage = dir.file("bad.pbm");
  std::ofstream(garbage) << "P2\n2 2\n1 0 0 1\n";
  CHECK_THROWS_AS(load_mask_pbm(garbage), ConfigError);
}

TEST_CASE("mask/tensor conversions agree") {
  DifferenceMask m(4, 4);
  m.set(1, 2, true);
  Tensor t = mask_to_tensor(m);
  CHECK(t.h == 4);
  CHECK(t.at(0, 0, 1, 2) == 1.0f);
  CHECK(t.at(0, 0, 0, 0) == 0.0f);
  DifferenceMask back = tensor_to_mask(t);
  CHECK(back.bits == m.bits);
}

TEST_CASE("models round trip through json plus weight files") {
  TempDir dir;
  ModelSpec m = toy_model("gaugan_stack_in");
  save_model(m, dir.file("model"));
  ModelSpec back = load_model(dir.file("model/model.json"));
  CHECK(back.name == m.name);
  CHECK(back.structure_hash() == m.structure_hash());

  Rng rng(409);
  Tensor in(1, 3, 64, 64);
  fill_uniform(in, rng, -1.0f, 1.0f);
  CHECK(max_abs_diff(dense_forward(m, in), dense_forward(back, in)) == 0.0f);
}

TEST_CASE("model loader validates what it reads") {
  TempDir dir;
  CHECK_THROWS_AS(load_model(dir.file("missing.json")), ConfigError);
  const std::string p = dir.file("broken.json");
  std::ofstream(p) << "{\"format\":\"something_else\"}";
  CHECK_THROWS_AS(load_model(p), ConfigError);
}

TEST_CASE("block stacks round trip with their geometry") {
  TempDir dir;
  Rng rng(419);
  BlockStack s;
  s.channels = 3;
  s.block = 4;
  s.overlap = 2;
  s.origin.block_size = 4;
  s.origin.h = 16;
  s.origin.w = 16;
  s.origin.indices = {{0, 0, 4}, {0, 8, 8}, {1, 12, 0}};
  s.data.resize(s.origin.indices.size() * s.block_stride());
  for (float& v : s.data) v = rng.uniform(-2.0f, 2.0f);

  save_block_stack(dir.file("stack"), s);
  BlockStack back = load_block_stack(dir.file("stack"));
  CHECK(back.channels == 3);
  CHECK(back.block == 4);
  CHECK(back.overlap == 2);
  CHECK(back.origin.indices.size() == 3);
  CHECK(back.origin.indices[2].n == 1);
  CHECK(back.origin.indices[2].r == 12);
  CHECK(back.data == s.data);
}

TEST_CASE("write_text_file writes exactly the given bytes") {
  TempDir dir;
  const std::string p = dir.file("note.txt");
  write_text_file(p, "two\nlines\n");
  std::ifstream in(p, std::ios::binary);
  std::string got((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  CHECK(got == "two\nlines\n");
}

}  // TEST_SUITE

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "iclkit/checkpoint.hpp"
#include "support/fixtures.hpp"

using iclkit::Error;
using iclkit::ExpandingModel;
using iclkit::load_checkpoint;
using iclkit::save_checkpoint;
using iclkit::serialize_values;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "iclkit_ckpt_test") {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoint round trip reproduces the model bit-exactly") {
  TempDir tmp;
  iclkit::ModelSpec spec = fixtures::small_model_spec(6, 4);
  ExpandingModel model(spec, {0, 1, 2}, 77);
  model.expand({3});
  model.expand({4, 5});
  model.set_phase(iclkit::Phase::old_classes);

  std::string file = (tmp.path / "model.bin").string();
  save_checkpoint(model, file);
  ExpandingModel back = load_checkpoint(file);

  CHECK(back.step_index() == model.step_index());
  CHECK(back.class_groups() == model.class_groups());
  CHECK(back.temperature() == model.temperature());
  CHECK(back.phase() == iclkit::Phase::old_classes);
  CHECK(serialize_values(back.all_params()) == serialize_values(model.all_params()));

  // trainable flags survive
  auto orig = model.all_params();
  auto rest = back.all_params();
  REQUIRE(orig.size() == rest.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i]->name == rest[i]->name);
    CHECK(orig[i]->trainable == rest[i]->trainable);
  }

  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 6);
  Eigen::MatrixXd za = model.forward_features(x);
  Eigen::MatrixXd zb = back.forward_features(x);
  CHECK(memcmp(za.data(), zb.data(), sizeof(double) * za.size()) == 0);
  CHECK(model.predict(x) == back.predict(x));
}

TEST_CASE("row-only expanded models survive the round trip") {
  TempDir tmp;
  iclkit::ModelSpec spec = fixtures::small_model_spec(6, 4);
  ExpandingModel model(spec, {0, 1}, 5);
  model.expand({2});
  model.expand_rows_only({3}, true);
  std::string file = (tmp.path / "rows.bin").string();
  save_checkpoint(model, file);
  ExpandingModel back = load_checkpoint(file);
  CHECK(back.num_branches() == 2);
  CHECK(back.num_classes() == 4);
  CHECK_FALSE(back.expanded_this_step());
  CHECK(serialize_values(back.all_params()) == serialize_values(model.all_params()));
}

TEST_CASE("checkpoints are refused without the versioned magic") {
  TempDir tmp;
  std::string file = (tmp.path / "bad.bin").string();
  {
    std::ofstream out(file, std::ios::binary);
    out << "NOT-A-CHECKPOINT\n1234567890";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(file)),
                       doctest::Contains("ICLKIT-CKPT-v1"), Error);
}

TEST_CASE("truncated checkpoints fail loudly") {
  TempDir tmp;
  iclkit::ModelSpec spec = fixtures::small_model_spec(6, 4);
  ExpandingModel model(spec, {0, 1}, 6);
  std::string file = (tmp.path / "model.bin").string();
  save_checkpoint(model, file);
  std::string bytes;
  {
    std::ifstream in(file, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(static_cast<void>(load_checkpoint(file)), Error);
}

TEST_CASE("serialize_values distinguishes any value change") {
  iclkit::ModelSpec spec = fixtures::small_model_spec(6, 4);
  ExpandingModel model(spec, {0, 1}, 8);
  std::string before = serialize_values(model.all_params());
  CHECK(serialize_values(model.all_params()) == before);
  auto* p = model.all_params()[0];
  p->value(0, 0) = std::nextafter(p->value(0, 0), 1e9);  // one ulp
  CHECK(serialize_values(model.all_params()) != before);
}

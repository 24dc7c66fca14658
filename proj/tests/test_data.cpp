#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sit/data.hpp"
#include "sit/image_io.hpp"
#include "sit/metrics.hpp"

using namespace sit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int counter;
};
int TempDir::counter = 0;

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// One CIFAR-10 record: label byte then 3072 pattern bytes derived from ids.
std::vector<uint8_t> cifar10_record(uint8_t label, int pattern) {
  std::vector<uint8_t> rec(3073);
  rec[0] = label;
  for (int j = 0; j < 3072; ++j) rec[static_cast<size_t>(1 + j)] = static_cast<uint8_t>((j * 7 + pattern * 13) % 256);
  return rec;
}

std::vector<uint8_t> concat(const std::vector<std::vector<uint8_t>>& parts) {
  std::vector<uint8_t> all;
  for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return all;
}

}  // namespace

TEST_CASE("cifar10 single file: layout, labels, limit") {
  TempDir tmp;
  const std::string f = tmp.file("batch.bin");
  write_bytes(f, concat({cifar10_record(7, 0), cifar10_record(3, 1), cifar10_record(0, 2)}));
  Dataset d = load_cifar10(f, true);
  CHECK(d.size() == 3);
  CHECK(d.num_classes == 10);
  CHECK(d.labels == std::vector<int64_t>{7, 3, 0});
  // pixel (c,y,x) comes from record byte 1 + c*1024 + y*32 + x
  auto byte_of = [](int pattern, int c, int y, int x) {
    return static_cast<float>(((c * 1024 + y * 32 + x) * 7 + pattern * 13) % 256) / 255.0f;
  };
  Tensor b = d.batch({0, 1});
  CHECK(b.shape() == Shape{2, 3, 32, 32});
  CHECK(b.at({0, 0, 0, 0}) == byte_of(0, 0, 0, 0));
  CHECK(b.at({0, 2, 31, 5}) == byte_of(0, 2, 31, 5));
  CHECK(b.at({1, 1, 7, 19}) == byte_of(1, 1, 7, 19));

  CHECK(load_cifar10(f, true, 2).size() == 2);
  CHECK_THROWS_AS(load_cifar10(tmp.file("missing.bin"), true), std::runtime_error);
  write_bytes(tmp.file("short.bin"), std::vector<uint8_t>(100));
  CHECK_THROWS_AS(load_cifar10(tmp.file("short.bin"), true), std::runtime_error);
}

TEST_CASE("cifar10 directory selects train or test batches") {
  TempDir tmp;
  for (int i = 1; i <= 5; ++i) {
    write_bytes(tmp.file("data_batch_" + std::to_string(i) + ".bin"), cifar10_record(static_cast<uint8_t>(i), i));
  }
  write_bytes(tmp.file("test_batch.bin"), cifar10_record(9, 0));
  Dataset train = load_cifar10(tmp.path.string(), true);
  CHECK(train.size() == 5);
  CHECK(train.labels == std::vector<int64_t>{1, 2, 3, 4, 5});
  Dataset test = load_cifar10(tmp.path.string(), false);
  CHECK(test.size() == 1);
  CHECK(test.labels[0] == 9);
  CHECK(load_cifar10(tmp.path.string(), true, 3).size() == 3);
}

TEST_CASE("cifar100 keeps the fine label") {
  TempDir tmp;
  std::vector<uint8_t> rec(3074, 0);
  rec[0] = 11;   // coarse, dropped
  rec[1] = 87;   // fine, kept
  rec[2] = 200;  // first red pixel
  std::vector<uint8_t> rec2(3074, 0);
  rec2[0] = 3;
  rec2[1] = 42;
  write_bytes(tmp.file("train.bin"), concat({rec, rec2}));
  Dataset d = load_cifar100(tmp.path.string(), true);
  CHECK(d.size() == 2);
  CHECK(d.num_classes == 100);
  CHECK(d.labels == std::vector<int64_t>{87, 42});
  CHECK(d.image(0)[0] == doctest::Approx(200.0f / 255.0f));
}

TEST_CASE("stl10 transposes the column-major planes") {
  TempDir tmp;
  std::vector<uint8_t> img(3 * 96 * 96, 0);
  img[static_cast<size_t>(1 * 96 * 96 + 5 * 96 + 2)] = 200;  // channel 1, column 5, row 2
  img[static_cast<size_t>(0 * 96 * 96 + 0 * 96 + 95)] = 50;  // channel 0, column 0, row 95
  write_bytes(tmp.file("train_X.bin"), img);
  write_bytes(tmp.file("train_y.bin"), {4});
  Dataset d = load_stl10(tmp.file("train_X.bin"), tmp.file("train_y.bin"));
  CHECK(d.size() == 1);
  CHECK(d.height == 96);
  CHECK(d.num_classes == 10);
  CHECK(d.labels[0] == 3);
  Tensor b = d.batch({0});
  CHECK(b.at({0, 1, 2, 5}) == doctest::Approx(200.0f / 255.0f));
  CHECK(b.at({0, 0, 95, 0}) == doctest::Approx(50.0f / 255.0f));

  Dataset unlabeled = load_stl10(tmp.file("train_X.bin"), "");
  CHECK(unlabeled.labels[0] == -1);
  CHECK(unlabeled.num_classes == 0);

  write_bytes(tmp.file("bad_y.bin"), {0});
  CHECK_THROWS_AS(load_stl10(tmp.file("train_X.bin"), tmp.file("bad_y.bin")), std::runtime_error);
  write_bytes(tmp.file("two_y.bin"), {1, 2});
  CHECK_THROWS_AS(load_stl10(tmp.file("train_X.bin"), tmp.file("two_y.bin")), std::runtime_error);
}

TEST_CASE("synthetic dataset is deterministic, bounded and class-structured") {
  Dataset a = synthetic_dataset(24, 16, 3, 4, 5);
  Dataset b = synthetic_dataset(24, 16, 3, 4, 5);
  Dataset c = synthetic_dataset(24, 16, 3, 4, 6);
  CHECK(a.size() == 24);
  CHECK(a.images == b.images);
  CHECK(a.images != c.images);
  for (float v : a.images) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  for (int64_t i = 0; i < 24; ++i) CHECK(a.labels[static_cast<size_t>(i)] == i % 4);
  // different classes produce visibly different images on average
  double diff = 0;
  for (int64_t j = 0; j < a.image_numel(); ++j) diff += std::abs(a.image(0)[j] - a.image(1)[j]);
  CHECK(diff / static_cast<double>(a.image_numel()) > 0.02);
  CHECK_THROWS_AS(synthetic_dataset(0, 16, 3, 4, 1), std::invalid_argument);
}

TEST_CASE("few shot split is stratified with a floor of one") {
  Dataset d = synthetic_dataset(40, 8, 3, 4, 7);  // 10 per class
  std::vector<int64_t> quarter = few_shot_split(d, 0.25, 3);
  CHECK(quarter.size() == 8);  // floor(2.5) = 2 per class
  std::vector<int64_t> counts(4, 0);
  for (size_t i = 1; i < quarter.size(); ++i) CHECK(quarter[i] > quarter[i - 1]);
  for (int64_t idx : quarter) counts[static_cast<size_t>(d.labels[static_cast<size_t>(idx)])]++;
  for (int64_t kc : counts) CHECK(kc == 2);

  CHECK(few_shot_split(d, 1.0, 3).size() == 40);
  CHECK(few_shot_split(d, 0.01, 3).size() == 4);  // floor < 1 bumps to 1 per class
  CHECK(few_shot_split(d, 0.25, 3) == few_shot_split(d, 0.25, 3));
  CHECK(few_shot_split(d, 0.25, 3) != few_shot_split(d, 0.25, 4));
  CHECK_THROWS_AS(few_shot_split(d, 0.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(few_shot_split(d, 1.2, 3), std::invalid_argument);
  Dataset unlabeled = d;
  unlabeled.num_classes = 0;
  CHECK_THROWS_AS(few_shot_split(unlabeled, 0.5, 3), std::invalid_argument);
}

TEST_CASE("subset copies the selected examples") {
  Dataset d = synthetic_dataset(10, 8, 3, 5, 9);
  Dataset s = subset(d, {7, 2});
  CHECK(s.size() == 2);
  CHECK(s.labels[0] == d.labels[7]);
  CHECK(s.labels[1] == d.labels[2]);
  for (int64_t j = 0; j < d.image_numel(); ++j) {
    CHECK(s.image(0)[j] == d.image(7)[j]);
    CHECK(s.image(1)[j] == d.image(2)[j]);
  }
  CHECK_THROWS_AS(subset(d, {10}), std::invalid_argument);
}

TEST_CASE("bilinear resize doubles a 2x2 ramp correctly") {
  Dataset d;
  d.name = "ramp";
  d.channels = 1;
  d.height = 2;
  d.width = 2;
  d.num_classes = 1;
  d.images = {0.0f, 0.25f, 0.5f, 0.75f};
  d.labels = {0};
  Dataset up = resize_dataset(d, 4);
  CHECK(up.height == 4);
  const float* im = up.image(0);
  CHECK(im[0] == doctest::Approx(0.0f));                 // corner clamps
  CHECK(im[1] == doctest::Approx(0.0625f));              // x interp at fx=0.25
  CHECK(im[3] == doctest::Approx(0.25f));                // right edge clamps
  CHECK(im[4 * 1 + 1] == doctest::Approx(0.1875f));      // centre mix
  CHECK(im[4 * 3 + 3] == doctest::Approx(0.75f));        // far corner

  Dataset same = resize_dataset(d, 2);
  CHECK(same.images == d.images);
  CHECK_THROWS_AS(resize_dataset(d, 0), std::invalid_argument);
}

TEST_CASE("ppm round trip with half-up rounding") {
  TempDir tmp;
  Tensor img({3, 2, 2});
  const float vals[12] = {0.0f,   1.0f,   0.5f,    100.4f / 255.0f, 100.6f / 255.0f, 0.25f,
                          0.125f, 0.875f, 0.0625f, 1.5f,            -0.5f,           0.75f};
  for (int i = 0; i < 12; ++i) img.data()[i] = vals[i];
  const std::string f = tmp.file("img.ppm");
  write_ppm(f, img);

  std::ifstream in(f, std::ios::binary);
  std::string header(9, '\0');
  in.read(header.data(), 9);
  CHECK(header == "P6\n2 2\n25");

  Tensor back = read_ppm(f);
  REQUIRE(back.shape() == img.shape());
  CHECK(back.at({0, 0, 0}) == 0.0f);
  CHECK(back.at({0, 0, 1}) == 1.0f);
  CHECK(back.at({0, 1, 0}) == doctest::Approx(128.0f / 255.0f));  // 0.5 rounds up
  CHECK(back.at({0, 1, 1}) == doctest::Approx(100.0f / 255.0f));
  CHECK(back.at({1, 0, 0}) == doctest::Approx(101.0f / 255.0f));
  CHECK(back.at({2, 0, 1}) == 1.0f);   // clamped high
  CHECK(back.at({2, 1, 0}) == 0.0f);   // clamped low

  Tensor again = read_ppm(f);
  const std::string f2 = tmp.file("img2.ppm");
  write_ppm(f2, again);
  Tensor twice = read_ppm(f2);
  CHECK(twice.values() == again.values());

  CHECK_THROWS_AS(read_ppm(tmp.file("missing.ppm")), std::runtime_error);
  write_bytes(tmp.file("junk.ppm"), {'P', '5', '\n'});
  CHECK_THROWS_AS(read_ppm(tmp.file("junk.ppm")), std::runtime_error);
  Tensor gray({1, 2, 2});
  CHECK_THROWS_AS(write_ppm(tmp.file("gray.ppm"), gray), std::invalid_argument);
}

TEST_CASE("hstack_images lays panels left to right") {
  Tensor a = Tensor::full({3, 2, 2}, 0.1f);
  Tensor b = Tensor::full({3, 2, 3}, 0.2f);
  Tensor out = hstack_images({a, b}, 2);
  CHECK(out.shape() == Shape{3, 2, 7});
  CHECK(out.at({0, 0, 0}) == 0.1f);
  CHECK(out.at({0, 0, 2}) == 0.9f);  // separator
  CHECK(out.at({0, 0, 4}) == 0.2f);
  Tensor tall({3, 3, 2});
  CHECK_THROWS_AS(hstack_images({a, tall}), std::invalid_argument);
}

TEST_CASE("metrics csv writes the fixed header and reads itself back") {
  TempDir tmp;
  const std::string f = tmp.file("metrics.csv");
  {
    MetricsWriter w(f);
    MetricsRow r;
    r.step = 1;
    r.epoch = 0;
    r.l_rec = 0.123456789;
    r.l_rot = 1.386;
    r.l_con = 2.5;
    r.w1 = 1.0;
    r.w2 = 0.5;
    r.w3 = 0.25;
    r.total = 4.2;
    r.lr = 5e-4;
    r.ms = 123.5;
    w.append(r);
    r.step = 2;
    r.epoch = 1;
    r.total = 3.9;
    w.append(r);
  }
  std::ifstream in(f);
  std::string header;
  std::getline(in, header);
  CHECK(header == std::string(kMetricsHeader));

  std::vector<MetricsRow> rows = read_metrics_csv(f);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].step == 1);
  CHECK(rows[0].l_rec == doctest::Approx(0.123456789).epsilon(1e-9));
  CHECK(rows[0].lr == doctest::Approx(5e-4));
  CHECK(rows[1].epoch == 1);
  CHECK(rows[1].total == doctest::Approx(3.9));

  std::ofstream bad(tmp.file("bad.csv"));
  bad << "step,epoch,oops\n1,2,3\n";
  bad.close();
  CHECK_THROWS_AS(read_metrics_csv(tmp.file("bad.csv")), std::runtime_error);
  std::ofstream mangled(tmp.file("mangled.csv"));
  mangled << kMetricsHeader << "\n1,0,not_a_number,0,0,0,0,0,0,0,0\n";
  mangled.close();
  CHECK_THROWS_AS(read_metrics_csv(tmp.file("mangled.csv")), std::runtime_error);
}

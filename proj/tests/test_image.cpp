#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ffd/image.hpp"
#include "ffd/rng.hpp"

using namespace ffd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "ffd_test_image";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("image png round trip") {
  Rng rng(1);
  auto img = make_image(37, 23);
  for (auto& b : img.pixels) b = uint8_t(rng.uniform_int(256));

  auto path = (temp_dir() / "round.png").string();
  write_image_png(path, img);
  auto back = read_image_png(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("mask png round trip holds 16-bit ids") {
  Rng rng(2);
  auto mask = make_mask(19, 31);
  for (auto& v : mask.ids) v = uint16_t(rng.uniform_int(65536));
  mask.at(0, 0) = 65535;

  auto path = (temp_dir() / "mask.png").string();
  write_mask_png(path, mask);
  auto back = read_mask_png(path);
  CHECK(back.ids == mask.ids);
}

TEST_CASE("missing and malformed files raise data errors") {
  CHECK_THROWS_AS(read_image_png("/nonexistent/nope.png"), DataError);

  auto bogus = (temp_dir() / "bogus.png").string();
  std::FILE* f = std::fopen(bogus.c_str(), "wb");
  std::fputs("definitely not a png", f);
  std::fclose(f);
  CHECK_THROWS_AS(read_image_png(bogus), DataError);
  CHECK_THROWS_AS(read_mask_png(bogus), DataError);
}

TEST_CASE("mask reader rejects rgb pngs") {
  auto img = make_image(4, 4, 100);
  auto path = (temp_dir() / "rgb.png").string();
  write_image_png(path, img);
  CHECK_THROWS_AS(read_mask_png(path), DataError);
}

TEST_CASE("image_to_tensor scales to [0,1] in channel planes") {
  auto img = make_image(2, 1);
  img.at(0, 0)[0] = 255;
  img.at(0, 0)[1] = 0;
  img.at(0, 0)[2] = 51;
  img.at(1, 0)[0] = 0;
  img.at(1, 0)[1] = 255;
  img.at(1, 0)[2] = 102;
  auto t = image_to_tensor<float>(img);
  REQUIRE(t->shape == std::vector<int>{3, 1, 2});
  CHECK(t->values[0] == doctest::Approx(1.f));
  CHECK(t->values[1] == doctest::Approx(0.f));
  CHECK(t->values[2] == doctest::Approx(0.f));
  CHECK(t->values[3] == doctest::Approx(1.f));
  CHECK(t->values[4] == doctest::Approx(0.2f));
  CHECK(t->values[5] == doctest::Approx(0.4f));
}

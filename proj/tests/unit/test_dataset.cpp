#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "oba/dataset.hpp"
#include "oba/errors.hpp"

using namespace oba;
namespace fs = std::filesystem;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

struct IdxFiles {
  fs::path images, labels;
};

/// Four 3x2 images with pixel value 60 * label + position, labels 0..3.
IdxFiles write_idx(const std::string& name, std::uint32_t image_magic = 0x803, std::uint32_t label_count = 4,
                   std::size_t drop_bytes = 0) {
  const fs::path dir = fs::temp_directory_path() / ("oba_idx_" + name);
  fs::create_directories(dir);
  IdxFiles f{dir / "images.idx", dir / "labels.idx"};
  {
    std::ofstream im(f.images, std::ios::binary);
    put_be32(im, image_magic);
    put_be32(im, 4);
    put_be32(im, 3);
    put_be32(im, 2);
    std::vector<char> pix;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 6; ++p) pix.push_back(static_cast<char>(n == 3 && p == 5 ? 255 : 60 * n + p));
    im.write(pix.data(), static_cast<std::streamsize>(pix.size() - drop_bytes));
  }
  {
    std::ofstream lb(f.labels, std::ios::binary);
    put_be32(lb, 0x801);
    put_be32(lb, label_count);
    const char labels[4] = {0, 1, 2, 3};
    lb.write(labels, 4);
  }
  return f;
}

}  // namespace

TEST(Idx, LoadsImagesAndLabels) {
  const IdxFiles f = write_idx("ok");
  const Dataset ds = load_idx(f.images, f.labels);
  EXPECT_EQ(ds.inputs.shape(), (Shape{4, 1, 3, 2}));
  EXPECT_EQ(ds.labels, Tensor::vector({0, 1, 2, 3}));
  EXPECT_EQ(ds.classes, 4u);
  EXPECT_DOUBLE_EQ(ds.inputs[6], 60.0 / 255.0);
  EXPECT_EQ(ds.inputs[23], 1.0);
  EXPECT_EQ(ds.inputs[0], 0.0);
}

TEST(Idx, RejectsBadMagic) {
  const IdxFiles f = write_idx("magic", 0x802);
  EXPECT_THROW(load_idx(f.images, f.labels), DataError);
}

TEST(Idx, RejectsTruncation) {
  const IdxFiles f = write_idx("trunc", 0x803, 4, 3);
  EXPECT_THROW(load_idx(f.images, f.labels), DataError);
}

TEST(Idx, RejectsCountMismatch) {
  const IdxFiles f = write_idx("count", 0x803, 3);
  EXPECT_THROW(load_idx(f.images, f.labels), DataError);
}

TEST(Idx, RejectsMissingFile) {
  EXPECT_THROW(load_idx("/nonexistent/images", "/nonexistent/labels"), DataError);
}

TEST(EpochOrder, PermutationDeterminedBySeedAndEpoch) {
  const auto a = epoch_order(100, 3, 0), b = epoch_order(100, 3, 0);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, epoch_order(100, 3, 1));
  EXPECT_NE(a, epoch_order(100, 4, 0));
  std::vector<std::size_t> sorted = a, iota(100);
  std::sort(sorted.begin(), sorted.end());
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
}

TEST(Batches, ConsecutiveAndNeverWrap) {
  BlobsConfig cfg;
  cfg.samples = 10;
  const Dataset ds = make_blobs(cfg);
  const auto bs = take_batches(ds, 4, 2);
  ASSERT_EQ(bs.size(), 2u);
  EXPECT_EQ(bs[1].inputs.dim(0), 4u);
  EXPECT_EQ(bs[1].targets[0], ds.labels[4]);
  EXPECT_THROW(take_batches(ds, 4, 3), DataError);
  EXPECT_THROW(take_batches(ds, 0, 1), DataError);
}

TEST(Blobs, LabelsCoverClassesAndSeedReproduces) {
  BlobsConfig cfg;
  cfg.samples = 200;
  cfg.classes = 3;
  cfg.seed = 9;
  const Dataset a = make_blobs(cfg), b = make_blobs(cfg);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.classes, 3u);
  std::vector<int> count(3, 0);
  for (double l : a.labels.storage()) {
    ASSERT_GE(l, 0.0);
    ASSERT_LT(l, 3.0);
    ++count[static_cast<int>(l)];
  }
  for (int c : count) EXPECT_GT(c, 0);
  cfg.image_shape = {1, 4, 4};
  EXPECT_EQ(make_blobs(cfg).sample_shape(), (Shape{1, 4, 4}));
}

TEST(Spirals, TwoClassesInThePlane) {
  const Dataset ds = make_spirals(100, 0.1, 2);
  EXPECT_EQ(ds.inputs.shape(), (Shape{100, 2}));
  EXPECT_EQ(ds.classes, 2u);
}

TEST(Subset, CopiesRangeAndChecksBounds) {
  BlobsConfig cfg;
  cfg.samples = 10;
  const Dataset ds = make_blobs(cfg);
  const Dataset s = subset(ds, 3, 4);
  EXPECT_EQ(s.size(), 4u);
  EXPECT_EQ(s.labels[0], ds.labels[3]);
  EXPECT_THROW(subset(ds, 8, 4), DataError);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oba/tensor.hpp"

namespace oba {

struct Batch {
  Tensor inputs;
  Tensor targets;
};

/// Labelled samples in fixed storage order.
struct Dataset {
  std::string kind;
  Tensor inputs;  // [N, ...sample shape]
  Tensor labels;  // [N], integral class ids
  std::size_t classes = 0;

  std::size_t size() const { return inputs.dim(0); }
  Shape sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }
};

struct BlobsConfig {
  std::size_t samples = 512;
  std::size_t classes = 4;
  /// Flat feature count; ignored when `image_shape` is set.
  std::size_t features = 8;
  /// Optional [C, H, W] sample shape for convolutional models.
  Shape image_shape;
  double separation = 3.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

/// Gaussian clusters around per-class random centers.
Dataset make_blobs(const BlobsConfig& cfg);
/// Two interleaved spirals in the plane, two classes.
Dataset make_spirals(std::size_t samples, double noise, std::uint64_t seed);
/// IDX image/label files (magic 0x803 / 0x801, big-endian sizes, ubyte pixels
/// scaled to [0, 1]); images come back as [N, 1, H, W].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Consecutive samples [begin, begin + count).
Dataset subset(const Dataset& ds, std::size_t begin, std::size_t count);

/// Samples in the listed order.
Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);
/// Permutation of [0, n) for one epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);
/// The first `count` consecutive batches in storage order. Throws DataError
/// when the dataset runs out; never wraps.
std::vector<Batch> take_batches(const Dataset& ds, std::size_t batch_size, std::size_t count);
/// Every sample, in storage order, as one batch.
Batch whole(const Dataset& ds);

}  // namespace oba

#include "oba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "oba/errors.hpp"

namespace oba {

namespace fs = std::filesystem;

namespace {

std::uint32_t read_be32(std::istream& in, const fs::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("'" + path.string() + "' is truncated");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n, const fs::path& path) {
  std::vector<unsigned char> out(n);
  if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n))) {
    throw DataError("'" + path.string() + "' is truncated");
  }
  return out;
}

}  // namespace

Dataset make_blobs(const BlobsConfig& cfg) {
  if (cfg.classes < 2 || cfg.samples == 0) throw DataError("blobs need at least 2 classes and 1 sample");
  Shape sample = cfg.image_shape.empty() ? Shape{cfg.features} : cfg.image_shape;
  const std::size_t dim = shape_numel(sample);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(cfg.classes * dim);
  for (double& c : centers) c = normal(rng) * cfg.separation / std::sqrt(static_cast<double>(dim));
  Shape shape{cfg.samples};
  shape.insert(shape.end(), sample.begin(), sample.end());
  Dataset ds;
  ds.kind = cfg.image_shape.empty() ? "blobs" : "image_blobs";
  ds.inputs = Tensor(shape);
  ds.labels = Tensor({cfg.samples});
  ds.classes = cfg.classes;
  for (std::size_t n = 0; n < cfg.samples; ++n) {
    const std::size_t k = n % cfg.classes;
    ds.labels[n] = static_cast<double>(k);
    for (std::size_t i = 0; i < dim; ++i)
      ds.inputs[n * dim + i] = centers[k * dim + i] + cfg.noise * normal(rng) / std::sqrt(static_cast<double>(dim));
  }
  return ds;
}

Dataset make_spirals(std::size_t samples, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  Dataset ds;
  ds.kind = "spirals";
  ds.inputs = Tensor({samples, 2});
  ds.labels = Tensor({samples});
  ds.classes = 2;
  for (std::size_t n = 0; n < samples; ++n) {
    const std::size_t k = n % 2;
    const double t = 0.25 + 2.75 * static_cast<double>(n / 2) / static_cast<double>(std::max<std::size_t>(1, samples / 2));
    const double angle = t * 2.0 * std::numbers::pi + static_cast<double>(k) * std::numbers::pi;
    ds.inputs[2 * n] = t * std::cos(angle) + normal(rng);
    ds.inputs[2 * n + 1] = t * std::sin(angle) + normal(rng);
    ds.labels[n] = static_cast<double>(k);
  }
  return ds;
}

Dataset load_idx(const fs::path& images, const fs::path& labels) {
  std::ifstream im(images, std::ios::binary);
  if (!im) throw DataError("cannot open '" + images.string() + "'");
  std::ifstream lb(labels, std::ios::binary);
  if (!lb) throw DataError("cannot open '" + labels.string() + "'");
  if (read_be32(im, images) != 0x803) throw DataError("'" + images.string() + "' has a bad IDX image magic");
  if (read_be32(lb, labels) != 0x801) throw DataError("'" + labels.string() + "' has a bad IDX label magic");
  const std::size_t n = read_be32(im, images), h = read_be32(im, images), w = read_be32(im, images);
  const std::size_t nl = read_be32(lb, labels);
  if (n != nl) {
    throw DataError("image count " + std::to_string(n) + " does not match label count " + std::to_string(nl));
  }
  const auto pix = read_bytes(im, n * h * w, images);
  const auto lab = read_bytes(lb, n, labels);
  Dataset ds;
  ds.kind = "idx";
  ds.inputs = Tensor({n, 1, h, w});
  ds.labels = Tensor({n});
  for (std::size_t i = 0; i < pix.size(); ++i) ds.inputs[i] = pix[i] / 255.0;
  std::size_t maxl = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[i];
    maxl = std::max<std::size_t>(maxl, lab[i]);
  }
  ds.classes = n ? maxl + 1 : 0;
  return ds;
}

Dataset subset(const Dataset& ds, std::size_t begin, std::size_t count) {
  if (begin + count > ds.size()) throw DataError("subset runs past the end of the dataset");
  Dataset out = ds;
  out.inputs = ds.inputs.slice_rows(begin, count);
  out.labels = ds.labels.slice_rows(begin, count);
  return out;
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Shape shape = ds.inputs.shape();
  shape[0] = indices.size();
  const std::size_t per = ds.inputs.size() / ds.size();
  Batch b{Tensor(shape), Tensor({indices.size()})};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= ds.size()) throw DataError("sample index out of range");
    std::copy_n(ds.inputs.storage().begin() + static_cast<std::ptrdiff_t>(i * per), per,
                b.inputs.storage().begin() + static_cast<std::ptrdiff_t>(k * per));
    b.targets[k] = ds.labels[i];
  }
  return b;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed * 1000003ULL + epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

std::vector<Batch> take_batches(const Dataset& ds, std::size_t batch_size, std::size_t count) {
  if (batch_size == 0 || count == 0) throw DataError("batch size and batch count must be positive");
  if (batch_size * count > ds.size()) {
    throw DataError("dataset has " + std::to_string(ds.size()) + " samples, " + std::to_string(count) +
                    " batches of " + std::to_string(batch_size) + " requested");
  }
  std::vector<Batch> out;
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<std::size_t> idx(batch_size);
    std::iota(idx.begin(), idx.end(), b * batch_size);
    out.push_back(make_batch(ds, idx));
  }
  return out;
}

Batch whole(const Dataset& ds) { return {ds.inputs, ds.labels}; }

}  // namespace oba

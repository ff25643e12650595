#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oba/dataset.hpp"
#include "oba/graph.hpp"

namespace oba {

/// Loss sink appended to zoo graphs.
enum class LossSink { CrossEntropy, Linear, Squared };

struct MlpSpec {
  std::size_t inputs = 4;
  std::vector<std::size_t> hidden{8};
  std::size_t outputs = 3;
  LossSink loss = LossSink::CrossEntropy;
  bool bias = true;
  bool relu = true;
};

struct CnnSpec {
  Shape input{1, 8, 8};
  std::vector<std::size_t> channels{4};
  std::size_t kernel = 3;
  std::size_t pad = 1;
  /// Pool window after each conv; 0 disables pooling.
  std::size_t pool = 2;
  bool max_pool = false;
  std::size_t outputs = 3;
  LossSink loss = LossSink::CrossEntropy;
};

struct AttentionSpec {
  std::size_t tokens = 3;
  std::size_t model_dim = 4;
  std::size_t key_dim = 4;
  std::size_t value_dim = 4;
  bool key_bias = false;
  bool value_bias = true;
  LossSink loss = LossSink::Linear;
};

std::string mlp_json(const MlpSpec& spec);
std::string cnn_json(const CnnSpec& spec);
std::string attention_json(const AttentionSpec& spec);
/// y = W_n ... W_1 x, no biases, no nonlinearity, linear loss.
std::string deep_linear_json(const std::vector<std::size_t>& dims);
/// Q = W_q x, K = W_k x, Y = Q K^T over tokens, linear loss.
std::string bilinear_json(std::size_t tokens, std::size_t in_dim, std::size_t key_dim);
/// Conv -> {ReLU -> Conv, skip} -> Add -> Conv -> flatten -> Linear.
std::string residual_cnn_json(std::size_t channels, std::size_t side, std::size_t outputs);

NetworkGraph build(const std::string& json, std::uint64_t seed);

/// Random member of the tiny families: MLP (<= 3 layers, <= 16 wide), CNN
/// (<= 2 conv, <= 8x8), or one single-head attention block (d_k <= 4).
/// `family` 0, 1, 2 picks MLP, CNN, attention.
NetworkGraph random_tiny_graph(std::uint64_t seed, int family);

/// Standard-normal inputs with targets suited to the graph's loss sink
/// (class labels, or normal tensors shaped like the loss input).
Batch random_batch(const NetworkGraph& g, std::size_t n, std::uint64_t seed);

}  // namespace oba

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "oba/graph.hpp"
#include "oba/mask.hpp"

namespace oba {

/// Parses a network description:
///   {"input_shape": [...], "loss": id,
///    "nodes": [{"id", "kind", "attrs": {...}, "init": {...}}],
///    "edges": [[src, dst, slot], ...], "checkpoint": stem?}
/// Parameters come from "init" (he_uniform by default, seeded from `seed`
/// and the node id) unless a checkpoint stem is given, in which case they are
/// loaded from it (relative to `base_dir`).
NetworkGraph parse_network(const std::string& text, std::uint64_t seed = 0,
                           const std::filesystem::path& base_dir = {});
NetworkGraph load_network(const std::filesystem::path& path, std::uint64_t seed = 0);

/// Description of `g` (structure only; "checkpoint" set when given).
std::string network_to_json(const NetworkGraph& g, const std::string& checkpoint_stem = {});

/// Writes <stem>.bin (little-endian float64) and <stem>.json (manifest).
void save_checkpoint(const NetworkGraph& g, const std::filesystem::path& stem, const PruneMask* mask = nullptr);
/// Loads parameter values by id into `g`; returns the stored mask if any.
std::optional<PruneMask> load_checkpoint(NetworkGraph& g, const std::filesystem::path& stem);

/// Network description + checkpoint under `dir`, as network.json and model.{bin,json}.
void save_model(const NetworkGraph& g, const std::filesystem::path& dir, const PruneMask* mask = nullptr);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Raw blob helpers shared with the importance-table format.
void write_f64_blob(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f64_blob(const std::filesystem::path& path);

}  // namespace oba

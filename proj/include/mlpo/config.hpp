#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlpo/policy.hpp"
#include "mlpo/synth.hpp"
#include "mlpo/train.hpp"

namespace mlpo {

/// Environment variable that, when set, replaces output_dir.
inline constexpr const char* kOutputDirEnv = "MLPO_OUTPUT_DIR";

struct Seeds {
  std::uint64_t init = 0;      // policy initialization
  std::uint64_t sampling = 0;  // candidate and evaluation draws
  std::uint64_t pairing = 0;   // preference pair subsampling
  std::uint64_t training = 0;  // minibatch order
};

struct OracleConfig {
  std::uint64_t energy_seed = 0;
  std::uint64_t encoder_seed = 0;
};

struct DataSpec {
  synth::AttributeSpec spec;
  std::size_t train_size = 2000;
};

struct SamplingConfig {
  std::size_t candidates = 500;   // per preference round
  std::size_t eval_samples = 200;
  std::size_t max_len = kDefaultMaxLength;
  double temperature = 1.0;
  // Draws shorter than this are redrawn: the structure encoder and the
  // 3-gram metric are undefined below length 3.
  std::size_t min_length = 3;
  std::size_t max_redraws = 100;
};

struct ArmsConfig {
  std::string single_attribute;              // empty disables the single arm
  bool dpo_baseline = true;                  // DPO arm next to the single arm
  std::vector<std::string> multi_attributes; // empty disables the multi arm
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "runs/default";
  Seeds seeds;
  OracleConfig oracles;
  std::vector<DataSpec> attributes;
  ModelConfig model;
  TrainConfig sft;
  TrainConfig preference;
  SamplingConfig sampling;
  std::size_t max_pairs = 5000;
  ArmsConfig arms;
  nlohmann::json source;  // the document as loaded, before the env override

  std::vector<std::string> attribute_names() const;
  const DataSpec& attribute(std::string_view name) const;  // UsageError lists known
  /// FNV-1a of the config document without output_dir, so the same
  /// experiment hashes equally wherever it writes.
  std::uint64_t hash() const;
};

/// Validates against the schema (unknown keys rejected, every seed required)
/// and throws UsageError naming the offending field. `apply_env` lets
/// MLPO_OUTPUT_DIR override output_dir.
ExperimentConfig parse_config(const nlohmann::json& doc, bool apply_env = true);
ExperimentConfig load_config(const std::filesystem::path& path, bool apply_env = true);

}  // namespace mlpo

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlpo/config.hpp"
#include "mlpo/evalkit.hpp"
#include "mlpo/synth.hpp"
#include "mlpo/train.hpp"

// Pipeline stages. Each stage reads only the files it is given, writes its
// outputs plus a manifest.json (input and output hashes, seeds, config hash)
// into its output directory, and is deterministic given the config.

namespace mlpo {

namespace fs = std::filesystem;

struct Oracles {
  synth::SyntheticEnergyModel energy;
  synth::SyntheticEncoder encoder;
};
Oracles make_oracles(const ExperimentConfig& config);

/// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const fs::path& path);

/// Collects the manifest of one stage.
class Manifest {
 public:
  Manifest(const ExperimentConfig& config, std::string stage);
  void input(const std::string& role, const fs::path& path);
  void output(const std::string& role, const fs::path& path);
  void set(const std::string& key, nlohmann::json value);
  const nlohmann::json& document() const { return doc_; }
  /// Writes `dir/manifest.json` and returns its path.
  fs::path write(const fs::path& dir) const;

 private:
  nlohmann::json doc_;
};

/// Conventional locations below config.output_dir.
fs::path data_path(const ExperimentConfig& config, const std::string& attribute);
fs::path sft_dir(const ExperimentConfig& config);

/// Training FASTA per attribute: data/<attr>.fasta.
std::map<std::string, fs::path> gen_data(const ExperimentConfig& config);

/// Loads the training FASTA files for the given attributes.
TrainingSets load_training_sets(const std::map<std::string, fs::path>& paths);

struct SftOutput {
  fs::path checkpoint;
  fs::path curve;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// One policy with a shared trunk and a prefix per attribute, trained jointly
/// on all given training sets.
SftOutput run_sft(const ExperimentConfig& config, const std::map<std::string, fs::path>& data,
                  const fs::path& out_dir);

struct SampleOutput {
  fs::path fasta;
  std::size_t redraws = 0;
};

/// Draws n sequences conditioned on the (concatenated) prefixes of
/// `attributes`. Draw i uses seeds derived from (seeds.sampling, stream, i),
/// so pools drawn from different policies with the same stream share their
/// random numbers. Draws shorter than sampling.min_length are redrawn.
SampleOutput run_sample(const ExperimentConfig& config, const fs::path& checkpoint,
                        const std::vector<std::string>& attributes, std::size_t n,
                        const std::string& stream, const fs::path& out_fasta);

struct ScoreOutput {
  fs::path scores;         // ScoreRecord JSONL
  fs::path quality;        // QualityScore JSONL
  fs::path distributions;  // fitted distributions JSON
};

ScoreOutput run_score(const ExperimentConfig& config, const fs::path& candidates,
                      const std::map<std::string, fs::path>& training, const fs::path& out_dir);

fs::path run_pairs(const ExperimentConfig& config, const ScoreOutput& scores,
                   const std::vector<std::string>& attributes, const fs::path& out_dir);

struct PreferenceOutput {
  fs::path checkpoint;
  fs::path curve;
  double initial_loss = 0.0;
  double initial_margin = 0.0;
  double final_margin = 0.0;
  double final_loss = 0.0;
  double dataset_margin_before = 0.0;
  double dataset_margin_after = 0.0;
  bool reference_unchanged = false;
};

PreferenceOutput run_train_pref(const ExperimentConfig& config, const fs::path& checkpoint,
                                const fs::path& pairs, const fs::path& candidates,
                                const std::vector<std::string>& attributes, PreferenceMode mode,
                                const fs::path& out_dir);

struct EvaluateOutput {
  QualityReport quality;
  DiversityReport diversity;
  std::optional<DiversityReport> baseline_diversity;
  nlohmann::json summary;  // what goes into metrics.json
};

/// Scores `generated` (jointly with `baseline` when given) against the
/// training sets and computes 3-gram diversity against the training data of
/// every listed attribute.
EvaluateOutput run_evaluate(const ExperimentConfig& config, const fs::path& generated,
                            const std::map<std::string, fs::path>& training,
                            const std::optional<fs::path>& baseline, const fs::path& out_dir);

struct ExperimentOutput {
  fs::path metrics;   // deterministic
  fs::path timings;   // wall-clock seconds per stage
  fs::path manifest;  // links every artifact
  nlohmann::json metrics_json;
};

/// gen-data, joint SFT, then per arm: sample candidates, score, pairs,
/// preference training, fresh samples, and evaluation against the SFT pool.
/// A failing stage is rethrown with its name; earlier outputs stay on disk.
ExperimentOutput run_experiment(const ExperimentConfig& config);

}  // namespace mlpo

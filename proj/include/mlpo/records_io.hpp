#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlpo/evalkit.hpp"
#include "mlpo/prefdata.hpp"
#include "mlpo/ranking.hpp"
#include "mlpo/scoring.hpp"

// File formats shared by the pipeline stages. JSONL records keep a fixed key
// order and write reals with 17 significant digits, so reading a file back
// gives bit-identical values.
// All readers throw DataError with the file name and line on bad input.

namespace mlpo {

std::string read_text(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: truncate, write, check.
void write_text(const std::filesystem::path& path, const std::string& text);

/// One JSON object per line: {"id","energy","gamma","tau_raw":{..},"tau":{..}}.
void write_score_records(const std::vector<ScoreRecord>& records,
                         const std::filesystem::path& path);
std::vector<ScoreRecord> read_score_records(const std::filesystem::path& path);

/// One JSON object per line: {"id","g_gamma","g_tau":{..},"rho"}.
void write_quality_scores(const std::vector<QualityScore>& scores,
                          const std::filesystem::path& path);
std::vector<QualityScore> read_quality_scores(const std::filesystem::path& path);

/// One JSON object per line: {"winner","loser","rho_w","rho_l","delta_rho"}.
/// The dataset-level fields go to a JSON sidecar at `<path>.meta.json`.
void write_pairs(const PreferenceDataset& pairs, const std::filesystem::path& path);
PreferenceDataset read_pairs(const std::filesystem::path& path);

/// {"gamma": dist, "tau": {attr: dist}} with dist =
/// {"kind","a","b","n","mean","var"} (plus "samples" for empirical fits).
void write_distributions(const PoolDistributions& dists, const std::filesystem::path& path);
PoolDistributions read_distributions(const std::filesystem::path& path);

nlohmann::json to_json(const DiversityReport& report);
nlohmann::json to_json(const PoolSummary& summary);
/// Summaries only; per-sequence records are written separately.
nlohmann::json to_json(const QualityReport& report);
nlohmann::json to_json(const FittedDistribution& dist);
/// One header row and one row per pool ("pool", "baseline", "delta").
std::string to_csv(const QualityReport& report);

}  // namespace mlpo

#include "mlpo/pipeline.hpp"

#include <chrono>

#include <fmt/format.h>

#include "mlpo/error.hpp"
#include "mlpo/records_io.hpp"
#include "mlpo/rng.hpp"

namespace mlpo {

using nlohmann::json;

Oracles make_oracles(const ExperimentConfig& config) {
  return {synth::SyntheticEnergyModel(config.oracles.energy_seed),
          synth::SyntheticEncoder(config.oracles.encoder_seed)};
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_text(path))); }

Manifest::Manifest(const ExperimentConfig& config, std::string stage) {
  doc_ = {{"stage", std::move(stage)},
          {"config_hash", hex64(config.hash())},
          {"seeds",
           {{"init", config.seeds.init},
            {"sampling", config.seeds.sampling},
            {"pairing", config.seeds.pairing},
            {"training", config.seeds.training}}},
          {"oracles",
           {{"version", synth::kOracleVersion},
            {"energy_seed", config.oracles.energy_seed},
            {"encoder_seed", config.oracles.encoder_seed}}},
          {"inputs", json::object()},
          {"outputs", json::object()}};
}

void Manifest::input(const std::string& role, const fs::path& path) {
  doc_["inputs"][role] = {{"path", path.generic_string()}, {"fnv1a", file_hash(path)}};
}

void Manifest::output(const std::string& role, const fs::path& path) {
  doc_["outputs"][role] = {{"path", path.generic_string()}, {"fnv1a", file_hash(path)}};
}

void Manifest::set(const std::string& key, json value) { doc_[key] = std::move(value); }

fs::path Manifest::write(const fs::path& dir) const {
  const fs::path path = dir / "manifest.json";
  write_text(path, doc_.dump(2) + "\n");
  return path;
}

fs::path data_path(const ExperimentConfig& config, const std::string& attribute) {
  return config.output_dir / "data" / (attribute + ".fasta");
}

fs::path sft_dir(const ExperimentConfig& config) { return config.output_dir / "sft"; }

std::map<std::string, fs::path> gen_data(const ExperimentConfig& config) {
  const fs::path dir = config.output_dir / "data";
  fs::create_directories(dir);
  Manifest m(config, "gen-data");
  json specs = json::array();
  std::map<std::string, fs::path> out;
  for (const auto& a : config.attributes) {
    const auto ds = synth::generate_training_set(a.spec, a.train_size);
    const fs::path path = data_path(config, a.spec.id);
    write_fasta(ds, path);
    m.output(a.spec.id, path);
    specs.push_back({{"id", a.spec.id},
                     {"motif", a.spec.motif},
                     {"insertion_rate", a.spec.insertion_rate},
                     {"length_min", a.spec.length_min},
                     {"length_max", a.spec.length_max},
                     {"seed", a.spec.seed},
                     {"train_size", a.train_size}});
    out[a.spec.id] = path;
  }
  m.set("attributes", specs);
  m.write(dir);
  return out;
}

TrainingSets load_training_sets(const std::map<std::string, fs::path>& paths) {
  TrainingSets sets;
  for (const auto& [name, path] : paths) {
    auto ds = parse_fasta(path, name);
    for (const auto& s : ds.sequences) validate(s);
    sets.emplace(name, std::move(ds));
  }
  return sets;
}

SftOutput run_sft(const ExperimentConfig& config, const std::map<std::string, fs::path>& data,
                  const fs::path& out_dir) {
  if (data.empty()) throw UsageError("sft: no attributes selected");
  fs::create_directories(out_dir);
  Manifest m(config, "sft");
  std::vector<SequenceDataset> sets;
  std::vector<std::string> names;
  for (const auto& [name, path] : data) {
    m.input("train:" + name, path);
    sets.push_back(parse_fasta(path, name));
    names.push_back(name);
  }
  const Policy init(config.model, names, derive_seed(config.seeds.init, "policy"));
  const auto result = train_sft(config.sft, init, sets);

  SftOutput out{out_dir / "policy.ckpt", out_dir / "loss.csv", 0.0, 0.0};
  save_checkpoint(result.policy, out.checkpoint);
  write_sft_curve(result.curve, out.curve);
  if (!result.curve.empty()) {
    out.initial_loss = result.curve.front().loss;
    out.final_loss = result.curve.back().loss;
  }
  m.output("checkpoint", out.checkpoint);
  m.output("loss_curve", out.curve);
  m.set("steps", config.sft.steps);
  m.set("attributes", names);
  m.set("checkpoint_checksum", hex64(result.policy.checksum()));
  m.write(out_dir);
  return out;
}

SampleOutput run_sample(const ExperimentConfig& config, const fs::path& checkpoint,
                        const std::vector<std::string>& attributes, std::size_t n,
                        const std::string& stream, const fs::path& out_fasta) {
  if (n == 0) throw UsageError("sample: n must be >= 1");
  if (attributes.empty()) throw UsageError("sample: no attributes selected");
  const Policy policy = load_checkpoint(checkpoint);
  const auto cond = policy.conditioning(attributes);
  SampleOptions opt;
  opt.max_len = config.sampling.max_len;
  opt.temperature = config.sampling.temperature;

  SequenceDataset ds;
  ds.attribute = cond.attributes.size() == 1 ? cond.attributes[0] : std::string();
  SampleOutput out{out_fasta, 0};
  const std::uint64_t base = derive_seed(config.seeds.sampling, stream);
  for (std::size_t i = 0; i < n; ++i) {
    std::string residues;
    std::size_t attempt = 0;
    for (; attempt < config.sampling.max_redraws; ++attempt) {
      residues = sample(policy, cond, opt, derive_seed(base, fmt::format("{}/{}", i, attempt)));
      if (residues.size() >= config.sampling.min_length) break;
    }
    if (residues.size() < config.sampling.min_length) {
      throw DataError(fmt::format("sample: draw {} stayed shorter than {} residues after {} tries",
                                  i, config.sampling.min_length, config.sampling.max_redraws));
    }
    out.redraws += attempt;
    ds.sequences.push_back({fmt::format("{}_{}", stream, i), std::move(residues)});
  }
  if (out_fasta.has_parent_path()) fs::create_directories(out_fasta.parent_path());
  write_fasta(ds, out_fasta);

  Manifest m(config, "sample");
  m.input("checkpoint", checkpoint);
  m.output("fasta", out_fasta);
  m.set("conditioning", cond.attributes);
  m.set("stream", stream);
  m.set("count", n);
  m.set("redraws", out.redraws);
  m.set("max_len", opt.max_len);
  m.set("temperature", opt.temperature);
  const json& doc = m.document();
  write_text(out_fasta.string() + ".manifest.json", doc.dump(2) + "\n");
  return out;
}

ScoreOutput run_score(const ExperimentConfig& config, const fs::path& candidates,
                      const std::map<std::string, fs::path>& training, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto pool = parse_fasta(candidates);
  const auto oracles = make_oracles(config);
  const auto sets = load_training_sets(training);
  const auto embedded = embed_training_sets(sets, oracles.encoder);
  const auto records = score_pool(pool.sequences, oracles.energy, oracles.encoder, embedded);
  std::vector<std::string> names;
  for (const auto& [name, _] : training) names.push_back(name);
  const auto dists = fit_pool(records, names);
  const auto quality = quality_scores(records, dists);

  ScoreOutput out{out_dir / "scores.jsonl", out_dir / "quality.jsonl",
                  out_dir / "distributions.json"};
  write_score_records(records, out.scores);
  write_quality_scores(quality, out.quality);
  write_distributions(dists, out.distributions);

  Manifest m(config, "score");
  m.input("candidates", candidates);
  for (const auto& [name, path] : training) m.input("train:" + name, path);
  m.output("scores", out.scores);
  m.output("quality", out.quality);
  m.output("distributions", out.distributions);
  m.set("attributes", names);
  m.set("pool_size", records.size());
  m.write(out_dir);
  return out;
}

fs::path run_pairs(const ExperimentConfig& config, const ScoreOutput& scores,
                   const std::vector<std::string>& attributes, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto records = read_score_records(scores.scores);
  const auto quality = read_quality_scores(scores.quality);
  auto pairs = build_pairs(records, quality, attributes, config.max_pairs,
                           derive_seed(config.seeds.pairing, "pairs"));
  pairs.pool_reference = file_hash(scores.scores);
  const fs::path path = out_dir / "pairs.jsonl";
  write_pairs(pairs, path);

  Manifest m(config, "pairs");
  m.input("scores", scores.scores);
  m.input("quality", scores.quality);
  m.output("pairs", path);
  m.set("attributes", attributes);
  m.set("valid_pairs", pairs.valid_pair_count);
  m.set("sampled_pairs", pairs.pairs.size());
  m.write(out_dir);
  return path;
}

PreferenceOutput run_train_pref(const ExperimentConfig& config, const fs::path& checkpoint,
                                const fs::path& pairs_path, const fs::path& candidates,
                                const std::vector<std::string>& attributes, PreferenceMode mode,
                                const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const Policy init = load_checkpoint(checkpoint);
  const auto pairs = read_pairs(pairs_path);
  std::map<std::string, std::string> seqs;
  for (auto& s : parse_fasta(candidates).sequences) seqs.emplace(s.id, std::move(s.residues));
  const auto result =
      train_preference(config.preference, init, pairs, seqs, attributes, mode);

  PreferenceOutput out;
  out.checkpoint = out_dir / "policy.ckpt";
  out.curve = out_dir / "loss.csv";
  save_checkpoint(result.policy, out.checkpoint);
  write_preference_curve(result.curve, out.curve);
  if (!result.curve.empty()) {
    out.initial_loss = result.curve.front().loss;
    out.initial_margin = result.curve.front().mean_margin;
    out.final_margin = result.curve.back().mean_margin;
    out.final_loss = result.curve.back().loss;
  }
  out.dataset_margin_before = result.dataset_margin_before;
  out.dataset_margin_after = result.dataset_margin_after;
  out.reference_unchanged = result.reference_checksum_before == result.reference_checksum_after;

  Manifest m(config, std::string("train-pref/") + to_string(mode));
  m.input("checkpoint", checkpoint);
  m.input("pairs", pairs_path);
  m.input("candidates", candidates);
  m.output("checkpoint", out.checkpoint);
  m.output("loss_curve", out.curve);
  m.set("mode", to_string(mode));
  m.set("attributes", attributes);
  m.set("beta", config.preference.beta);
  m.set("alpha", mode == PreferenceMode::mlpo ? config.preference.alpha : 0.0);
  m.set("steps", config.preference.steps);
  m.set("reference_checksum", hex64(result.reference_checksum_before));
  m.set("reference_unchanged", out.reference_unchanged);
  m.write(out_dir);
  return out;
}

EvaluateOutput run_evaluate(const ExperimentConfig& config, const fs::path& generated,
                            const std::map<std::string, fs::path>& training,
                            const std::optional<fs::path>& baseline, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto pool = parse_fasta(generated);
  const auto sets = load_training_sets(training);
  std::vector<ProteinSequence> train_union;
  for (const auto& [_, ds] : sets) {
    train_union.insert(train_union.end(), ds.sequences.begin(), ds.sequences.end());
  }
  const auto oracles = make_oracles(config);
  const auto embedded = embed_training_sets(sets, oracles.encoder);

  EvaluateOutput out;
  SequenceDataset base;
  if (baseline) base = parse_fasta(*baseline);
  out.quality =
      quality_report(pool.sequences, oracles.energy, oracles.encoder, embedded, base.sequences);
  out.diversity = diversity_report(pool.sequences, train_union);
  if (baseline) out.baseline_diversity = diversity_report(base.sequences, train_union);

  write_score_records(out.quality.pool_records, out_dir / "pool_scores.jsonl");
  write_quality_scores(out.quality.pool_quality, out_dir / "pool_quality.jsonl");
  if (baseline) {
    write_score_records(out.quality.baseline_records, out_dir / "baseline_scores.jsonl");
    write_quality_scores(out.quality.baseline_quality, out_dir / "baseline_quality.jsonl");
  }
  out.summary = {{"quality", to_json(out.quality)}, {"diversity", to_json(out.diversity)}};
  if (out.baseline_diversity) {
    out.summary["baseline_diversity"] = to_json(*out.baseline_diversity);
    const double b = out.baseline_diversity->inter_output;
    out.summary["inter_output_ratio"] = b > 0.0 ? json(out.diversity.inter_output / b) : json();
  }
  write_text(out_dir / "report.json", out.summary.dump(2) + "\n");
  write_text(out_dir / "quality.csv", to_csv(out.quality));

  Manifest m(config, "evaluate");
  m.input("generated", generated);
  if (baseline) m.input("baseline", *baseline);
  for (const auto& [name, path] : training) m.input("train:" + name, path);
  m.output("report", out_dir / "report.json");
  m.output("quality_csv", out_dir / "quality.csv");
  m.output("pool_scores", out_dir / "pool_scores.jsonl");
  if (baseline) m.output("baseline_scores", out_dir / "baseline_scores.jsonl");
  m.write(out_dir);
  return out;
}

namespace {

// Runs one stage, timing it and prefixing any failure with the stage name.
class StageRunner {
 public:
  template <class F>
  auto operator()(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto r = f();
      timings_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return r;
    } catch (const UsageError& e) {
      throw UsageError("stage " + name + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("stage " + name + ": " + e.what());
    } catch (const DivergenceError& e) {
      throw DivergenceError("stage " + name + ": " + e.what());
    }
  }
  const json& timings() const { return timings_; }

 private:
  json timings_ = json::object();
};

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : std::string(sep)) + s;
  return out;
}

json pref_json(const PreferenceOutput& p) {
  return {{"initial_loss", p.initial_loss},
          {"final_loss", p.final_loss},
          {"initial_margin", p.initial_margin},
          {"final_margin", p.final_margin},
          {"dataset_margin_before", p.dataset_margin_before},
          {"dataset_margin_after", p.dataset_margin_after},
          {"reference_unchanged", p.reference_unchanged}};
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  const auto total0 = std::chrono::steady_clock::now();
  fs::create_directories(config.output_dir);
  StageRunner stage;
  json metrics = {{"config_hash", hex64(config.hash())}};
  json artifacts = json::object();

  const auto data = stage("gen-data", [&] { return gen_data(config); });
  artifacts["data"] = (config.output_dir / "data" / "manifest.json").generic_string();

  const auto sft = stage("sft", [&] { return run_sft(config, data, sft_dir(config)); });
  metrics["sft"] = {{"initial_loss", sft.initial_loss}, {"final_loss", sft.final_loss}};
  artifacts["sft"] = (sft_dir(config) / "manifest.json").generic_string();

  // One arm: candidates from the SFT policy, pairs, preference training, then
  // fresh samples compared against SFT samples drawn with the same seeds.
  auto run_arm = [&](const std::string& arm, const std::vector<std::string>& attrs,
                     const std::vector<PreferenceMode>& modes) {
    const fs::path dir = config.output_dir / arm;
    const std::string tag = join(attrs, "+");
    std::map<std::string, fs::path> training;
    for (const auto& a : attrs) training[a] = data.at(a);
    json arm_metrics = {{"attributes", attrs}};
    json arm_artifacts = json::object();

    const auto cand = stage(arm + "/sample-candidates", [&] {
      return run_sample(config, sft.checkpoint, attrs, config.sampling.candidates,
                        "candidates:" + tag, dir / "candidates.fasta");
    });
    const auto scores = stage(arm + "/score", [&] {
      return run_score(config, cand.fasta, training, dir / "score");
    });
    const auto pairs = stage(arm + "/pairs", [&] {
      return run_pairs(config, scores, attrs, dir / "pairs");
    });
    const auto sft_eval = stage(arm + "/sample-sft", [&] {
      return run_sample(config, sft.checkpoint, attrs, config.sampling.eval_samples,
                        "eval:" + tag, dir / "sft_samples.fasta");
    });
    const auto meta = read_pairs(pairs);
    arm_metrics["pairs"] = {{"valid", meta.valid_pair_count}, {"sampled", meta.pairs.size()}};
    arm_metrics["candidate_redraws"] = cand.redraws;
    arm_metrics["sft_sample_redraws"] = sft_eval.redraws;
    arm_artifacts["candidates"] = cand.fasta.generic_string();
    arm_artifacts["score"] = (dir / "score" / "manifest.json").generic_string();
    arm_artifacts["pairs"] = (dir / "pairs" / "manifest.json").generic_string();
    arm_artifacts["sft_samples"] = sft_eval.fasta.generic_string();

    for (const auto mode : modes) {
      const std::string name = to_string(mode);
      const auto pref = stage(arm + "/train-" + name, [&] {
        return run_train_pref(config, sft.checkpoint, pairs, cand.fasta, attrs, mode,
                              dir / name);
      });
      const auto post = stage(arm + "/sample-" + name, [&] {
        return run_sample(config, pref.checkpoint, attrs, config.sampling.eval_samples,
                          "eval:" + tag, dir / name / "samples.fasta");
      });
      const auto eval = stage(arm + "/evaluate-" + name, [&] {
        return run_evaluate(config, post.fasta, training, sft_eval.fasta,
                            dir / name / "evaluate");
      });
      json mm = pref_json(pref);
      mm["sample_redraws"] = post.redraws;
      mm["evaluation"] = eval.summary;
      arm_metrics[name] = mm;
      arm_artifacts[name] = {
          {"train", (dir / name / "manifest.json").generic_string()},
          {"samples", post.fasta.generic_string()},
          {"evaluate", (dir / name / "evaluate" / "manifest.json").generic_string()}};
    }
    metrics[arm] = arm_metrics;
    artifacts[arm] = arm_artifacts;
  };

  if (!config.arms.single_attribute.empty()) {
    std::vector<PreferenceMode> modes{PreferenceMode::mlpo};
    if (config.arms.dpo_baseline) modes.push_back(PreferenceMode::dpo);
    run_arm("single", {config.arms.single_attribute}, modes);
  }
  if (!config.arms.multi_attributes.empty()) {
    run_arm("multi", config.arms.multi_attributes, {PreferenceMode::mlpo});
  }

  ExperimentOutput out;
  out.metrics = config.output_dir / "metrics.json";
  out.timings = config.output_dir / "timings.json";
  out.manifest = config.output_dir / "manifest.json";
  write_text(out.metrics, metrics.dump(2) + "\n");
  json timings = stage.timings();
  timings["total"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - total0).count();
  write_text(out.timings, timings.dump(2) + "\n");

  Manifest m(config, "run-experiment");
  m.set("config", config.source);
  m.set("artifacts", artifacts);
  m.output("metrics", out.metrics);
  m.write(config.output_dir);
  out.metrics_json = std::move(metrics);
  return out;
}

}  // namespace mlpo

// Command-line driver for the preference-optimization pipeline.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
// divergence.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mlpo/config.hpp"
#include "mlpo/error.hpp"
#include "mlpo/pipeline.hpp"

namespace {

using namespace mlpo;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::map<std::string, fs::path> training_paths(const ExperimentConfig& config,
                                               const std::vector<std::string>& attributes) {
  std::map<std::string, fs::path> out;
  for (const auto& a : attributes) {
    config.attribute(a);  // throws with the list of known attributes
    out[a] = data_path(config, a);
  }
  return out;
}

std::vector<std::string> or_all(const ExperimentConfig& config, std::vector<std::string> attrs) {
  return attrs.empty() ? config.attribute_names() : attrs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic protein preference-optimization pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> attributes;
  std::string checkpoint, out, candidates, scores_dir, pairs, generated, baseline, stream;
  std::string mode = "mlpo";
  std::size_t n = 0;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
  };

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic training FASTA per attribute");
  add_config(gen);

  auto* sft = app.add_subcommand("sft", "Supervised finetuning of prefixes and trunk");
  add_config(sft);
  sft->add_option("-a,--attribute", attributes, "Attributes to train (default: all)");
  sft->add_option("-o,--out", out, "Output directory (default: <output_dir>/sft)");

  auto* smp = app.add_subcommand("sample", "Sample sequences from a checkpoint");
  add_config(smp);
  smp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  smp->add_option("-a,--attribute", attributes, "Conditioning attributes")->required();
  smp->add_option("-n,--count", n, "Number of sequences")->required();
  smp->add_option("--stream", stream, "Seed stream name (default: sample:<attrs>)");
  smp->add_option("-o,--out", out, "Output FASTA")->required();

  auto* scr = app.add_subcommand("score", "Score a candidate pool and fit distributions");
  add_config(scr);
  scr->add_option("--candidates", candidates)->required()->check(CLI::ExistingFile);
  scr->add_option("-a,--attribute", attributes, "Attributes (default: all)");
  scr->add_option("-o,--out", out, "Output directory")->required();

  auto* prs = app.add_subcommand("pairs", "Build preference pairs from scored records");
  add_config(prs);
  prs->add_option("--scores", scores_dir, "Directory written by `score`")
      ->required()
      ->check(CLI::ExistingDirectory);
  prs->add_option("-a,--attribute", attributes, "Attributes (default: all)");
  prs->add_option("-o,--out", out, "Output directory")->required();

  auto* trp = app.add_subcommand("train-pref", "Preference optimization (mlpo or dpo)");
  add_config(trp);
  trp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  trp->add_option("--pairs", pairs)->required()->check(CLI::ExistingFile);
  trp->add_option("--candidates", candidates)->required()->check(CLI::ExistingFile);
  trp->add_option("-a,--attribute", attributes, "Conditioning attributes")->required();
  trp->add_option("--mode", mode)->check(CLI::IsMember({"mlpo", "dpo"}));
  trp->add_option("-o,--out", out, "Output directory")->required();

  auto* evl = app.add_subcommand("evaluate", "Quality and diversity reports");
  add_config(evl);
  evl->add_option("--generated", generated)->required()->check(CLI::ExistingFile);
  evl->add_option("--baseline", baseline)->check(CLI::ExistingFile);
  evl->add_option("-a,--attribute", attributes, "Attributes (default: all)");
  evl->add_option("-o,--out", out, "Output directory")->required();

  auto* run = app.add_subcommand("run-experiment", "Run every stage end to end");
  add_config(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const auto config = load_config(config_path);
    if (gen->parsed()) {
      for (const auto& [name, path] : gen_data(config)) {
        std::cout << name << '\t' << path.string() << '\n';
      }
    } else if (sft->parsed()) {
      const auto r = run_sft(config, training_paths(config, or_all(config, attributes)),
                             out.empty() ? sft_dir(config) : fs::path(out));
      std::cout << r.checkpoint.string() << '\n';
    } else if (smp->parsed()) {
      std::string name = stream;
      if (name.empty()) {
        name = "sample:";
        for (std::size_t i = 0; i < attributes.size(); ++i) name += (i ? "+" : "") + attributes[i];
      }
      const auto r = run_sample(config, checkpoint, attributes, n, name, out);
      std::cout << r.fasta.string() << '\n';
    } else if (scr->parsed()) {
      const auto r = run_score(config, candidates,
                               training_paths(config, or_all(config, attributes)), out);
      std::cout << r.scores.string() << '\n';
    } else if (prs->parsed()) {
      const fs::path dir = scores_dir;
      const ScoreOutput s{dir / "scores.jsonl", dir / "quality.jsonl",
                          dir / "distributions.json"};
      std::cout << run_pairs(config, s, or_all(config, attributes), out).string() << '\n';
    } else if (trp->parsed()) {
      const auto r = run_train_pref(config, checkpoint, pairs, candidates, attributes,
                                    parse_preference_mode(mode), out);
      std::cout << r.checkpoint.string() << '\n';
    } else if (evl->parsed()) {
      std::optional<fs::path> base;
      if (!baseline.empty()) base = baseline;
      const auto r = run_evaluate(config, generated,
                                  training_paths(config, or_all(config, attributes)), base, out);
      std::cout << r.summary.dump(2) << '\n';
    } else if (run->parsed()) {
      const auto r = run_experiment(config);
      std::cout << r.metrics.string() << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}

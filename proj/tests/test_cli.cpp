#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"

#include "mlpo/records_io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "mlpo-test-cli";

json tiny_experiment(const fs::path& out) {
  return {
      {"output_dir", out.string()},
      {"seeds", {{"init", 1}, {"sampling", 2}, {"pairing", 3}, {"training", 4}}},
      {"oracles", {{"energy_seed", 7}, {"encoder_seed", 8}}},
      {"attributes",
       {{{"id", "A"}, {"motif", "KLR"}, {"length_min", 10}, {"length_max", 20}, {"seed", 5},
         {"train_size", 30}},
        {{"id", "B"}, {"motif", "DED"}, {"length_min", 10}, {"length_max", 20}, {"seed", 6},
         {"train_size", 30}}}},
      {"model",
       {{"width", 8}, {"layers", 1}, {"heads", 2}, {"context", 64}, {"mlp_hidden", 8},
        {"prefix_length", 2}}},
      {"sft", {{"learning_rate", 1e-2}, {"batch_size", 4}, {"steps", 3}}},
      {"preference", {{"learning_rate", 1e-3}, {"batch_size", 4}, {"steps", 2}}},
      {"sampling", {{"candidates", 24}, {"eval_samples", 8}, {"max_len", 40}}},
      {"pairs", {{"max_pairs", 50}}},
      {"arms", {{"single_attribute", "A"}, {"multi_attributes", {"A", "B"}}}}};
}

fs::path write_config(const std::string& name, const json& doc) {
  const auto path = kDir / name;
  mlpo::write_text(path, doc.dump(2));
  return path;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MLPO_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command line: end to end, stage by stage, and exit codes") {
  fs::remove_all(kDir);
  ::unsetenv("MLPO_OUTPUT_DIR");
  const auto cfg1 = write_config("run1.json", tiny_experiment(kDir / "run1"));
  const auto cfg2 = write_config("run2.json", tiny_experiment(kDir / "run2"));

  REQUIRE(run("run-experiment -c " + cfg1.string()) == 0);
  REQUIRE(run("run-experiment -c " + cfg2.string()) == 0);
  CHECK(mlpo::read_text(kDir / "run1/metrics.json") == mlpo::read_text(kDir / "run2/metrics.json"));
  const auto metrics = json::parse(mlpo::read_text(kDir / "run1/metrics.json"));
  CHECK(metrics.contains("single"));
  CHECK(metrics.contains("multi"));
  CHECK(metrics["single"]["mlpo"]["reference_unchanged"] == true);
  CHECK(fs::exists(kDir / "run1/timings.json"));
  CHECK(fs::exists(kDir / "run1/manifest.json"));

  // The same stages one at a time reproduce the experiment's artifacts.
  const auto c = cfg1.string();
  const auto s = (kDir / "stages").string();
  CHECK(run("gen-data -c " + c) == 0);
  CHECK(run("sft -c " + c + " -o " + s + "/sft") == 0);
  CHECK(mlpo::read_text(s + "/sft/policy.ckpt") == mlpo::read_text(kDir / "run1/sft/policy.ckpt"));
  CHECK(run("sample -c " + c + " --checkpoint " + s + "/sft/policy.ckpt -a A -n 24 --stream candidates:A -o " +
            s + "/cand.fasta") == 0);
  CHECK(mlpo::read_text(s + "/cand.fasta") == mlpo::read_text(kDir / "run1/single/candidates.fasta"));
  CHECK(run("score -c " + c + " --candidates " + s + "/cand.fasta -a A -o " + s + "/score") == 0);
  CHECK(run("pairs -c " + c + " --scores " + s + "/score -a A -o " + s + "/pairs") == 0);
  CHECK(mlpo::read_text(s + "/pairs/pairs.jsonl") ==
        mlpo::read_text(kDir / "run1/single/pairs/pairs.jsonl"));
  CHECK(run("train-pref -c " + c + " --checkpoint " + s + "/sft/policy.ckpt --pairs " + s +
            "/pairs/pairs.jsonl --candidates " + s + "/cand.fasta -a A --mode dpo -o " + s +
            "/dpo") == 0);
  CHECK(mlpo::read_text(s + "/dpo/policy.ckpt") ==
        mlpo::read_text(kDir / "run1/single/dpo/policy.ckpt"));
  CHECK(run("evaluate -c " + c + " --generated " + s + "/cand.fasta -a A -o " + s + "/eval") == 0);
  CHECK(fs::exists(s + "/eval/report.json"));

  // Exit codes.
  CHECK(run("") == 1);
  CHECK(run("sample -c " + c) == 1);
  CHECK(run("run-experiment -c " + (kDir / "missing.json").string()) == 1);
  auto bad = tiny_experiment(kDir / "bad");
  bad["sft"]["lr"] = 1.0;
  CHECK(run("run-experiment -c " + write_config("bad.json", bad).string()) == 1);
  CHECK(run("sample -c " + c + " --checkpoint " + s + "/sft/policy.ckpt -a C -n 2 -o " + s +
            "/x.fasta") == 1);
  mlpo::write_text(kDir / "corrupt.fasta", ">x\nMK1V\n");
  CHECK(run("score -c " + c + " --candidates " + (kDir / "corrupt.fasta").string() + " -o " + s +
            "/bad") == 2);
  mlpo::write_text(kDir / "corrupt.ckpt", "not a checkpoint");
  CHECK(run("sample -c " + c + " --checkpoint " + (kDir / "corrupt.ckpt").string() +
            " -a A -n 2 -o " + s + "/y.fasta") == 2);
  CHECK(run("--help") == 0);
}

#include "mlpo/records_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mlpo/error.hpp"

namespace mlpo {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

namespace {

template <class F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  }
}

json parse_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::map<std::string, double> number_map(const json& j) {
  return j.get<std::map<std::string, double>>();
}

FittedDistribution distribution_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "beta") return FittedDistribution::beta(j.at("a").get<double>(), j.at("b").get<double>());
  if (kind == "empirical") {
    return FittedDistribution::empirical(j.at("samples").get<std::vector<double>>());
  }
  throw DataError("unknown distribution kind '" + kind + "'");
}

// Reals as %.17g so every value reads back bit-identically; keys in a fixed
// order.
std::string real(double v) { return fmt::format("{:.17g}", v); }

std::string quoted(const std::string& s) { return json(s).dump(); }

std::string real_map(const std::map<std::string, double>& m) {
  std::string out = "{";
  for (const auto& [k, v] : m) {
    if (out.size() > 1) out += ',';
    out += quoted(k) + ':' + real(v);
  }
  return out + "}";
}

}  // namespace

void write_score_records(const std::vector<ScoreRecord>& records,
                         const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    out += fmt::format(R"({{"id":{},"energy":{},"gamma":{},"tau_raw":{},"tau":{}}})", quoted(r.id),
                       real(r.energy), real(r.gamma), real_map(r.tau_raw), real_map(r.tau));
    out += '\n';
  }
  write_text(path, out);
}

std::vector<ScoreRecord> read_score_records(const std::filesystem::path& path) {
  std::vector<ScoreRecord> out;
  for_each_json_line(path, [&](const json& j) {
    ScoreRecord r;
    r.id = j.at("id").get<std::string>();
    r.energy = j.at("energy").get<double>();
    r.gamma = j.at("gamma").get<double>();
    r.tau_raw = number_map(j.at("tau_raw"));
    r.tau = number_map(j.at("tau"));
    out.push_back(std::move(r));
  });
  return out;
}

void write_quality_scores(const std::vector<QualityScore>& scores,
                          const std::filesystem::path& path) {
  std::string out;
  for (const auto& q : scores) {
    out += fmt::format(R"({{"id":{},"g_gamma":{},"g_tau":{},"rho":{}}})", quoted(q.id),
                       real(q.g_gamma), real_map(q.g_tau), real(q.rho));
    out += '\n';
  }
  write_text(path, out);
}

std::vector<QualityScore> read_quality_scores(const std::filesystem::path& path) {
  std::vector<QualityScore> out;
  for_each_json_line(path, [&](const json& j) {
    out.push_back({j.at("id").get<std::string>(), j.at("g_gamma").get<double>(),
                   number_map(j.at("g_tau")), j.at("rho").get<double>()});
  });
  return out;
}

void write_pairs(const PreferenceDataset& pairs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : pairs.pairs) {
    out += fmt::format(R"({{"winner":{},"loser":{},"rho_w":{},"rho_l":{},"delta_rho":{}}})",
                       quoted(p.winner), quoted(p.loser), real(p.rho_w), real(p.rho_l),
                       real(p.delta_rho));
    out += '\n';
  }
  write_text(path, out);
  const json meta = {{"attributes", pairs.attributes},
                     {"pool_reference", pairs.pool_reference},
                     {"seed", pairs.seed},
                     {"max_pairs", pairs.max_pairs},
                     {"valid_pair_count", pairs.valid_pair_count},
                     {"pair_count", pairs.pairs.size()}};
  write_text(path.string() + ".meta.json", meta.dump(2) + "\n");
}

PreferenceDataset read_pairs(const std::filesystem::path& path) {
  PreferenceDataset d;
  for_each_json_line(path, [&](const json& j) {
    d.pairs.push_back({j.at("winner").get<std::string>(), j.at("loser").get<std::string>(),
                       j.at("rho_w").get<double>(), j.at("rho_l").get<double>(),
                       j.at("delta_rho").get<double>()});
  });
  const std::filesystem::path meta_path = path.string() + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    const json meta = parse_file(meta_path);
    try {
      d.attributes = meta.at("attributes").get<std::vector<std::string>>();
      d.pool_reference = meta.at("pool_reference").get<std::string>();
      d.seed = meta.at("seed").get<std::uint64_t>();
      d.max_pairs = meta.at("max_pairs").get<std::size_t>();
      d.valid_pair_count = meta.at("valid_pair_count").get<std::size_t>();
    } catch (const json::exception& e) {
      throw DataError(meta_path.string() + ": " + e.what());
    }
  }
  return d;
}

json to_json(const FittedDistribution& dist) {
  json j = {{"kind", to_string(dist.kind())},
            {"a", dist.a()},
            {"b", dist.b()},
            {"n", dist.count()},
            {"mean", dist.mean()},
            {"var", dist.variance()}};
  if (dist.kind() == FittedDistribution::Kind::empirical) j["samples"] = dist.sorted_samples();
  return j;
}

void write_distributions(const PoolDistributions& dists, const std::filesystem::path& path) {
  json tau = json::object();
  for (const auto& [name, d] : dists.tau) tau[name] = to_json(d);
  write_text(path, json{{"gamma", to_json(dists.gamma)}, {"tau", tau}}.dump(2) + "\n");
}

PoolDistributions read_distributions(const std::filesystem::path& path) {
  const json j = parse_file(path);
  try {
    PoolDistributions d{distribution_from_json(j.at("gamma")), {}};
    for (const auto& [name, v] : j.at("tau").items()) d.tau.emplace(name, distribution_from_json(v));
    return d;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json to_json(const DiversityReport& r) {
  return {{"inter_output", r.inter_output},
          {"inter_output_defined", r.inter_output_defined},
          {"training_set", r.training_set},
          {"ngram_order", r.ngram_order},
          {"generated_size", r.generated_size},
          {"training_size", r.training_size}};
}

json to_json(const PoolSummary& s) {
  return {{"size", s.size},
          {"mean_energy", s.mean_energy},
          {"mean_gamma", s.mean_gamma},
          {"median_gamma", s.median_gamma},
          {"mean_tau", s.mean_tau},
          {"median_tau", s.median_tau},
          {"mean_tau_raw", s.mean_tau_raw},
          {"mean_rho", s.mean_rho}};
}

json to_json(const QualityReport& r) {
  json j = {{"attributes", r.attributes},
            {"normalization", r.baseline ? "joint" : "pool"},
            {"pool", to_json(r.pool)}};
  if (r.baseline) j["baseline"] = to_json(*r.baseline);
  if (r.delta) j["delta"] = to_json(*r.delta);
  return j;
}

std::string to_csv(const QualityReport& r) {
  std::string out = "pool,size,mean_energy,mean_gamma,median_gamma,mean_rho";
  for (const auto& a : r.attributes) out += fmt::format(",mean_tau_{0},median_tau_{0}", a);
  out += '\n';
  auto row = [&](std::string_view name, const PoolSummary& s) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}", name, s.size, s.mean_energy,
                       s.mean_gamma, s.median_gamma, s.mean_rho);
    for (const auto& a : r.attributes) {
      out += fmt::format(",{:.17g},{:.17g}", s.mean_tau.at(a), s.median_tau.at(a));
    }
    out += '\n';
  };
  row("pool", r.pool);
  if (r.baseline) row("baseline", *r.baseline);
  if (r.delta) row("delta", *r.delta);
  return out;
}

}  // namespace mlpo

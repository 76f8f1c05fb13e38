#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mlpo/error.hpp"
#include "mlpo/policy.hpp"
#include "mlpo/rng.hpp"

namespace mlpo {

namespace {

constexpr char kMagic[8] = {'M', 'L', 'P', 'O', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in native order and assumes little-endian");

nlohmann::json model_to_json(const ModelConfig& c) {
  return {{"residue_count", c.residue_count}, {"width", c.width},
          {"layers", c.layers},               {"heads", c.heads},
          {"context", c.context},             {"mlp_hidden", c.mlp_hidden},
          {"prefix_length", c.prefix_length}, {"init_scale", c.init_scale},
          {"prefix_init_scale", c.prefix_init_scale}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.residue_count = j.at("residue_count").get<int>();
  c.width = j.at("width").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.context = j.at("context").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.prefix_length = j.at("prefix_length").get<int>();
  c.init_scale = j.at("init_scale").get<double>();
  c.prefix_init_scale = j.at("prefix_init_scale").get<double>();
  return c;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  const auto& layout = policy.layout();
  const auto& bank = policy.prefixes();

  std::string payload;
  const auto& trunk = policy.trunk();
  const auto& pv = bank.values();
  payload.resize((trunk.size() + pv.size()) * sizeof(double));
  std::memcpy(payload.data(), trunk.data(), trunk.size() * sizeof(double));
  std::memcpy(payload.data() + trunk.size() * sizeof(double), pv.data(), pv.size() * sizeof(double));

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : layout.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}, {"count", t.count}});
  }
  const auto& cfg = policy.config();
  for (std::size_t i = 0; i < bank.names().size(); ++i) {
    tensors.push_back({{"name", "prefix." + bank.names()[i]},
                       {"shape",
                        {static_cast<std::size_t>(cfg.layers), 2u,
                         static_cast<std::size_t>(cfg.prefix_length),
                         static_cast<std::size_t>(cfg.width)}},
                       {"offset", trunk.size() + i * bank.block_size()},
                       {"count", bank.block_size()}});
  }

  const nlohmann::json header = {
      {"format", "mlpo-checkpoint"},
      {"format_version", kCheckpointVersion},
      {"vocabulary",
       {{"residues", std::string(kAlphabet.substr(0, static_cast<std::size_t>(cfg.residue_count)))},
        {"eos", policy.vocab().eos()},
        {"bos", policy.vocab().bos()},
        {"pad", policy.vocab().pad()}}},
      {"model", model_to_json(cfg)},
      {"attributes", bank.names()},
      {"tensors", tensors},
      {"payload_doubles", trunk.size() + pv.size()},
      {"checksum_fnv1a", hex64(fnv1a(payload))},
  };
  const std::string head = header.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  put_u64(bytes, head.size());
  bytes += head;
  bytes += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Policy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  const std::string where = "checkpoint " + path.string() + ": ";

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(where + "bad magic or truncated header");
  }
  const std::uint64_t head_len = get_u64(bytes.data() + 8);
  if (head_len > bytes.size() - 16) throw DataError(where + "truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed header: " + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointVersion) {
    throw DataError(where + "unsupported format version " +
                    header.value("format_version", nlohmann::json()).dump() + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }

  try {
    const ModelConfig cfg = model_from_json(header.at("model"));
    const auto names = header.at("attributes").get<std::vector<std::string>>();
    const std::size_t n = header.at("payload_doubles").get<std::size_t>();
    const std::size_t payload_bytes = bytes.size() - 16 - head_len;
    if (payload_bytes != n * sizeof(double)) {
      throw DataError(where + "payload length " + std::to_string(payload_bytes) +
                      " bytes, expected " + std::to_string(n * sizeof(double)));
    }
    const std::string_view payload(bytes.data() + 16 + head_len, payload_bytes);
    if (hex64(fnv1a(payload)) != header.at("checksum_fnv1a").get<std::string>()) {
      throw DataError(where + "checksum mismatch");
    }

    TrunkLayout layout(cfg);
    PrefixBank bank(cfg, names);
    if (layout.total + bank.values().size() != n) {
      throw DataError(where + "parameter count does not match the model header");
    }
    std::vector<double> trunk(layout.total);
    std::memcpy(trunk.data(), payload.data(), trunk.size() * sizeof(double));
    std::memcpy(bank.values().data(), payload.data() + trunk.size() * sizeof(double),
                bank.values().size() * sizeof(double));
    return Policy(cfg, std::move(trunk), std::move(bank));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed header: " + e.what());
  }
}

}  // namespace mlpo

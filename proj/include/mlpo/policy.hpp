#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlpo/seqcore.hpp"

namespace mlpo {

/// Token ids: residues 0..R-1, then EOS, BOS, PAD. Next-token distributions
/// range over the R residues plus EOS. R is 20 except in exhaustive tests,
/// which shrink it so every short sequence can be enumerated.
class Vocabulary {
 public:
  explicit Vocabulary(int residue_count = kAlphabetSize);

  int residue_count() const { return residues_; }
  int eos() const { return residues_; }
  int bos() const { return residues_ + 1; }
  int pad() const { return residues_ + 2; }
  int size() const { return residues_ + 3; }
  int output_size() const { return residues_ + 1; }

  /// Residue letters map to their kAlphabet index; throws DataError for
  /// letters outside the first residue_count() alphabet entries.
  std::vector<int> encode(std::string_view residues) const;
  std::string decode(std::span<const int> tokens) const;
  std::string token_name(int id) const;

 private:
  int residues_;
};

struct ModelConfig {
  int residue_count = kAlphabetSize;
  int width = 64;
  int layers = 2;
  int heads = 4;
  int context = 512;
  int mlp_hidden = 256;
  int prefix_length = 8;
  double init_scale = 0.02;
  double prefix_init_scale = 0.5;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Offsets of every trunk tensor inside the flat parameter vector. Matrices
/// are row-major [in x out] and applied as y = x W.
struct TrunkLayout {
  struct Layer {
    std::size_t wq, wk, wv, wo, w1, b1, w2, b2;
  };

  explicit TrunkLayout(const ModelConfig& config);

  std::size_t tok_emb = 0;
  std::size_t pos_emb = 0;
  std::vector<Layer> layers;
  std::size_t w_out = 0;
  std::size_t b_out = 0;
  std::size_t total = 0;
  std::vector<TensorInfo> tensors;
};

/// Learned per-attribute conditioning: for every layer, m key rows and m value
/// rows in attention space, prepended to the attention context. Each
/// attribute owns a contiguous block laid out [layer][key|value][m][width].
class PrefixBank {
 public:
  PrefixBank() = default;
  PrefixBank(const ModelConfig& config, std::vector<std::string> names);

  std::size_t block_size() const { return block_; }
  int length() const { return length_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t index_of(std::string_view name) const;  // throws UsageError
  bool contains(std::string_view name) const;

  std::span<double> block(std::size_t i) { return {values_.data() + i * block_, block_}; }
  std::span<const double> block(std::size_t i) const {
    return {values_.data() + i * block_, block_};
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  int layers_ = 0;
  int width_ = 0;
  int length_ = 0;
  std::size_t block_ = 0;
  std::vector<std::string> names_;
  std::vector<double> values_;
};

/// A conditioning state: per-layer prefix keys and values of total length
/// K*m, laid out [layer][key|value][position][width].
struct Conditioning {
  std::vector<std::string> attributes;  // concatenation order
  int prefix_length = 0;                // m per attribute
  int layers = 0;
  int width = 0;
  std::vector<double> values;

  int length() const { return static_cast<int>(attributes.size()) * prefix_length; }
  const double* keys(int layer) const;
  const double* vals(int layer) const;
};

struct PrefixView {
  std::string attribute;
  std::span<const double> values;  // one PrefixBank block
};

/// P_multi = [P_1; ...; P_K] along the position axis, with attributes sorted
/// lexicographically so the result does not depend on call order.
Conditioning concat_prefixes(std::span<const PrefixView> prefixes, int prefix_length, int layers,
                             int width);

/// Trunk parameters plus the prefix bank.
class Policy {
 public:
  Policy(const ModelConfig& config, std::vector<std::string> attributes, std::uint64_t init_seed);
  Policy(const ModelConfig& config, std::vector<double> trunk, PrefixBank prefixes);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const TrunkLayout& layout() const { return layout_; }
  std::vector<double>& trunk() { return trunk_; }
  const std::vector<double>& trunk() const { return trunk_; }
  PrefixBank& prefixes() { return prefixes_; }
  const PrefixBank& prefixes() const { return prefixes_; }

  /// Conditioning for one or more attributes (concatenated when several).
  Conditioning conditioning(std::span<const std::string> attributes) const;
  Conditioning conditioning(const std::string& attribute) const;

  /// FNV-1a over the raw bytes of all parameters.
  std::uint64_t checksum() const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  TrunkLayout layout_;
  std::vector<double> trunk_;
  PrefixBank prefixes_;
};

/// Gradient buffers with the same layout as a Policy.
struct PolicyGradient {
  std::vector<double> trunk;
  std::vector<double> prefixes;

  explicit PolicyGradient(const Policy& policy)
      : trunk(policy.trunk().size(), 0.0), prefixes(policy.prefixes().values().size(), 0.0) {}
  void zero();
  PolicyGradient& operator+=(const PolicyGradient& other);
  double squared_norm() const;
};

/// log p(tokens | conditioning): the sum over residues of log p(a_i | a_<i)
/// plus log p(EOS | a) when `terminated`. Not length-normalized. Throws
/// UsageError when the sequence plus prefix exceeds the context.
double sequence_logprob(const Policy& policy, const Conditioning& cond,
                        std::span<const int> tokens, bool terminated = true);

/// Keeps the activations of one teacher-forced pass so the gradient can be
/// taken after the caller has seen the log-likelihood (preference losses
/// need the value to pick the scale).
class LogprobTape {
 public:
  LogprobTape(const Policy& policy, const Conditioning& cond, std::span<const int> tokens,
              bool terminated = true);
  ~LogprobTape();
  LogprobTape(LogprobTape&&) noexcept;
  LogprobTape& operator=(LogprobTape&&) noexcept;

  double value() const { return value_; }

  /// grad += scale * d(value)/d(parameters)
  void backward(double scale, PolicyGradient& grad) const;

 private:
  struct State;
  std::unique_ptr<State> state_;
  double value_ = 0.0;
};

/// Same value as sequence_logprob; additionally accumulates
/// scale * d(logprob)/d(parameters) into grad, routing conditioning gradients
/// to the prefix blocks of cond.attributes.
double sequence_logprob_backward(const Policy& policy, const Conditioning& cond,
                                 std::span<const int> tokens, bool terminated, double scale,
                                 PolicyGradient& grad);

double logprob(const Policy& policy, const Conditioning& cond, const ProteinSequence& seq);

/// Next-token distributions at every position of the teacher-forced pass:
/// row t is p(. | BOS, tokens[0..t)) for t = 0..tokens.size().
std::vector<std::vector<double>> next_token_distributions(const Policy& policy,
                                                          const Conditioning& cond,
                                                          std::span<const int> tokens);

/// Incremental decoder: feeds one token at a time and returns next-token
/// logits, reusing earlier keys and values.
class Decoder {
 public:
  Decoder(const Policy& policy, const Conditioning& cond);

  /// Feeds `token` at the next position and returns output logits.
  const std::vector<double>& feed(int token);
  int position() const { return position_; }

 private:
  const Policy& policy_;
  const Conditioning& cond_;
  int position_ = 0;
  std::vector<std::vector<double>> keys_;  // per layer: (M + position) x width
  std::vector<std::vector<double>> vals_;
  std::vector<double> logits_;
};

struct SampleOptions {
  std::size_t max_len = kDefaultMaxLength;
  double temperature = 1.0;
};

/// Ancestral sampling until EOS or max_len residues. Returns residue token ids
/// (possibly empty when EOS comes first). Deterministic given seed.
std::vector<int> sample_tokens(const Policy& policy, const Conditioning& cond,
                               const SampleOptions& options, std::uint64_t seed);

/// Probability that sample_tokens emits exactly `tokens` under a max_len cap:
/// EOS-terminated below the cap, cap-terminated (no EOS factor) at it.
double sampled_logprob(const Policy& policy, const Conditioning& cond, std::span<const int> tokens,
                       std::size_t max_len);

/// sample_tokens decoded to residue letters.
std::string sample(const Policy& policy, const Conditioning& cond, const SampleOptions& options,
                   std::uint64_t seed);

inline constexpr int kCheckpointVersion = 1;

/// Layout: 8-byte magic "MLPOCKPT", u64 little-endian header length, JSON
/// header (format version, vocabulary, hyperparameters, tensor table,
/// payload size, FNV-1a checksum), then the payload of little-endian doubles.
void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);

}  // namespace mlpo

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mlpo {

/// The 20 canonical amino acids, in the order used for token ids and oracle
/// tables.
inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr int kAlphabetSize = 20;
inline constexpr std::size_t kDefaultMaxLength = 400;

/// Index of a residue letter in kAlphabet, or -1.
int residue_index(char c);

bool is_valid_residues(std::string_view residues);

struct ProteinSequence {
  std::string id;
  std::string residues;

  std::size_t length() const { return residues.size(); }
  bool operator==(const ProteinSequence&) const = default;
};

/// Throws DataError unless id is a non-empty whitespace-free token and the
/// residues are a non-empty string over kAlphabet of at most max_length.
void validate(const ProteinSequence& seq, std::size_t max_length = kDefaultMaxLength);

/// Throws UsageError unless name is a non-empty whitespace-free token.
void validate_attribute_name(std::string_view name);

struct SequenceDataset {
  std::string attribute;
  std::vector<ProteinSequence> sequences;

  std::size_t size() const { return sequences.size(); }
};

/// Reads a FASTA file. Multi-line bodies are joined and lowercase residues
/// are upcased. Ids are the first whitespace-delimited header token and must
/// be unique within the file. Errors are DataError with the line number.
SequenceDataset parse_fasta(const std::filesystem::path& path, std::string attribute = {});

/// Parses FASTA text; `source` only labels error messages.
SequenceDataset parse_fasta_text(std::string_view text, std::string attribute = {},
                                 std::string_view source = "<memory>");

/// Canonical form: ">id\nRESIDUES\n" per record, no wrapping.
std::string format_fasta(const SequenceDataset& dataset);

void write_fasta(const SequenceDataset& dataset, const std::filesystem::path& path);

}  // namespace mlpo

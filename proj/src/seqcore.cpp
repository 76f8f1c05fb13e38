#include "mlpo/seqcore.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mlpo/error.hpp"

namespace mlpo {

namespace {

constexpr std::array<signed char, 256> make_index_table() {
  std::array<signed char, 256> table{};
  for (auto& v : table) v = -1;
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) {
    table[static_cast<unsigned char>(kAlphabet[i])] = static_cast<signed char>(i);
  }
  return table;
}

constexpr auto kIndexTable = make_index_table();

bool has_whitespace(std::string_view s) {
  for (unsigned char c : s) {
    if (std::isspace(c)) return true;
  }
  return false;
}

}  // namespace

int residue_index(char c) { return kIndexTable[static_cast<unsigned char>(c)]; }

bool is_valid_residues(std::string_view residues) {
  for (char c : residues) {
    if (residue_index(c) < 0) return false;
  }
  return true;
}

void validate(const ProteinSequence& seq, std::size_t max_length) {
  if (seq.id.empty() || has_whitespace(seq.id)) {
    throw DataError("invalid sequence id '" + seq.id + "'");
  }
  if (seq.residues.empty()) throw DataError("sequence '" + seq.id + "' is empty");
  if (seq.residues.size() > max_length) {
    throw DataError("sequence '" + seq.id + "' has length " + std::to_string(seq.residues.size()) +
                    " > maximum " + std::to_string(max_length));
  }
  for (std::size_t i = 0; i < seq.residues.size(); ++i) {
    if (residue_index(seq.residues[i]) < 0) {
      throw DataError("sequence '" + seq.id + "': invalid residue '" +
                      std::string(1, seq.residues[i]) + "' at position " + std::to_string(i + 1));
    }
  }
}

void validate_attribute_name(std::string_view name) {
  if (name.empty() || has_whitespace(name)) {
    throw UsageError("invalid attribute name '" + std::string(name) + "'");
  }
}

SequenceDataset parse_fasta_text(std::string_view text, std::string attribute,
                                 std::string_view source) {
  SequenceDataset out;
  out.attribute = std::move(attribute);
  std::unordered_set<std::string> seen;
  const std::string where(source);

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool in_record = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    if (line.front() == '>') {
      std::string_view header = line.substr(1);
      std::size_t start = 0;
      while (start < header.size() && std::isspace(static_cast<unsigned char>(header[start]))) {
        ++start;
      }
      if (start != 0 || header.empty()) {
        throw DataError(where + ":" + std::to_string(line_no) + ": malformed header");
      }
      std::size_t stop = start;
      while (stop < header.size() && !std::isspace(static_cast<unsigned char>(header[stop]))) {
        ++stop;
      }
      std::string id(header.substr(start, stop - start));
      if (!seen.insert(id).second) {
        throw DataError(where + ":" + std::to_string(line_no) + ": duplicate id '" + id + "'");
      }
      if (in_record && out.sequences.back().residues.empty()) {
        throw DataError(where + ":" + std::to_string(line_no) + ": record '" +
                        out.sequences.back().id + "' has no residues");
      }
      out.sequences.push_back({std::move(id), {}});
      in_record = true;
      continue;
    }

    if (!in_record) {
      throw DataError(where + ":" + std::to_string(line_no) + ": sequence data before first header");
    }
    auto& residues = out.sequences.back().residues;
    for (char c : line) {
      const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (residue_index(up) < 0) {
        throw DataError(where + ": invalid residue '" + std::string(1, c) + "' at line " +
                        std::to_string(line_no));
      }
      residues.push_back(up);
    }
  }

  if (out.sequences.empty()) throw DataError(where + ": empty FASTA input");
  if (out.sequences.back().residues.empty()) {
    throw DataError(where + ": record '" + out.sequences.back().id + "' has no residues");
  }
  return out;
}

SequenceDataset parse_fasta(const std::filesystem::path& path, std::string attribute) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open FASTA file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_fasta_text(buf.str(), std::move(attribute), path.string());
}

std::string format_fasta(const SequenceDataset& dataset) {
  if (dataset.sequences.empty()) throw DataError("refusing to write an empty dataset");
  std::unordered_set<std::string_view> seen;
  std::string out;
  for (const auto& seq : dataset.sequences) {
    validate(seq, seq.residues.size());
    if (!seen.insert(seq.id).second) throw DataError("duplicate id '" + seq.id + "'");
    out += '>';
    out += seq.id;
    out += '\n';
    out += seq.residues;
    out += '\n';
  }
  return out;
}

void write_fasta(const SequenceDataset& dataset, const std::filesystem::path& path) {
  const std::string text = format_fasta(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write FASTA file " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing FASTA file " + path.string());
}

}  // namespace mlpo

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evf {

enum class LabelValue { relevant, irrelevant, unknown };
enum class AnnotationValue { related_informative, related, irrelevant, not_sure };
enum class Split { train, test, none };

std::string_view to_string(LabelValue v);
std::string_view to_string(AnnotationValue v);
std::string_view to_string(Split v);
LabelValue parse_label(std::string_view s);
AnnotationValue parse_annotation(std::string_view s);
Split parse_split(std::string_view s);

// Class column used by every two-class score matrix: relevant = 0, irrelevant = 1.
inline int class_index(LabelValue v) { return v == LabelValue::relevant ? 0 : v == LabelValue::irrelevant ? 1 : -1; }
inline LabelValue class_label(int c) { return c == 0 ? LabelValue::relevant : LabelValue::irrelevant; }

struct SampleRecord {
  std::string id;
  std::string text;
  std::optional<std::string> image;  // path relative to the manifest directory
  LabelValue label_text = LabelValue::unknown;
  LabelValue label_image = LabelValue::unknown;
  LabelValue label_tweet = LabelValue::unknown;
  Split split = Split::none;
};

/// n x d single-precision embeddings aligned to an id list.
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<float> values;

  std::size_t rows() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

  // Throws DataError on shape mismatch, duplicate ids or non-finite values.
  void validate() const;
  // Maps id to row index.
  std::unordered_map<std::string, std::size_t> index() const;

  bool operator==(const EmbeddingMatrix&) const = default;
};

struct AlignReport {
  std::size_t dropped_from_manifest = 0;    // records without an embedding row
  std::size_t dropped_from_embeddings = 0;  // embedding rows without a record
};

/// Records and embeddings restricted to the shared ids, in manifest order.
struct AlignedDataset {
  std::vector<SampleRecord> records;
  EmbeddingMatrix embeddings;
  std::unordered_map<std::string, std::size_t> index;
  AlignReport report;

  std::size_t size() const noexcept { return records.size(); }
  std::vector<std::size_t> rows_in_split(Split s) const;
  std::vector<LabelValue> tweet_labels() const;
};

// Manifest: one JSON object per line.
std::vector<SampleRecord> parse_manifest(std::istream& in, const std::string& source = "<stream>");
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, std::span<const SampleRecord> records);
void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records);

// EVB1 binary embedding container.
EmbeddingMatrix read_embeddings(std::istream& in, const std::string& source = "<stream>");
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void write_embeddings(std::ostream& out, const EmbeddingMatrix& m);
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);

LabelValue aggregate_annotations(const std::array<AnnotationValue, 3>& votes);
LabelValue derive_tweet_relevance(LabelValue text, LabelValue image);

AlignedDataset align(std::vector<SampleRecord> records, const EmbeddingMatrix& embeddings);

}  // namespace evf

#include "evfilter/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "evfilter/error.hpp"

namespace evf {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table, const char* what) {
  for (const auto& [name, value] : table)
    if (name == s) return value;
  throw DataError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, LabelValue>, 3> kLabels{
    {{"relevant", LabelValue::relevant}, {"irrelevant", LabelValue::irrelevant}, {"unknown", LabelValue::unknown}}};
constexpr std::array<std::pair<std::string_view, AnnotationValue>, 4> kAnnotations{
    {{"related_informative", AnnotationValue::related_informative},
     {"related", AnnotationValue::related},
     {"irrelevant", AnnotationValue::irrelevant},
     {"not_sure", AnnotationValue::not_sure}}};
constexpr std::array<std::pair<std::string_view, Split>, 3> kSplits{
    {{"train", Split::train}, {"test", Split::test}, {"none", Split::none}}};

static_assert(std::endian::native == std::endian::little, "EVB1 I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'V', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get_le(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  return v;
}

LabelValue label_field(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return LabelValue::unknown;
  if (!it->is_string()) throw DataError("line " + std::to_string(line) + ": field '" + key + "' must be a string");
  try {
    return parse_label(it->get<std::string>());
  } catch (const DataError& e) {
    throw DataError("line " + std::to_string(line) + ": " + e.what());
  }
}

// Three raw annotator votes, aggregated when the modality label itself is absent.
std::optional<LabelValue> votes_field(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array() || it->size() != 3)
    throw DataError("line " + std::to_string(line) + ": field '" + key + "' must hold exactly three votes");
  std::array<AnnotationValue, 3> votes{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(*it)[i].is_string()) throw DataError("line " + std::to_string(line) + ": votes must be strings");
    try {
      votes[i] = parse_annotation((*it)[i].get<std::string>());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return aggregate_annotations(votes);
}

}  // namespace

std::string_view to_string(LabelValue v) {
  for (const auto& [name, value] : kLabels)
    if (value == v) return name;
  return "unknown";
}
std::string_view to_string(AnnotationValue v) {
  for (const auto& [name, value] : kAnnotations)
    if (value == v) return name;
  return "not_sure";
}
std::string_view to_string(Split v) {
  for (const auto& [name, value] : kSplits)
    if (value == v) return name;
  return "none";
}
LabelValue parse_label(std::string_view s) { return parse_enum(s, kLabels, "label"); }
AnnotationValue parse_annotation(std::string_view s) { return parse_enum(s, kAnnotations, "annotation"); }
Split parse_split(std::string_view s) { return parse_enum(s, kSplits, "split"); }

void EmbeddingMatrix::validate() const {
  if (dim == 0) throw DataError("embedding dimension must be positive");
  if (values.size() != ids.size() * dim) throw DataError("embedding payload does not match n x d");
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) throw DataError("duplicate embedding id '" + ids[i] + "'");
    for (float v : row(i))
      if (!std::isfinite(v)) throw DataError("non-finite embedding value in row " + std::to_string(i));
  }
}

std::unordered_map<std::string, std::size_t> EmbeddingMatrix::index() const {
  std::unordered_map<std::string, std::size_t> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
  return out;
}

std::vector<std::size_t> AlignedDataset::rows_in_split(Split s) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) rows.push_back(i);
  return rows;
}

std::vector<LabelValue> AlignedDataset::tweet_labels() const {
  std::vector<LabelValue> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label_tweet);
  return out;
}

std::vector<SampleRecord> parse_manifest(std::istream& in, const std::string& source) {
  std::vector<SampleRecord> records;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(source + ": line " + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    if (!obj.is_object()) throw DataError(source + ": line " + std::to_string(lineno) + ": record is not an object");

    const auto required = [&](const char* key) -> std::string {
      const auto it = obj.find(key);
      if (it == obj.end() || !it->is_string())
        throw DataError(source + ": line " + std::to_string(lineno) + ": missing required field '" + key + "'");
      return it->get<std::string>();
    };

    SampleRecord r;
    try {
      r.id = required("id");
      if (r.id.empty()) throw DataError(source + ": line " + std::to_string(lineno) + ": empty id");
      r.text = required("text");
      if (const auto it = obj.find("image"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError(source + ": line " + std::to_string(lineno) + ": image must be a string");
        r.image = it->get<std::string>();
      }
      r.label_text = label_field(obj, "label_text", lineno);
      r.label_image = label_field(obj, "label_image", lineno);
      if (r.label_text == LabelValue::unknown)
        if (auto v = votes_field(obj, "votes_text", lineno)) r.label_text = *v;
      if (r.label_image == LabelValue::unknown)
        if (auto v = votes_field(obj, "votes_image", lineno)) r.label_image = *v;

      const LabelValue derived = derive_tweet_relevance(r.label_text, r.label_image);
      if (obj.contains("label_tweet") && !obj["label_tweet"].is_null()) {
        r.label_tweet = label_field(obj, "label_tweet", lineno);
        if (r.label_text != LabelValue::unknown && r.label_image != LabelValue::unknown && r.label_tweet != derived)
          throw DataError(source + ": line " + std::to_string(lineno) +
                          ": label_tweet contradicts the text/image labels");
      } else {
        r.label_tweet = derived;
      }

      if (const auto it = obj.find("split"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError(source + ": line " + std::to_string(lineno) + ": split must be a string");
        r.split = parse_split(it->get<std::string>());
      }
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.rfind(source, 0) == 0) throw;
      throw DataError(source + ": " + msg);
    }

    if (const auto [it, inserted] = first_line.emplace(r.id, lineno); !inserted)
      throw DataError(source + ": line " + std::to_string(lineno) + ": duplicate id '" + r.id + "' (first seen on line " +
                      std::to_string(it->second) + ")");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

void write_manifest(std::ostream& out, std::span<const SampleRecord> records) {
  for (const auto& r : records) {
    nlohmann::ordered_json obj;
    obj["id"] = r.id;
    obj["text"] = r.text;
    if (r.image) obj["image"] = *r.image;
    obj["label_text"] = to_string(r.label_text);
    obj["label_image"] = to_string(r.label_image);
    obj["label_tweet"] = to_string(r.label_tweet);
    obj["split"] = to_string(r.split);
    out << obj.dump() << '\n';
  }
}

void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  write_manifest(out, records);
}

EmbeddingMatrix read_embeddings(std::istream& in, const std::string& source) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 4 + 4 + 8 + 8;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError(source + ": bad magic, expected EVB1");
  if (bytes.size() < kHeader) throw DataError(source + ": truncated header");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kVersion) throw DataError(source + ": unsupported EVB1 version " + std::to_string(version));
  const auto n = get_le<std::uint64_t>(bytes.data() + 8);
  const auto d = get_le<std::uint64_t>(bytes.data() + 16);
  if (d == 0) throw DataError(source + ": zero embedding dimension");
  if (n > (bytes.size() - kHeader) / sizeof(float) / d) throw DataError(source + ": truncated payload");

  EmbeddingMatrix m;
  m.dim = static_cast<std::size_t>(d);
  m.values.resize(static_cast<std::size_t>(n * d));
  const char* p = bytes.data() + kHeader;
  for (std::size_t i = 0; i < m.values.size(); ++i, p += 4) {
    const auto bits = get_le<std::uint32_t>(p);
    m.values[i] = std::bit_cast<float>(bits);
  }
  const char* end = bytes.data() + bytes.size();
  m.ids.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    if (end - p < 2) throw DataError(source + ": truncated id section at entry " + std::to_string(i));
    const auto len = get_le<std::uint16_t>(p);
    p += 2;
    if (end - p < len) throw DataError(source + ": truncated id section at entry " + std::to_string(i));
    m.ids.emplace_back(p, len);
    p += len;
  }
  if (p != end) throw DataError(source + ": " + std::to_string(end - p) + " trailing bytes after id section");

  for (std::size_t i = 0; i < m.rows(); ++i)
    for (float v : m.row(i))
      if (!std::isfinite(v)) throw DataError(source + ": non-finite value in row " + std::to_string(i));
  std::unordered_set<std::string_view> seen;
  for (const auto& id : m.ids)
    if (!seen.insert(id).second) throw DataError(source + ": duplicate id '" + id + "'");
  return m;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings " + path.string());
  return read_embeddings(in, path.string());
}

void write_embeddings(std::ostream& out, const EmbeddingMatrix& m) {
  m.validate();
  std::string buf;
  buf.reserve(24 + m.values.size() * 4);
  buf.append(kMagic, 4);
  put_le<std::uint32_t>(buf, kVersion);
  put_le<std::uint64_t>(buf, m.rows());
  put_le<std::uint64_t>(buf, m.dim);
  for (float v : m.values) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
  for (const auto& id : m.ids) {
    if (id.size() > 0xFFFF) throw DataError("id longer than 65535 bytes: " + id.substr(0, 32) + "...");
    put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(id.size()));
    buf.append(id);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings " + path.string());
  write_embeddings(out, m);
}

LabelValue aggregate_annotations(const std::array<AnnotationValue, 3>& votes) {
  int related = 0;
  for (auto v : votes) related += (v == AnnotationValue::related_informative || v == AnnotationValue::related);
  return related >= 2 ? LabelValue::relevant : LabelValue::irrelevant;
}

LabelValue derive_tweet_relevance(LabelValue text, LabelValue image) {
  if (text == LabelValue::relevant || image == LabelValue::relevant) return LabelValue::relevant;
  if (text == LabelValue::irrelevant && image == LabelValue::irrelevant) return LabelValue::irrelevant;
  return LabelValue::unknown;
}

AlignedDataset align(std::vector<SampleRecord> records, const EmbeddingMatrix& embeddings) {
  const auto emb_index = embeddings.index();
  AlignedDataset out;
  out.embeddings.dim = embeddings.dim;
  for (auto& r : records) {
    const auto it = emb_index.find(r.id);
    if (it == emb_index.end()) {
      ++out.report.dropped_from_manifest;
      continue;
    }
    const auto src = embeddings.row(it->second);
    out.embeddings.values.insert(out.embeddings.values.end(), src.begin(), src.end());
    out.embeddings.ids.push_back(r.id);
    out.index.emplace(r.id, out.records.size());
    out.records.push_back(std::move(r));
  }
  if (out.records.empty()) throw DataError("manifest and embeddings share no ids");
  out.report.dropped_from_embeddings = embeddings.rows() - out.records.size();
  return out;
}

}  // namespace evf

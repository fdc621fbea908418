#include "evfilter/fusion.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace evf {

namespace {
constexpr std::array<std::pair<std::string_view, FusionMode>, 4> kModes{{{"text_only", FusionMode::text_only},
                                                                         {"image_only", FusionMode::image_only},
                                                                         {"concat", FusionMode::concat},
                                                                         {"add", FusionMode::add}}};

std::vector<double> normalized_row(const EmbeddingMatrix& m, std::size_t i, const char* modality) {
  try {
    return l2_normalize(m.row(i));
  } catch (const DataError&) {
    throw DataError(std::string("zero ") + modality + " embedding in row " + std::to_string(i) + " (id '" + m.ids[i] +
                    "')");
  }
}
}  // namespace

std::string_view to_string(FusionMode m) {
  for (const auto& [name, value] : kModes)
    if (value == m) return name;
  return "concat";
}

FusionMode parse_fusion(std::string_view s) {
  for (const auto& [name, value] : kModes)
    if (name == s) return value;
  throw UsageError("unknown fusion mode '" + std::string(s) + "'");
}

EmbeddingMatrix fuse(const EmbeddingMatrix& text, const EmbeddingMatrix& image, FusionMode mode) {
  if (mode == FusionMode::text_only) return text;
  if (mode == FusionMode::image_only) return image;

  const auto text_index = text.index();
  for (const auto& id : image.ids)
    if (!text_index.contains(id)) throw DataError("misaligned ids: image row '" + id + "' has no text row");
  if (mode == FusionMode::add && text.dim != image.dim)
    throw DataError("add fusion needs equal dimensions (text " + std::to_string(text.dim) + ", image " +
                    std::to_string(image.dim) + ")");

  const auto image_index = image.index();
  EmbeddingMatrix out;
  out.ids = text.ids;
  out.dim = mode == FusionMode::concat ? text.dim + image.dim : text.dim;
  out.values.assign(out.rows() * out.dim, 0.0f);
  for (std::size_t i = 0; i < text.rows(); ++i) {
    const auto t = normalized_row(text, i, "text");
    auto dst = out.row(i);
    std::transform(t.begin(), t.end(), dst.begin(), [](double v) { return static_cast<float>(v); });
    const auto it = image_index.find(text.ids[i]);
    if (it == image_index.end()) continue;
    const auto im = normalized_row(image, it->second, "image");
    if (mode == FusionMode::concat) {
      std::transform(im.begin(), im.end(), dst.begin() + static_cast<std::ptrdiff_t>(text.dim),
                     [](double v) { return static_cast<float>(v); });
    } else {
      for (std::size_t j = 0; j < out.dim; ++j) dst[j] = static_cast<float>(t[j] + im[j]);
    }
  }
  return out;
}

SimilarityMatrix similarity_matrix(const EmbeddingMatrix& m, std::span<const std::size_t> rows) {
  const std::size_t n = rows.size();
  std::vector<std::vector<double>> unit(n);
  for (std::size_t a = 0; a < n; ++a) {
    try {
      unit[a] = l2_normalize(m.row(rows[a]));
    } catch (const DataError&) {
      throw DataError("zero embedding row " + std::to_string(rows[a]));
    }
  }
  SimilarityMatrix s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < m.dim; ++k) dot += unit[i][k] * unit[j][k];
      dot = std::clamp(dot, -1.0, 1.0);
      s(i, j) = dot;
      s(j, i) = dot;
    }
  }
  return s;
}

SimilarityMatrix similarity_matrix(const EmbeddingMatrix& m) {
  std::vector<std::size_t> rows(m.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return similarity_matrix(m, rows);
}

}  // namespace evf

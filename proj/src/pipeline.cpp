#include <fstream>
#include <json.hpp>
#include <sstream>

#include "evfilter/error.hpp"
#include "evfilter/graph.hpp"
#include "evfilter/metrics.hpp"
#include "evfilter/nn.hpp"
#include "evfilter/pipeline.hpp"

namespace evf {

namespace fs = std::filesystem;
using nlohmann::json;

ArtifactPaths::ArtifactPaths(const fs::path& r)
    : root(r),
      manifest(r / "manifest.jsonl"),
      text(r / "text.evb"),
      image(r / "image.evb"),
      fused(r / "fused.evb"),
      graph(r / "graph.txt"),
      graph_nodes(r / "graph_nodes.txt"),
      partition(r / "partition.txt"),
      scores(r / "scores.txt"),
      selection(r / "selection.txt"),
      model(r / "model.evm"),
      predictions(r / "predictions.tsv"),
      labels(r / "labels.json"),
      filtered(r / "filtered_ids.txt"),
      metrics(r / "metrics.json") {}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw DataError("missing artifact " + path.string() + " (produced by the '" + producer + "' command)");
}

namespace {

LabelValue label_for(const SampleRecord& r, FusionMode mode) {
  switch (mode) {
    case FusionMode::text_only: return r.label_text;
    case FusionMode::image_only: return r.label_image;
    default: return r.label_tweet;
  }
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

template <typename F>
auto in_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const UsageError& e) {
    throw UsageError(std::string(stage) + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

LoadedData load_data(const fs::path& manifest, const fs::path& embeddings, FusionMode mode) {
  LoadedData d;
  d.data = align(load_manifest(manifest), load_embeddings(embeddings));
  for (const auto& r : d.data.records) d.labels.push_back(label_for(r, mode));
  d.train_rows = d.data.rows_in_split(Split::train);
  d.test_rows = d.data.rows_in_split(Split::test);
  d.manifest_dir = manifest.parent_path();
  return d;
}

EmbeddingMatrix stage_fuse(const ArtifactPaths& paths, FusionMode mode) {
  require_artifact(paths.text, "synth");
  EmbeddingMatrix text = load_embeddings(paths.text);
  EmbeddingMatrix fused;
  if (mode == FusionMode::text_only) {
    fused = std::move(text);
  } else {
    require_artifact(paths.image, "synth");
    fused = fuse(text, load_embeddings(paths.image), mode);
  }
  ensure_parent(paths.fused);
  write_embeddings(paths.fused, fused);
  return fused;
}

SimilarityGraph stage_graph(const ArtifactPaths& paths, FusionMode mode, double epsilon) {
  require_artifact(paths.manifest, "synth");
  require_artifact(paths.fused, "fuse");
  const auto d = load_data(paths.manifest, paths.fused, mode);
  if (d.train_rows.empty()) throw DataError("manifest has no train split rows");
  auto g = build_epsilon_graph(similarity_matrix(d.data.embeddings, d.train_rows), epsilon);
  ensure_parent(paths.graph);
  write_edge_list(paths.graph, g);
  auto out = open_out(paths.graph_nodes);
  for (auto r : d.train_rows) out << d.data.records[r].id << '\n';
  return g;
}

std::vector<std::string> read_node_ids(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open node list " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ids.push_back(line);
  return ids;
}

namespace {

struct StoredGraph {
  SimilarityGraph graph;
  std::vector<std::string> ids;
};

StoredGraph load_graph(const ArtifactPaths& paths) {
  require_artifact(paths.graph, "graph");
  require_artifact(paths.graph_nodes, "graph");
  StoredGraph s{read_edge_list(paths.graph), read_node_ids(paths.graph_nodes)};
  if (s.ids.size() != s.graph.size())
    throw DataError(paths.graph_nodes.string() + " lists " + std::to_string(s.ids.size()) + " ids for a graph of " +
                    std::to_string(s.graph.size()) + " nodes");
  return s;
}

}  // namespace

Partition stage_cluster(const ArtifactPaths& paths, const LeidenConfig& config) {
  const auto s = load_graph(paths);
  auto p = leiden(s.graph, config);
  ensure_parent(paths.partition);
  write_partition(paths.partition, p, s.ids);
  return p;
}

CentralityScores stage_rank(const ArtifactPaths& paths, CentralityMeasure measure) {
  const auto s = load_graph(paths);
  auto scores = compute_centrality(s.graph, measure);
  ensure_parent(paths.scores);
  write_scores(paths.scores, scores, s.ids);
  return scores;
}

SelectionResult stage_select(const ArtifactPaths& paths, const SelectionConfig& config) {
  const auto s = load_graph(paths);
  require_artifact(paths.partition, "cluster");
  const auto p = read_partition(paths.partition, s.ids);
  auto r = select_representatives(s.graph, p, config);
  ensure_parent(paths.selection);
  write_selection(paths.selection, r, s.ids);
  return r;
}

std::vector<std::pair<std::string, LabelValue>> oracle_labels(const LoadedData& data, const SelectionResult& selection,
                                                              std::span<const std::string> node_ids) {
  std::vector<std::pair<std::string, LabelValue>> out;
  for (auto node : selection.nodes()) {
    const auto& id = node_ids[node];
    const auto it = data.data.index.find(id);
    if (it == data.data.index.end()) throw DataError("selected id '" + id + "' is not in the dataset");
    out.emplace_back(id, data.labels[it->second]);
  }
  return out;
}

std::unordered_map<std::string, std::string> read_label_store(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label store " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("labels") || !j["labels"].is_object())
    throw DataError(path.string() + ": expected an object with a 'labels' object");
  std::unordered_map<std::string, std::string> out;
  for (const auto& [id, v] : j["labels"].items()) {
    if (!v.is_string()) throw DataError(path.string() + ": label of '" + id + "' is not a string");
    const auto s = v.get<std::string>();
    if (s != "relevant" && s != "irrelevant" && s != "not_sure")
      throw DataError(path.string() + ": label of '" + id + "' must be relevant, irrelevant or not_sure");
    out.emplace(id, s);
  }
  return out;
}

void write_label_store(const fs::path& path, const std::unordered_map<std::string, std::string>& labels) {
  json j = json::object();
  j["labels"] = json::object();
  for (const auto& [id, v] : labels) j["labels"][id] = v;  // json objects keep keys sorted
  const fs::path tmp = path.string() + ".tmp";
  {
    auto out = open_out(tmp);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

PropagationSummary propagate(LoadedData& data, FewShotContext& ctx, std::span<const std::pair<std::string, LabelValue>> labels,
                             const ClassifierConfig& config, std::uint64_t seed) {
  std::vector<std::size_t> rows;
  std::vector<LabelValue> values;
  bool seen[2] = {false, false};
  for (const auto& [id, v] : labels) {
    if (v == LabelValue::unknown) continue;
    const auto it = data.data.index.find(id);
    if (it == data.data.index.end()) throw DataError("labelled id '" + id + "' is not in the dataset");
    rows.push_back(it->second);
    values.push_back(v);
    seen[class_index(v)] = true;
  }
  for (int c = 0; c < 2; ++c)
    if (!seen[c]) throw DataError("insufficient labels: no sample labelled " + std::string(to_string(class_label(c))));

  PropagationSummary s;
  s.predictions = fewshot_predict(ctx, rows, values, config, seed).predictions;
  for (auto p : s.predictions) (p == LabelValue::relevant ? s.predicted_relevant : s.predicted_irrelevant)++;
  std::vector<LabelValue> predicted, truth;
  bool present[2] = {false, false};
  for (auto r : data.test_rows) {
    if (data.labels[r] == LabelValue::unknown) continue;
    predicted.push_back(s.predictions[r]);
    truth.push_back(data.labels[r]);
    present[class_index(data.labels[r])] = true;
  }
  if (present[0] && present[1]) s.balanced_accuracy = balanced_accuracy(predicted, truth);
  return s;
}

void write_predictions(const fs::path& path, const AlignedDataset& data, std::span<const LabelValue> predictions) {
  auto out = open_out(path);
  out << "id\tlabel\n";
  for (std::size_t i = 0; i < data.size(); ++i) out << data.records[i].id << '\t' << to_string(predictions[i]) << '\n';
}

std::vector<std::pair<std::string, LabelValue>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "id\tlabel") throw DataError(path.string() + ": missing 'id<TAB>label' header");
  std::vector<std::pair<std::string, LabelValue>> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": line " + std::to_string(lineno) + ": expected id<TAB>label");
    try {
      out.emplace_back(line.substr(0, tab), parse_label(line.substr(tab + 1)));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_filtered_ids(const fs::path& path, const AlignedDataset& data, std::span<const LabelValue> predictions) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predictions[i] == LabelValue::relevant) out << data.records[i].id << '\n';
}

namespace {

std::vector<std::pair<std::string, LabelValue>> selection_labels(const ArtifactPaths& paths, const LoadedData& data,
                                                                 bool use_label_store) {
  const auto ids = read_node_ids(paths.graph_nodes);
  require_artifact(paths.selection, "select");
  const auto selection = read_selection(paths.selection, ids);
  if (!use_label_store) return oracle_labels(data, selection, ids);
  require_artifact(paths.labels, "serve");
  const auto store = read_label_store(paths.labels);
  std::vector<std::pair<std::string, LabelValue>> out;
  for (auto node : selection.nodes()) {
    const auto it = store.find(ids[node]);
    if (it == store.end() || it->second == "not_sure") continue;
    out.emplace_back(ids[node], parse_label(it->second));
  }
  return out;
}

}  // namespace

nn::TrainedModel stage_train(const ArtifactPaths& paths, const PipelineConfig& config, bool use_label_store) {
  if (config.classifier.kind == Classifier::lgc)
    throw UsageError("lgc has no trainable parameters; use 'predict --model lgc'");
  require_artifact(paths.manifest, "synth");
  require_artifact(paths.fused, "fuse");
  require_artifact(paths.graph_nodes, "graph");
  auto data = load_data(paths.manifest, paths.fused, config.fusion);
  const auto labels = selection_labels(paths, data, use_label_store);
  std::vector<std::size_t> rows;
  std::vector<LabelValue> values;
  for (const auto& [id, v] : labels) {
    rows.push_back(data.data.index.at(id));
    values.push_back(v);
  }
  FewShotContext ctx(data.data.embeddings, data.train_rows);
  auto model = fewshot_train(ctx, rows, values, config.classifier, config.seed);
  ensure_parent(paths.model);
  nn::write_checkpoint(paths.model, model);
  return model;
}

std::vector<LabelValue> stage_predict(const ArtifactPaths& paths, const PipelineConfig& config, bool use_label_store) {
  require_artifact(paths.manifest, "synth");
  require_artifact(paths.fused, "fuse");
  auto data = load_data(paths.manifest, paths.fused, config.fusion);
  FewShotContext ctx(data.data.embeddings, data.train_rows);
  std::vector<LabelValue> predictions;
  if (config.classifier.kind == Classifier::lgc) {
    require_artifact(paths.graph_nodes, "graph");
    const auto labels = selection_labels(paths, data, use_label_store);
    predictions = propagate(data, ctx, labels, config.classifier, config.seed).predictions;
  } else {
    require_artifact(paths.model, "train");
    const auto model = nn::read_checkpoint(paths.model);
    if (model.spec.input_dim != data.data.embeddings.dim)
      throw DataError("model input dimension " + std::to_string(model.spec.input_dim) + " does not match embeddings (" +
                      std::to_string(data.data.embeddings.dim) + ")");
    predictions = fewshot_infer(ctx, model, config.classifier);
  }
  write_predictions(paths.predictions, data.data, predictions);
  write_filtered_ids(paths.filtered, data.data, predictions);
  return predictions;
}

Evaluation stage_evaluate(const ArtifactPaths& paths, FusionMode mode) {
  require_artifact(paths.manifest, "synth");
  require_artifact(paths.predictions, "predict");
  const auto records = load_manifest(paths.manifest);
  std::unordered_map<std::string, LabelValue> predicted;
  for (auto& [id, v] : read_predictions(paths.predictions)) predicted.emplace(id, v);
  std::vector<LabelValue> p, t;
  for (const auto& r : records) {
    if (r.split != Split::test) continue;
    const auto truth = label_for(r, mode);
    const auto it = predicted.find(r.id);
    if (truth == LabelValue::unknown || it == predicted.end()) continue;
    p.push_back(it->second);
    t.push_back(truth);
  }
  if (t.empty()) throw DataError("no labelled test rows with predictions to evaluate");
  return {balanced_accuracy(p, t), t.size()};
}

PipelineResult pipeline_run(const ArtifactPaths& paths, const PipelineConfig& config, const LabelProvider& provider) {
  in_stage("fuse", [&] { return stage_fuse(paths, config.fusion); });
  in_stage("graph", [&] { return stage_graph(paths, config.fusion, config.epsilon); });
  LeidenConfig lc = config.leiden;
  lc.seed = config.seed;
  const auto partition = in_stage("cluster", [&] { return stage_cluster(paths, lc); });
  in_stage("rank", [&] { return stage_rank(paths, config.rank_measure); });
  SelectionConfig sc = config.selection;
  sc.seed = config.seed;
  const auto selection = in_stage("select", [&] { return stage_select(paths, sc); });

  auto data = in_stage("load", [&] { return load_data(paths.manifest, paths.fused, config.fusion); });
  const auto ids = read_node_ids(paths.graph_nodes);
  const auto labels = in_stage("label", [&] { return provider(data, selection, ids); });
  FewShotContext ctx(data.data.embeddings, data.train_rows);
  PipelineResult result;
  result.summary = in_stage("propagate", [&] { return propagate(data, ctx, labels, config.classifier, config.seed); });
  result.selected = selection.selected.size();
  result.communities = partition.community_count;

  in_stage("write", [&] {
    write_predictions(paths.predictions, data.data, result.summary.predictions);
    write_filtered_ids(paths.filtered, data.data, result.summary.predictions);
    json m = {{"balanced_accuracy", result.summary.balanced_accuracy ? json(*result.summary.balanced_accuracy) : json()},
              {"predicted_relevant", result.summary.predicted_relevant},
              {"predicted_irrelevant", result.summary.predicted_irrelevant},
              {"selected", result.selected},
              {"communities", result.communities}};
    auto out = open_out(paths.metrics);
    out << m.dump() << '\n';
    return 0;
  });
  return result;
}

}  // namespace evf

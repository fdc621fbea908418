#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>

#include "evfilter/error.hpp"
#include "evfilter/experiment.hpp"
#include "evfilter/graph.hpp"
#include "evfilter/metrics.hpp"

namespace evf {

ExperimentData synthetic_experiment_data(const SyntheticSpec& spec) {
  auto views = generate_synthetic_views(spec);
  return {std::move(views.records), std::move(views.text), std::move(views.image)};
}

ExperimentData load_experiment_data(const std::filesystem::path& manifest, const std::filesystem::path& text,
                                    const std::optional<std::filesystem::path>& image) {
  ExperimentData d;
  d.records = load_manifest(manifest);
  d.text = load_embeddings(text);
  if (image) d.image = load_embeddings(*image);
  return d;
}

void ExperimentConfig::validate() const {
  if (fusions.empty() || models.empty() || selections.empty()) throw UsageError("experiment grid has an empty axis");
  if (budgets.empty()) throw UsageError("experiment needs at least one budget");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] == 0) throw UsageError("budgets must be positive");
    if (i > 0 && budgets[i] <= budgets[i - 1]) throw UsageError("budgets must be strictly ascending");
  }
  if (repeats == 0) throw UsageError("repeats must be at least 1");
  if (!(epsilon >= -1.0 && epsilon <= 1.0)) throw UsageError("epsilon must be in [-1, 1]");
}

std::size_t ExperimentReport::failures() const {
  std::size_t n = 0;
  for (const auto& r : runs) n += !r.error.empty();
  return n;
}

namespace {

// Labels scored for a fusion: per-modality labels for single views, tweet labels otherwise.
LabelValue label_for(const SampleRecord& r, FusionMode mode) {
  switch (mode) {
    case FusionMode::text_only: return r.label_text;
    case FusionMode::image_only: return r.label_image;
    default: return r.label_tweet;
  }
}

struct FusionState {
  AlignedDataset data;
  std::vector<LabelValue> labels;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<LabelValue> test_truth;
  std::optional<SimilarityGraph> selection_graph;  // epsilon graph over the train split
  std::map<std::uint64_t, Partition> partitions;
  std::unique_ptr<FewShotContext> ctx;
};

std::unique_ptr<FusionState> prepare_fusion(const ExperimentData& d, FusionMode mode) {
  if (mode != FusionMode::text_only && !d.image)
    throw UsageError(std::string(to_string(mode)) + " fusion needs image embeddings");
  auto s = std::make_unique<FusionState>();
  const EmbeddingMatrix fused = mode == FusionMode::text_only ? d.text : fuse(d.text, *d.image, mode);
  s->data = align(d.records, fused);
  for (const auto& r : s->data.records) s->labels.push_back(label_for(r, mode));
  s->train_rows = s->data.rows_in_split(Split::train);
  s->test_rows = s->data.rows_in_split(Split::test);
  if (s->train_rows.empty()) throw DataError("dataset has no train split rows");
  if (s->test_rows.empty()) throw DataError("dataset has no test split rows");
  for (auto r : s->test_rows) s->test_truth.push_back(s->labels[r]);
  s->ctx = std::make_unique<FewShotContext>(s->data.embeddings, s->train_rows);
  return s;
}

const SimilarityGraph& selection_graph(FusionState& s, double epsilon) {
  if (!s.selection_graph)
    s.selection_graph = build_epsilon_graph(similarity_matrix(s.data.embeddings, s.train_rows), epsilon);
  return *s.selection_graph;
}

const Partition& partition_for(FusionState& s, const ExperimentConfig& config, std::uint64_t seed) {
  auto it = s.partitions.find(seed);
  if (it == s.partitions.end()) {
    LeidenConfig lc = config.leiden;
    lc.seed = seed;
    it = s.partitions.emplace(seed, leiden(selection_graph(s, config.epsilon), lc)).first;
  }
  return it->second;
}

double score_test(const FusionState& s, const std::vector<LabelValue>& predictions) {
  std::vector<LabelValue> predicted;
  for (auto r : s.test_rows) predicted.push_back(predictions[r]);
  return balanced_accuracy(predicted, s.test_truth);
}

ClassifierConfig classifier_for(const ExperimentConfig& config, Classifier model) {
  ClassifierConfig c = config.classifier;
  c.kind = model;
  return c;
}

double run_cell(FusionState& s, const ExperimentConfig& config, Classifier model, SelectionMethod method,
                std::size_t budget, std::uint64_t seed) {
  const auto& g = selection_graph(s, config.epsilon);
  if (budget > g.size())
    throw DataError("budget " + std::to_string(budget) + " exceeds the train split size " + std::to_string(g.size()));
  SelectionConfig sc;
  sc.budget = budget;
  sc.method = method;
  sc.seed = seed;
  sc.scope = config.scope;
  const auto selection = select_representatives(g, partition_for(s, config, seed), sc);
  std::vector<std::size_t> rows;
  std::vector<LabelValue> labels;
  for (auto node : selection.nodes()) {
    rows.push_back(s.train_rows[node]);
    labels.push_back(s.labels[s.train_rows[node]]);
  }
  const auto outcome = fewshot_predict(*s.ctx, rows, labels, classifier_for(config, model), seed);
  return score_test(s, outcome.predictions);
}

double run_full(FusionState& s, const ExperimentConfig& config, Classifier model, std::uint64_t seed) {
  std::vector<LabelValue> labels;
  for (auto r : s.train_rows) labels.push_back(s.labels[r]);
  const auto outcome = fewshot_predict(*s.ctx, s.train_rows, labels, classifier_for(config, model), seed, true);
  return score_test(s, outcome.predictions);
}

RunResult make_run(FusionMode fusion, Classifier model, std::string selection, std::string budget, std::uint64_t seed) {
  RunResult r;
  r.fusion = fusion;
  r.model = model;
  r.selection = std::move(selection);
  r.budget = std::move(budget);
  r.seed = seed;
  return r;
}

template <typename F>
RunResult timed(RunResult base, bool record_timing, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    base.balanced_accuracy = body();
  } catch (const std::exception& e) {
    base.balanced_accuracy = std::nan("");
    base.error = e.what();
  }
  if (record_timing)
    base.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return base;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentData& data, const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  for (auto fusion : config.fusions) {
    std::unique_ptr<FusionState> state;
    std::string fusion_error;
    try {
      state = prepare_fusion(data, fusion);
    } catch (const std::exception& e) {
      fusion_error = e.what();
    }
    for (auto model : config.models) {
      auto cell = [&](RunResult base, auto&& body) {
        if (!state) {
          base.balanced_accuracy = std::nan("");
          base.error = fusion_error;
          return base;
        }
        return timed(std::move(base), config.record_timing, body);
      };
      for (auto method : config.selections)
        for (auto budget : config.budgets)
          for (std::size_t rep = 0; rep < config.repeats; ++rep) {
            const std::uint64_t seed = config.base_seed + rep;
            report.runs.push_back(cell(make_run(fusion, model, std::string(to_string(method)), std::to_string(budget), seed),
                                       [&] { return run_cell(*state, config, model, method, budget, seed); }));
          }
      if (config.full_train_reference)
        report.runs.push_back(cell(make_run(fusion, model, "full", "ALL", config.base_seed),
                                   [&] { return run_full(*state, config, model, config.base_seed); }));
    }
  }
  report.aggregate = aggregate_runs(report.runs);
  return report;
}

RunResult full_train_reference(const ExperimentData& data, FusionMode fusion, Classifier model,
                               const ExperimentConfig& config) {
  auto state = prepare_fusion(data, fusion);
  RunResult r = make_run(fusion, model, "full", "ALL", config.base_seed);
  r.balanced_accuracy = run_full(*state, config, model, config.base_seed);
  return r;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<RunResult>& runs) {
  std::vector<AggregateRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& r : runs) {
    std::size_t k = 0;
    while (k < rows.size() && !(rows[k].fusion == r.fusion && rows[k].model == r.model &&
                                rows[k].selection == r.selection && rows[k].budget == r.budget))
      ++k;
    if (k == rows.size()) {
      rows.push_back({r.fusion, r.model, r.selection, r.budget});
      values.emplace_back();
    }
    if (r.error.empty()) values[k].push_back(r.balanced_accuracy);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& v = values[k];
    rows[k].count = v.size();
    if (v.empty()) {
      rows[k].mean = rows[k].std = std::nan("");
      continue;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[k].mean = mean;
    rows[k].std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return rows;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

// Error messages may hold commas or quotes; quote them CSV style.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void write_report(const std::filesystem::path& path, const std::vector<RunResult>& runs) {
  auto out = open_report(path);
  out << "fusion,model,selection,budget,seed,balanced_accuracy,elapsed_ms\n";
  for (const auto& r : runs)
    out << to_string(r.fusion) << ',' << to_string(r.model) << ',' << r.selection << ',' << r.budget << ',' << r.seed
        << ',' << format_number(r.balanced_accuracy) << ',' << format_number(std::round(r.elapsed_ms)) << '\n';
}

void write_aggregate(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  auto out = open_report(path);
  out << "fusion,model,selection,budget,mean,std\n";
  for (const auto& r : rows)
    out << to_string(r.fusion) << ',' << to_string(r.model) << ',' << r.selection << ',' << r.budget << ','
        << format_number(r.mean) << ',' << format_number(r.std) << '\n';
}

void write_errors(const std::filesystem::path& path, const std::vector<RunResult>& runs) {
  auto out = open_report(path);
  out << "fusion,model,selection,budget,seed,error\n";
  for (const auto& r : runs)
    if (!r.error.empty())
      out << to_string(r.fusion) << ',' << to_string(r.model) << ',' << r.selection << ',' << r.budget << ','
          << r.seed << ',' << csv_field(r.error) << '\n';
}

}  // namespace evf

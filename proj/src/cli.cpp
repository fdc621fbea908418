#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <json.hpp>
#include <ostream>
#include <thread>

#include "evfilter/cli.hpp"
#include "evfilter/error.hpp"
#include "evfilter/experiment.hpp"
#include "evfilter/labeling_service.hpp"
#include "evfilter/pipeline.hpp"
#include "evfilter/synthetic.hpp"

namespace evf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

// Flag values shared by the subcommands; only one subcommand runs per call.
struct Options {
  std::string out;
  bool verbose = false;

  std::string manifest, text, image, fused;
  std::string fusion = "concat";
  std::uint64_t seed = 0;

  double epsilon = 0.85;
  double resolution = 1.0;
  std::size_t max_passes = 10;
  double randomness = 0.01;

  std::string measure = "betweenness";
  std::string method = "betweenness";
  std::size_t budget = 60;
  std::string scope = "community";

  std::string model = "nsage_lin";
  std::size_t k = 10;
  std::size_t infer_k = 16;
  std::size_t epochs = 1000;
  double lr = 1e-5;
  double wd = 1e-3;
  double alpha = 0.99;
  std::vector<std::size_t> hidden;
  std::string precision = "single";
  std::string val_metric = "balanced_accuracy";
  std::string labels = "oracle";

  SyntheticSpec synth;
  bool synthetic = false;

  std::vector<std::string> fusions{"concat"};
  std::vector<std::string> models{"nsage_lin"};
  std::vector<std::string> methods{"random", "betweenness", "pagerank", "mci"};
  std::vector<std::size_t> budgets{30, 60, 90, 120, 210};
  std::size_t repeats = 10;
  bool no_full = false;
  bool timing = false;
  std::string report = "report.csv";
  std::string aggregate = "aggregate.csv";
  std::string errors = "errors.csv";

  std::string host = "127.0.0.1";
  int port = 8765;
  std::string ui_dir;
  std::string config;
};

CentralityScope scope_from(const std::string& s) {
  if (s == "community") return CentralityScope::community_subgraph;
  if (s == "global") return CentralityScope::global;
  throw UsageError("unknown scope '" + s + "' (expected community or global)");
}

nn::ValidationMetric metric_from(const std::string& s) {
  if (s == "balanced_accuracy") return nn::ValidationMetric::balanced_accuracy;
  if (s == "accuracy") return nn::ValidationMetric::accuracy;
  throw UsageError("unknown validation metric '" + s + "' (expected balanced_accuracy or accuracy)");
}

void add_inputs(CLI::App* c, Options& o) {
  c->add_option("--manifest", o.manifest, "Manifest (default <out>/manifest.jsonl)");
  c->add_option("--text", o.text, "Text embeddings (default <out>/text.evb)");
  c->add_option("--image", o.image, "Image embeddings (default <out>/image.evb)");
}

void add_fusion(CLI::App* c, Options& o) {
  c->add_option("--fusion", o.fusion, "concat, add, text_only or image_only")->capture_default_str();
}

void add_seed(CLI::App* c, Options& o) { c->add_option("--seed", o.seed, "Random seed")->capture_default_str(); }

void add_leiden(CLI::App* c, Options& o) {
  c->add_option("--resolution", o.resolution, "Modularity resolution")->capture_default_str();
  c->add_option("--max-passes", o.max_passes, "Leiden pass limit")->capture_default_str();
  c->add_option("--randomness", o.randomness, "Refinement temperature")->capture_default_str();
}

void add_selection(CLI::App* c, Options& o) {
  c->add_option("--method", o.method, "random, betweenness, pagerank or mci")->capture_default_str();
  c->add_option("--budget", o.budget, "Number of samples to select")->capture_default_str();
  c->add_option("--scope", o.scope, "Centrality scope: community or global")->capture_default_str();
}

void add_classifier(CLI::App* c, Options& o) {
  c->add_option("--model", o.model, "lgc, mlpc, ngcn_lin or nsage_lin")->capture_default_str();
  c->add_option("--k", o.k, "KNN k of the training graph")->capture_default_str();
  c->add_option("--infer-k", o.infer_k, "KNN k of the inference graph")->capture_default_str();
  c->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  c->add_option("--lr", o.lr, "AdamW learning rate (mlpc defaults to 1e-3)");
  c->add_option("--wd", o.wd, "AdamW weight decay")->capture_default_str();
  c->add_option("--alpha", o.alpha, "LGC alpha")->capture_default_str();
  c->add_option("--hidden", o.hidden, "Hidden widths")->delimiter(',');
  c->add_option("--precision", o.precision, "single or double")->capture_default_str();
  c->add_option("--val-metric", o.val_metric, "balanced_accuracy or accuracy")->capture_default_str();
}

void add_synth(CLI::App* c, Options& o) {
  c->add_option("--n", o.synth.n, "Number of samples")->capture_default_str();
  c->add_option("--dim", o.synth.dim, "Embedding dimension")->capture_default_str();
  c->add_option("--separation", o.synth.separation, "Class-mean distance in noise units")->capture_default_str();
  c->add_option("--noise", o.synth.noise, "Per-coordinate noise")->capture_default_str();
  c->add_option("--relevant-fraction", o.synth.relevant_fraction, "Share of relevant samples")->capture_default_str();
  c->add_option("--test-fraction", o.synth.test_fraction, "Share of each class in the test split")
      ->capture_default_str();
}

ArtifactPaths paths_for(const Options& o) {
  ArtifactPaths p(o.out);
  if (!o.manifest.empty()) p.manifest = o.manifest;
  if (!o.text.empty()) p.text = o.text;
  if (!o.image.empty()) p.image = o.image;
  return p;
}

ClassifierConfig classifier_config(const Options& o, bool lr_given) {
  ClassifierConfig c;
  c.kind = parse_classifier(o.model);
  c.train_k = o.k;
  c.infer_k = o.infer_k;
  c.train.epochs = o.epochs;
  c.train.optimizer.weight_decay = o.wd;
  if (lr_given) {
    c.train.optimizer.lr = o.lr;
    c.mlpc_lr = o.lr;
  }
  c.train.precision = nn::parse_precision(o.precision);
  c.train.metric = metric_from(o.val_metric);
  c.hidden = o.hidden;
  c.lgc.alpha = o.alpha;
  if (c.train_k == 0 || c.infer_k == 0) throw UsageError("--k and --infer-k must be positive");
  if (c.train.epochs == 0) throw UsageError("--epochs must be positive");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  return c;
}

LeidenConfig leiden_config(const Options& o) {
  LeidenConfig c;
  c.resolution = o.resolution;
  c.max_passes = o.max_passes;
  c.randomness = o.randomness;
  c.seed = o.seed;
  if (!(c.resolution > 0.0)) throw UsageError("--resolution must be positive");
  if (!(c.randomness > 0.0)) throw UsageError("--randomness must be positive");
  return c;
}

SelectionConfig selection_config(const Options& o) {
  SelectionConfig c;
  c.method = parse_selection(o.method);
  c.budget = o.budget;
  c.scope = scope_from(o.scope);
  c.seed = o.seed;
  if (c.budget == 0) throw UsageError("--budget must be positive");
  return c;
}

PipelineConfig pipeline_config(const Options& o, bool lr_given) {
  PipelineConfig c;
  c.fusion = parse_fusion(o.fusion);
  c.epsilon = o.epsilon;
  c.leiden = leiden_config(o);
  c.selection = selection_config(o);
  c.classifier = classifier_config(o, lr_given);
  c.seed = o.seed;
  return c;
}

bool use_store(const Options& o) {
  if (o.labels == "oracle") return false;
  if (o.labels == "store") return true;
  throw UsageError("--labels must be oracle or store, got '" + o.labels + "'");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(); }

fs::path under_out(const Options& o, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(o.out) / path;
}

struct Logger {
  std::ostream& err;
  bool enabled;
  void operator()(const std::string& msg) const {
    if (enabled) err << "evfilter: " << msg << '\n';
  }
};

std::function<std::optional<fs::path>(const std::string&)> media_lookup(const LoadedData& data) {
  return [&data](const std::string& id) -> std::optional<fs::path> {
    const auto it = data.data.index.find(id);
    if (it == data.data.index.end()) return std::nullopt;
    const auto& image = data.data.records[it->second].image;
    if (!image) return std::nullopt;
    const fs::path p(*image);
    return p.is_absolute() ? p : data.manifest_dir / p;
  };
}

class SignalScope {
 public:
  SignalScope() {
    g_interrupted = false;
    prev_int_ = std::signal(SIGINT, on_signal);
    prev_term_ = std::signal(SIGTERM, on_signal);
  }
  ~SignalScope() {
    std::signal(SIGINT, prev_int_);
    std::signal(SIGTERM, prev_term_);
  }

 private:
  void (*prev_int_)(int);
  void (*prev_term_)(int);
};

int dispatch(CLI::App& app, Options& o, std::ostream& out, std::ostream& err) {
  const Logger log{err, o.verbose};
  const auto paths = paths_for(o);
  auto emit = [&](json j) { out << j.dump() << '\n' << std::flush; };
  auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  const bool lr_given = sub->get_option_no_throw("--lr") && sub->get_option("--lr")->count() > 0;

  if (name == "synth") {
    o.synth.seed = o.seed;
    o.synth.validate();
    const auto views = generate_synthetic_views(o.synth);
    fs::create_directories(o.out);
    write_manifest(paths.manifest, views.records);
    write_embeddings(paths.text, views.text);
    write_embeddings(paths.image, views.image);
    std::size_t relevant = 0;
    for (const auto& r : views.records) relevant += r.label_tweet == LabelValue::relevant;
    emit({{"command", "synth"},
          {"samples", views.records.size()},
          {"relevant", relevant},
          {"dim", o.synth.dim},
          {"manifest", paths.manifest.string()},
          {"text", paths.text.string()},
          {"image", paths.image.string()}});
    return 0;
  }
  if (name == "fuse") {
    const auto fused = stage_fuse(paths, parse_fusion(o.fusion));
    emit({{"command", "fuse"}, {"rows", fused.rows()}, {"dim", fused.dim}, {"fused", paths.fused.string()}});
    return 0;
  }
  if (name == "graph") {
    const auto g = stage_graph(paths, parse_fusion(o.fusion), o.epsilon);
    emit({{"command", "graph"}, {"nodes", g.size()}, {"edges", g.edge_count()}, {"graph", paths.graph.string()}});
    return 0;
  }
  if (name == "cluster") {
    const auto p = stage_cluster(paths, leiden_config(o));
    emit({{"command", "cluster"},
          {"communities", p.community_count},
          {"modularity", p.modularity},
          {"partition", paths.partition.string()}});
    return 0;
  }
  if (name == "rank") {
    const auto s = stage_rank(paths, parse_centrality(o.measure));
    emit({{"command", "rank"}, {"measure", o.measure}, {"nodes", s.scores.size()}, {"scores", paths.scores.string()}});
    return 0;
  }
  if (name == "select") {
    const auto r = stage_select(paths, selection_config(o));
    emit({{"command", "select"},
          {"method", std::string(to_string(r.method))},
          {"selected", r.selected.size()},
          {"selection", paths.selection.string()}});
    return 0;
  }
  if (name == "train") {
    const auto cfg = pipeline_config(o, lr_given);
    log("training " + o.model);
    const auto m = stage_train(paths, cfg, use_store(o));
    emit({{"command", "train"},
          {"model", o.model},
          {"best_epoch", m.best_epoch},
          {"best_validation_score", m.log.empty() ? json() : json(m.log[m.best_epoch].validation_score)},
          {"checkpoint", paths.model.string()}});
    return 0;
  }
  if (name == "predict") {
    const auto predictions = stage_predict(paths, pipeline_config(o, lr_given), use_store(o));
    std::size_t relevant = 0;
    for (auto v : predictions) relevant += v == LabelValue::relevant;
    emit({{"command", "predict"},
          {"predicted_relevant", relevant},
          {"predicted_irrelevant", predictions.size() - relevant},
          {"predictions", paths.predictions.string()},
          {"filtered", paths.filtered.string()}});
    return 0;
  }
  if (name == "evaluate") {
    const auto e = stage_evaluate(paths, parse_fusion(o.fusion));
    emit({{"command", "evaluate"}, {"balanced_accuracy", e.balanced_accuracy}, {"evaluated", e.evaluated}});
    return 0;
  }
  if (name == "experiment") {
    ExperimentConfig cfg;
    cfg.fusions.clear();
    for (const auto& f : o.fusions) cfg.fusions.push_back(parse_fusion(f));
    cfg.models.clear();
    for (const auto& m : o.models) cfg.models.push_back(parse_classifier(m));
    cfg.selections.clear();
    for (const auto& m : o.methods) cfg.selections.push_back(parse_selection(m));
    cfg.budgets = o.budgets;
    cfg.repeats = o.repeats;
    cfg.base_seed = o.seed;
    cfg.full_train_reference = !o.no_full;
    cfg.record_timing = o.timing;
    cfg.epsilon = o.epsilon;
    cfg.leiden = leiden_config(o);
    cfg.scope = scope_from(o.scope);
    cfg.classifier = classifier_config(o, lr_given);
    cfg.validate();

    ExperimentData data;
    if (o.synthetic) {
      o.synth.validate();
      data = synthetic_experiment_data(o.synth);
    } else {
      require_artifact(paths.manifest, "synth");
      require_artifact(paths.text, "synth");
      std::optional<fs::path> image;
      if (fs::exists(paths.image)) image = paths.image;
      data = load_experiment_data(paths.manifest, paths.text, image);
    }
    log("running " + std::to_string(cfg.fusions.size() * cfg.models.size() * cfg.selections.size() *
                                    cfg.budgets.size() * cfg.repeats) +
        " grid cells");
    const auto report = run_experiment(data, cfg);
    const auto report_path = under_out(o, o.report), aggregate_path = under_out(o, o.aggregate),
               errors_path = under_out(o, o.errors);
    write_report(report_path, report.runs);
    write_aggregate(aggregate_path, report.aggregate);
    write_errors(errors_path, report.runs);
    emit({{"command", "experiment"},
          {"runs", report.runs.size()},
          {"failures", report.failures()},
          {"report", report_path.string()},
          {"aggregate", aggregate_path.string()},
          {"errors", errors_path.string()}});
    return 0;
  }
  if (name == "serve") {
    const auto cfg = pipeline_config(o, lr_given);
    require_artifact(paths.manifest, "synth");
    require_artifact(paths.fused, "fuse");
    require_artifact(paths.graph_nodes, "graph");
    require_artifact(paths.selection, "select");
    auto data = load_data(paths.manifest, paths.fused, cfg.fusion);
    const auto ids = read_node_ids(paths.graph_nodes);
    const auto selection = read_selection(paths.selection, ids);
    FewShotContext ctx(data.data.embeddings, data.train_rows);
    LabelingSession session(tasks_from_selection(data, selection, ids), paths.labels, [&](const auto& labels) {
      log("propagating " + std::to_string(labels.size()) + " labels");
      auto summary = propagate(data, ctx, labels, cfg.classifier, cfg.seed);
      write_predictions(paths.predictions, data.data, summary.predictions);
      write_filtered_ids(paths.filtered, data.data, summary.predictions);
      return summary;
    });
    ServiceOptions so;
    so.host = o.host;
    so.port = o.port;
    so.ui_dir = o.ui_dir;
    so.media = media_lookup(data);
    SignalScope signals;
    LabelingServer server(session, so);
    const int port = server.start();
    const auto st = session.status();
    emit({{"command", "serve"},
          {"url", "http://" + o.host + ":" + std::to_string(port) + "/"},
          {"port", port},
          {"selected", st.selected},
          {"remaining", st.remaining}});
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
  }
  if (name == "run") {
    const auto cfg = pipeline_config(o, lr_given);
    LabelProvider provider;
    if (o.labels == "oracle") {
      provider = oracle_labels;
    } else if (o.labels == "interactive") {
      provider = [&](const LoadedData& data, const SelectionResult& selection, std::span<const std::string> ids) {
        LabelingSession session(tasks_from_selection(data, selection, ids), paths.labels, [](const auto&) -> PropagationSummary {
          throw UsageError("propagation runs after labeling completes in 'run --labels interactive'");
        });
        ServiceOptions so;
        so.host = o.host;
        so.port = o.port;
        so.ui_dir = o.ui_dir;
        so.media = media_lookup(data);
        SignalScope signals;
        LabelingServer server(session, so);
        const int port = server.start();
        err << "evfilter: label " << session.status().remaining << " samples at http://" << o.host << ':' << port
            << "/\n"
            << std::flush;
        session.wait_until_complete(&g_interrupted);
        server.stop();
        if (!session.complete()) throw DataError("interrupted before every selected sample was labelled");
        const auto store = read_label_store(paths.labels);
        std::vector<std::pair<std::string, LabelValue>> labels;
        for (auto node : selection.nodes()) {
          const auto it = store.find(ids[node]);
          if (it != store.end() && it->second != "not_sure") labels.emplace_back(ids[node], parse_label(it->second));
        }
        return labels;
      };
    } else {
      throw UsageError("--labels must be oracle or interactive, got '" + o.labels + "'");
    }
    log("running the pipeline");
    const auto r = pipeline_run(paths, cfg, provider);
    emit({{"command", "run"},
          {"balanced_accuracy", optional_number(r.summary.balanced_accuracy)},
          {"predicted_relevant", r.summary.predicted_relevant},
          {"predicted_irrelevant", r.summary.predicted_irrelevant},
          {"selected", r.selected},
          {"communities", r.communities},
          {"metrics", paths.metrics.string()}});
    return 0;
  }
  throw UsageError("unknown subcommand '" + name + "'");
}

void build_app(CLI::App& app, Options& o) {
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--out", o.out, "Artifact root (default $EVFILTER_DATA_DIR, else .)");
  app.add_flag("-v,--verbose", o.verbose, "Progress messages on stderr");

  auto* synth = app.add_subcommand("synth", "Write a synthetic two-blob dataset");
  add_synth(synth, o);
  add_seed(synth, o);

  auto* fuse = app.add_subcommand("fuse", "Fuse the text and image embeddings");
  add_inputs(fuse, o);
  add_fusion(fuse, o);

  auto* graph = app.add_subcommand("graph", "Epsilon graph over the train split");
  add_inputs(graph, o);
  add_fusion(graph, o);
  graph->add_option("--epsilon", o.epsilon, "Cosine similarity threshold")->capture_default_str();

  auto* cluster = app.add_subcommand("cluster", "Leiden communities of the graph");
  add_leiden(cluster, o);
  add_seed(cluster, o);

  auto* rank = app.add_subcommand("rank", "Centrality scores of every graph node");
  rank->add_option("--measure", o.measure,
                   "degree, betweenness, closeness, pagerank, eigenvector, structural_holes or mci")
      ->capture_default_str();

  auto* select = app.add_subcommand("select", "Representative samples to label");
  add_selection(select, o);
  add_seed(select, o);

  auto* train = app.add_subcommand("train", "Train a classifier on the selected labels");
  add_inputs(train, o);
  add_fusion(train, o);
  add_classifier(train, o);
  add_seed(train, o);
  train->add_option("--labels", o.labels, "oracle (manifest) or store (labeling service)")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Predict every sample");
  add_inputs(predict, o);
  add_fusion(predict, o);
  add_classifier(predict, o);
  add_seed(predict, o);
  predict->add_option("--labels", o.labels, "oracle (manifest) or store (labeling service)")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Balanced accuracy of the predictions on the test split");
  add_inputs(evaluate, o);
  add_fusion(evaluate, o);

  auto* experiment = app.add_subcommand("experiment", "Run the selection x budget x seed grid");
  experiment->add_option("--config", o.config, "Experiment config file (TOML/INI)");
  add_inputs(experiment, o);
  add_synth(experiment, o);
  experiment->add_flag("--synthetic", o.synthetic, "Generate the dataset instead of reading files");
  experiment->add_option("--data-seed", o.synth.seed, "Seed of the synthetic dataset")->capture_default_str();
  experiment->add_option("--fusion", o.fusions, "Fusion modes")->delimiter(',')->capture_default_str();
  experiment->add_option("--model", o.models, "Models")->delimiter(',')->capture_default_str();
  experiment->add_option("--method", o.methods, "Selection methods")->delimiter(',')->capture_default_str();
  experiment->add_option("--budget", o.budgets, "Budgets, ascending")->delimiter(',')->capture_default_str();
  experiment->add_option("--repeats", o.repeats, "Seeds per cell")->capture_default_str();
  experiment->add_option("--seed", o.seed, "Base seed")->capture_default_str();
  experiment->add_option("--epsilon", o.epsilon, "Cosine similarity threshold")->capture_default_str();
  experiment->add_option("--scope", o.scope, "Centrality scope: community or global")->capture_default_str();
  add_leiden(experiment, o);
  experiment->add_option("--k", o.k, "KNN k of the training graph")->capture_default_str();
  experiment->add_option("--infer-k", o.infer_k, "KNN k of the inference graph")->capture_default_str();
  experiment->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  experiment->add_option("--lr", o.lr, "AdamW learning rate (mlpc defaults to 1e-3)");
  experiment->add_option("--wd", o.wd, "AdamW weight decay")->capture_default_str();
  experiment->add_option("--alpha", o.alpha, "LGC alpha")->capture_default_str();
  experiment->add_option("--hidden", o.hidden, "Hidden widths")->delimiter(',');
  experiment->add_option("--precision", o.precision, "single or double")->capture_default_str();
  experiment->add_option("--val-metric", o.val_metric, "balanced_accuracy or accuracy")->capture_default_str();
  experiment->add_flag("--no-full", o.no_full, "Skip the full-train reference rows");
  experiment->add_flag("--timing", o.timing, "Record elapsed_ms (reports are then not byte-stable)");
  experiment->add_option("--report", o.report, "Per-run report, relative to --out")->capture_default_str();
  experiment->add_option("--aggregate", o.aggregate, "Aggregate table, relative to --out")->capture_default_str();
  experiment->add_option("--errors", o.errors, "Failed cells, relative to --out")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Serve the selection for labeling");
  add_fusion(serve, o);
  add_classifier(serve, o);
  add_seed(serve, o);
  add_inputs(serve, o);
  serve->add_option("--host", o.host, "Bind address")->capture_default_str();
  serve->add_option("--port", o.port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--ui-dir", o.ui_dir, "Static UI bundle");

  auto* run = app.add_subcommand("run", "Whole pipeline from embeddings to filtered ids");
  add_inputs(run, o);
  add_fusion(run, o);
  run->add_option("--epsilon", o.epsilon, "Cosine similarity threshold")->capture_default_str();
  add_leiden(run, o);
  add_selection(run, o);
  add_classifier(run, o);
  add_seed(run, o);
  run->add_option("--labels", o.labels, "oracle or interactive")->capture_default_str();
  run->add_option("--host", o.host, "Bind address for --labels interactive")->capture_default_str();
  run->add_option("--port", o.port, "Port for --labels interactive")->capture_default_str();
  run->add_option("--ui-dir", o.ui_dir, "Static UI bundle");
}

// CLI11 reads config files only for the top-level app, so the experiment's
// --config file is expanded into flags here. Keys given on the command line win.
std::vector<std::string> config_arguments(CLI::App& experiment) {
  auto* config = experiment.get_option("--config");
  const auto file = config->as<std::string>();
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(file);
  } catch (const CLI::FileError& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> args;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw UsageError(file + ": unexpected section '" + item.parents.front() + "'");
    auto* opt = experiment.get_option_no_throw("--" + item.name);
    if (opt == nullptr || opt == config) throw UsageError(file + ": unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    if (opt->get_expected_min() == 0) {
      for (const auto& v : item.inputs) args.push_back("--" + item.name + "=" + v);
    } else {
      args.push_back("--" + item.name);
      args.insert(args.end(), item.inputs.begin(), item.inputs.end());
    }
  }
  return args;
}

std::string default_out() {
  const char* dir = std::getenv("EVFILTER_DATA_DIR");
  return dir && *dir ? dir : ".";
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  auto o = std::make_unique<Options>();
  o->out = default_out();
  auto app = std::make_unique<CLI::App>("Graph-based few-shot filtering of event-related samples", "evfilter");
  build_app(*app, *o);

  auto parse = [&](std::span<const std::string> a) {
    std::vector<const char*> argv{"evfilter"};
    for (const auto& s : a) argv.push_back(s.c_str());
    app->parse(static_cast<int>(argv.size()), argv.data());
  };
  try {
    parse(args);
    auto* experiment = app->get_subcommand("experiment");
    if (experiment->parsed() && experiment->get_option("--config")->count() > 0) {
      std::vector<std::string> expanded(args.begin(), args.end());
      const auto extra = config_arguments(*experiment);
      expanded.insert(expanded.end(), extra.begin(), extra.end());
      o = std::make_unique<Options>();
      o->out = default_out();
      app = std::make_unique<CLI::App>("Graph-based few-shot filtering of event-related samples", "evfilter");
      build_app(*app, *o);
      parse(expanded);
    }
  } catch (const CLI::CallForHelp&) {
    out << app->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app->help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "evfilter: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    err << "evfilter: " << e.what() << '\n';
    return 1;
  }

  try {
    return dispatch(*app, *o, out, err);
  } catch (const UsageError& e) {
    err << "evfilter: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "evfilter: " << e.what() << '\n';
    return 2;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, out, err);
}

}  // namespace evf

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <future>
#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "evfilter/error.hpp"
#include "evfilter/labeling_service.hpp"
#include "evfilter/synthetic.hpp"
#include "support.hpp"

using namespace evf;
using nlohmann::json;

namespace {

std::vector<LabelTask> make_tasks(std::size_t n) {
  std::vector<LabelTask> tasks;
  for (std::size_t i = 0; i < n; ++i) {
    LabelTask t;
    t.id = "t" + std::to_string(i);
    t.text = "text " + std::to_string(i);
    t.cluster = i / 10;
    t.rank = i % 10 + 1;
    t.has_image = i % 2 == 0;
    tasks.push_back(t);
  }
  return tasks;
}

LabelingSession::Runner counting_runner(std::atomic<int>* calls = nullptr) {
  return [calls](const std::vector<std::pair<std::string, LabelValue>>& labels) {
    if (calls) ++*calls;
    PropagationSummary s;
    for (const auto& [id, v] : labels) (v == LabelValue::relevant ? s.predicted_relevant : s.predicted_irrelevant)++;
    s.balanced_accuracy = 0.75;
    return s;
  };
}

void check_conservation(const LabelingSession& s) {
  const auto st = s.status();
  CHECK(st.remaining + st.labeled + st.skipped == st.selected);
}

}  // namespace

TEST_CASE("queue order, upsert and counting") {
  test::TempDir dir("session");
  LabelingSession s(make_tasks(60), dir / "labels.json", counting_runner());
  const auto batch = s.next_batch(10);
  REQUIRE(batch.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(batch[i].cluster == 0);
    CHECK(batch[i].rank == i + 1);
  }
  CHECK(s.next_batch(0).empty());
  CHECK(s.next_batch(10)[0].id == batch[0].id);

  CHECK(s.submit_label("t0", "relevant") == 59);
  CHECK(s.next_batch(1)[0].id == "t1");
  CHECK(s.submit_label("t0", "irrelevant") == 59);
  CHECK(s.submit_label("t1", "not_sure") == 58);
  auto st = s.status();
  CHECK(st.labeled == 1);
  CHECK(st.skipped == 1);
  CHECK(st.propagation == PropagationState::idle);
  check_conservation(s);

  CHECK_THROWS_AS(s.submit_label("nope", "relevant"), DataError);
  CHECK_THROWS_AS(s.submit_label("t2", "maybe"), UsageError);
  CHECK(s.status().remaining == 58);
  check_conservation(s);

  for (std::size_t i = 2; i < 60; ++i) s.submit_label("t" + std::to_string(i), i % 3 ? "irrelevant" : "relevant");
  CHECK(s.complete());
  CHECK(s.next_batch(10).empty());
  check_conservation(s);
}

TEST_CASE("propagation preconditions and idempotence") {
  test::TempDir dir("session");
  std::atomic<int> calls{0};
  LabelingSession s(make_tasks(6), dir / "labels.json", counting_runner(&calls));
  CHECK_THROWS_AS(s.trigger_propagation(), InsufficientLabelsError);
  s.submit_label("t0", "relevant");
  s.submit_label("t1", "relevant");
  s.submit_label("t2", "not_sure");
  try {
    s.trigger_propagation();
    FAIL("expected an insufficient-labels error");
  } catch (const InsufficientLabelsError& e) {
    CHECK(std::string(e.what()).find("irrelevant") != std::string::npos);
  }
  CHECK(calls == 0);
  CHECK(s.status().propagation == PropagationState::idle);

  s.submit_label("t3", "irrelevant");
  const auto a = s.trigger_propagation();
  CHECK(a.predicted_relevant == 2);
  CHECK(a.predicted_irrelevant == 1);  // not_sure excluded
  const auto b = s.trigger_propagation();
  CHECK(b.predicted_relevant == a.predicted_relevant);
  CHECK(calls == 2);
  CHECK(s.status().propagation == PropagationState::done);
  CHECK(s.last_result().has_value());
}

TEST_CASE("a failing runner restores the previous state") {
  test::TempDir dir("session");
  LabelingSession s(make_tasks(4), dir / "labels.json", [](const auto&) -> PropagationSummary {
    throw DataError("boom");
  });
  s.submit_label("t0", "relevant");
  s.submit_label("t1", "irrelevant");
  CHECK_THROWS_AS(s.trigger_propagation(), DataError);
  CHECK(s.status().propagation == PropagationState::idle);
}

TEST_CASE("labels persist across a restart") {
  test::TempDir dir("session");
  {
    LabelingSession s(make_tasks(5), dir / "labels.json", counting_runner());
    s.submit_label("t0", "relevant");
    s.submit_label("t3", "not_sure");
  }
  const auto stored = read_label_store(dir / "labels.json");
  CHECK(stored.at("t0") == "relevant");
  CHECK(stored.at("t3") == "not_sure");

  LabelingSession again(make_tasks(5), dir / "labels.json", counting_runner());
  const auto st = again.status();
  CHECK(st.labeled == 1);
  CHECK(st.skipped == 1);
  CHECK(st.remaining == 3);
  CHECK(again.next_batch(5)[0].id == "t1");
}

TEST_CASE("duplicate task ids are rejected") {
  test::TempDir dir("session");
  auto tasks = make_tasks(3);
  tasks[2].id = "t0";
  CHECK_THROWS_AS(LabelingSession(tasks, dir / "labels.json", counting_runner()), DataError);
}

TEST_CASE("concurrent submissions keep the counts consistent") {
  test::TempDir dir("session");
  LabelingSession s(make_tasks(200), dir / "labels.json", counting_runner());
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w)
    writers.emplace_back([&s, w] {
      for (int i = w; i < 200; i += 4) s.submit_label("t" + std::to_string(i), i % 2 ? "relevant" : "not_sure");
    });
  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done) {
      const auto st = s.status();
      CHECK(st.remaining + st.labeled + st.skipped == 200);
    }
  });
  for (auto& t : writers) t.join();
  done = true;
  reader.join();
  CHECK(s.status().labeled == 100);
  CHECK(s.status().skipped == 100);
  CHECK(read_label_store(dir / "labels.json").size() == 200);
}

TEST_CASE("HTTP round trip") {
  test::TempDir dir("http");
  std::ofstream(dir / "t0.png", std::ios::binary) << "\x89PNG fake";
  LabelingSession session(make_tasks(10), dir / "labels.json", counting_runner());
  ServiceOptions opts;
  opts.port = 0;
  opts.media = [&](const std::string& id) -> std::optional<std::filesystem::path> {
    if (id == "t0") return dir / "t0.png";
    return std::nullopt;
  };
  LabelingServer server(session, opts);
  const int port = server.start();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  auto queue = cli.Get("/api/queue?limit=10");
  REQUIRE(queue);
  CHECK(queue->status == 200);
  auto tasks = json::parse(queue->body)["tasks"];
  REQUIRE(tasks.size() == 10);
  CHECK(tasks[0]["id"] == "t0");
  CHECK(tasks[0]["image_url"] == "/media/t0");
  CHECK(tasks[1]["image_url"].is_null());
  CHECK(tasks[0]["rank"] == 1);

  CHECK(cli.Get("/api/queue?limit=abc")->status == 400);

  auto propagate = cli.Post("/api/propagate", "", "application/json");
  CHECK(propagate->status == 422);

  int remaining = 10;
  for (std::size_t i = 0; i < 10; ++i) {
    const std::string label = i == 9 ? "not_sure" : (i % 2 ? "relevant" : "irrelevant");
    auto r = cli.Post("/api/labels", json{{"id", tasks[i]["id"]}, {"label", label}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    const int now = json::parse(r->body)["remaining"];
    CHECK(now == remaining - 1);
    remaining = now;
  }
  CHECK(remaining == 0);

  CHECK(cli.Post("/api/labels", R"({"id":"zzz","label":"relevant"})", "application/json")->status == 400);
  CHECK(cli.Post("/api/labels", "not json", "application/json")->status == 400);
  CHECK(cli.Post("/api/labels", R"({"id":"t0"})", "application/json")->status == 400);
  CHECK(cli.Post("/api/labels", R"({"id":"t0","label":"perhaps"})", "application/json")->status == 400);

  auto status = json::parse(cli.Get("/api/status")->body);
  CHECK(status["selected"] == 10);
  CHECK(status["labeled"] == 9);
  CHECK(status["skipped"] == 1);
  CHECK(status["remaining"] == 0);
  CHECK(status["propagation"] == "idle");

  propagate = cli.Post("/api/propagate", "", "application/json");
  REQUIRE(propagate->status == 200);
  const auto summary = json::parse(propagate->body);
  CHECK(summary["balanced_accuracy"] == 0.75);
  CHECK(summary["predicted_relevant"].get<int>() + summary["predicted_irrelevant"].get<int>() == 9);
  CHECK(json::parse(cli.Get("/api/status")->body)["propagation"] == "done");

  auto img = cli.Get("/media/t0");
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/png");
  CHECK(img->body == "\x89PNG fake");
  CHECK(cli.Get("/media/t1")->status == 404);
  CHECK(cli.Get("/media/unknown")->status == 404);

  auto page = cli.Get("/");
  CHECK(page->status == 200);
  CHECK(page->body.find("<html") != std::string::npos);
  server.stop();
}

TEST_CASE("a second propagation while one runs is rejected") {
  test::TempDir dir("http");
  std::promise<void> entered, release;
  auto release_future = release.get_future().share();
  std::atomic<bool> first{true};
  LabelingSession session(make_tasks(2), dir / "labels.json", [&](const auto& labels) {
    if (first.exchange(false)) {
      entered.set_value();
      release_future.wait();
    }
    return counting_runner()(labels);
  });
  session.submit_label("t0", "relevant");
  session.submit_label("t1", "irrelevant");
  ServiceOptions opts;
  opts.port = 0;
  LabelingServer server(session, opts);
  httplib::Client cli("127.0.0.1", server.start());

  auto running = std::async(std::launch::async, [&] { return session.trigger_propagation(); });
  entered.get_future().wait();
  CHECK(json::parse(cli.Get("/api/status")->body)["propagation"] == "running");
  CHECK(cli.Post("/api/propagate", "", "application/json")->status == 409);
  CHECK_THROWS_AS(session.trigger_propagation(), BusyError);
  release.set_value();
  CHECK(running.get().predicted_relevant == 1);
  CHECK(cli.Post("/api/propagate", "", "application/json")->status == 200);
}

TEST_CASE("a busy port is reported instead of shared") {
  test::TempDir dir("http");
  LabelingSession session(make_tasks(1), dir / "labels.json", counting_runner());
  ServiceOptions opts;
  opts.port = 0;
  LabelingServer first(session, opts);
  opts.port = first.start();
  LabelingServer second(session, opts);
  CHECK_THROWS_AS(second.start(), DataError);
}

TEST_CASE("UI bundle directory is served when present") {
  test::TempDir dir("ui");
  std::filesystem::create_directories(dir / "ui");
  std::ofstream(dir / "ui" / "index.html") << "bundle-marker";
  LabelingSession session(make_tasks(1), dir / "labels.json", counting_runner());
  ServiceOptions opts;
  opts.port = 0;
  opts.ui_dir = dir / "ui";
  LabelingServer server(session, opts);
  httplib::Client cli("127.0.0.1", server.start());
  CHECK(cli.Get("/")->body == "bundle-marker");
  CHECK(cli.Get("/api/status")->status == 200);
}

TEST_CASE("sixty oracle labels through real propagation") {
  test::TempDir dir("oracle");
  ArtifactPaths p(dir.path());
  SyntheticSpec spec;
  spec.n = 400;
  spec.dim = 16;
  spec.seed = 2;
  const auto v = generate_synthetic_views(spec);
  write_manifest(p.manifest, v.records);
  write_embeddings(p.text, v.text);
  write_embeddings(p.image, v.image);
  stage_fuse(p, FusionMode::concat);
  stage_graph(p, FusionMode::concat, 0.85);
  stage_cluster(p, LeidenConfig{});
  SelectionConfig sc;
  sc.budget = 60;
  const auto sel = stage_select(p, sc);
  const auto ids = read_node_ids(p.graph_nodes);
  auto data = load_data(p.manifest, p.fused, FusionMode::concat);
  FewShotContext ctx(data.data.embeddings, data.train_rows);
  ClassifierConfig cc;
  cc.kind = Classifier::lgc;

  LabelingSession session(tasks_from_selection(data, sel, ids), p.labels,
                          [&](const auto& labels) { return propagate(data, ctx, labels, cc, 0); });
  for (const auto& [id, value] : oracle_labels(data, sel, ids)) session.submit_label(id, to_string(value));
  const auto a = session.trigger_propagation();
  REQUIRE(a.balanced_accuracy.has_value());
  CHECK(*a.balanced_accuracy >= 0.5);
  CHECK(a.predicted_relevant + a.predicted_irrelevant == 400);
  const auto b = session.trigger_propagation();
  CHECK(b.balanced_accuracy == a.balanced_accuracy);
  CHECK(b.predictions == a.predictions);
}

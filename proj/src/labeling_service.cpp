#include <chrono>
#include <fstream>
#include <httplib.h>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "evfilter/error.hpp"
#include "evfilter/labeling_service.hpp"

namespace evf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::labeled: return "labeled";
    case TaskStatus::skipped: return "skipped";
  }
  return "?";
}

std::string_view to_string(PropagationState s) {
  switch (s) {
    case PropagationState::idle: return "idle";
    case PropagationState::running: return "running";
    case PropagationState::done: return "done";
  }
  return "?";
}

namespace {

struct StoredLabel {
  TaskStatus status;
  LabelValue value;
};

StoredLabel parse_submission(std::string_view value) {
  if (value == "relevant") return {TaskStatus::labeled, LabelValue::relevant};
  if (value == "irrelevant") return {TaskStatus::labeled, LabelValue::irrelevant};
  if (value == "not_sure") return {TaskStatus::skipped, LabelValue::unknown};
  throw UsageError("label must be relevant, irrelevant or not_sure, got '" + std::string(value) + "'");
}

}  // namespace

LabelingSession::LabelingSession(std::vector<LabelTask> tasks, fs::path store, Runner runner)
    : tasks_(std::move(tasks)), store_(std::move(store)), runner_(std::move(runner)) {
  for (std::size_t i = 0; i < tasks_.size(); ++i)
    if (!index_.emplace(tasks_[i].id, i).second) throw DataError("duplicate task id '" + tasks_[i].id + "'");
  values_.assign(tasks_.size(), LabelValue::unknown);
  if (!store_.empty() && fs::exists(store_)) {
    for (const auto& [id, v] : read_label_store(store_)) {
      const auto it = index_.find(id);
      if (it == index_.end()) continue;  // labels of samples outside this selection
      const auto s = parse_submission(v);
      tasks_[it->second].status = s.status;
      values_[it->second] = s.value;
    }
  }
}

std::vector<LabelTask> LabelingSession::next_batch(std::size_t limit) const {
  std::shared_lock lock(labels_mutex_);
  std::vector<LabelTask> out;
  for (const auto& t : tasks_) {
    if (out.size() >= limit) break;
    if (t.status == TaskStatus::pending) out.push_back(t);
  }
  return out;
}

std::size_t LabelingSession::pending_locked() const {
  std::size_t n = 0;
  for (const auto& t : tasks_) n += t.status == TaskStatus::pending;
  return n;
}

void LabelingSession::persist() const {
  if (store_.empty()) return;
  std::unordered_map<std::string, std::string> labels;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].status == TaskStatus::skipped) labels.emplace(tasks_[i].id, "not_sure");
    if (tasks_[i].status == TaskStatus::labeled) labels.emplace(tasks_[i].id, std::string(to_string(values_[i])));
  }
  write_label_store(store_, labels);
}

std::size_t LabelingSession::submit_label(const std::string& id, std::string_view value) {
  const auto s = parse_submission(value);
  std::size_t remaining = 0;
  {
    std::unique_lock lock(labels_mutex_);
    const auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown sample id '" + id + "'");
    const auto old_status = tasks_[it->second].status;
    const auto old_value = values_[it->second];
    tasks_[it->second].status = s.status;
    values_[it->second] = s.value;
    try {
      persist();
    } catch (...) {
      tasks_[it->second].status = old_status;
      values_[it->second] = old_value;
      throw;
    }
    remaining = pending_locked();
  }
  progress_.notify_all();
  return remaining;
}

SessionStatus LabelingSession::status() const {
  std::shared_lock lock(labels_mutex_);
  SessionStatus s;
  s.selected = tasks_.size();
  for (const auto& t : tasks_) {
    if (t.status == TaskStatus::labeled) ++s.labeled;
    if (t.status == TaskStatus::skipped) ++s.skipped;
  }
  s.remaining = s.selected - s.labeled - s.skipped;
  s.propagation = state_.load();
  return s;
}

bool LabelingSession::complete() const {
  std::shared_lock lock(labels_mutex_);
  return pending_locked() == 0;
}

void LabelingSession::wait_until_complete(const std::atomic<bool>* stop) const {
  std::shared_lock lock(labels_mutex_);
  while (pending_locked() != 0 && !(stop && stop->load())) progress_.wait_for(lock, std::chrono::milliseconds(200));
}

PropagationSummary LabelingSession::trigger_propagation() {
  std::unique_lock guard(propagation_mutex_, std::try_to_lock);
  if (!guard.owns_lock()) throw BusyError("a propagation is already running");

  std::vector<std::pair<std::string, LabelValue>> labels;
  {
    std::shared_lock lock(labels_mutex_);
    for (std::size_t i = 0; i < tasks_.size(); ++i)
      if (tasks_[i].status == TaskStatus::labeled) labels.emplace_back(tasks_[i].id, values_[i]);
  }
  bool seen[2] = {false, false};
  for (const auto& [id, v] : labels) seen[class_index(v)] = true;
  if (labels.size() < 2) throw InsufficientLabelsError("at least two labelled samples are needed");
  for (int c = 0; c < 2; ++c)
    if (!seen[c])
      throw InsufficientLabelsError("no sample is labelled " + std::string(to_string(class_label(c))));

  const auto previous = state_.exchange(PropagationState::running);
  try {
    auto summary = runner_(labels);
    {
      std::lock_guard lock(result_mutex_);
      result_ = summary;
    }
    state_ = PropagationState::done;
    return summary;
  } catch (...) {
    state_ = previous;
    throw;
  }
}

std::optional<PropagationSummary> LabelingSession::last_result() const {
  std::lock_guard lock(result_mutex_);
  return result_;
}

std::vector<LabelTask> tasks_from_selection(const LoadedData& data, const SelectionResult& selection,
                                            std::span<const std::string> node_ids) {
  std::vector<LabelTask> tasks;
  for (const auto& s : selection.selected) {
    const auto& id = node_ids[s.node];
    const auto it = data.data.index.find(id);
    if (it == data.data.index.end()) throw DataError("selected id '" + id + "' is not in the dataset");
    const auto& r = data.data.records[it->second];
    tasks.push_back({id, r.text, r.image.has_value(), s.cluster, s.rank, TaskStatus::pending});
  }
  return tasks;
}

namespace {

constexpr const char* kBuiltinPage = R"html(<!doctype html>
<html><head><meta charset="utf-8"><title>evfilter labeling</title>
<style>body{font-family:sans-serif;max-width:40em;margin:2em auto}img{max-width:100%}button{margin-right:.5em}</style>
</head><body>
<h1>Label samples</h1>
<p id="status"></p>
<div id="card"></div>
<p><button onclick="send('relevant')">Relevant (r)</button><button onclick="send('irrelevant')">Irrelevant (i)</button>
<button onclick="send('not_sure')">Not sure (n)</button><button onclick="propagate()">Propagate</button></p>
<pre id="result"></pre>
<script>
let task = null;
async function refresh() {
  const s = await (await fetch('/api/status')).json();
  document.getElementById('status').textContent =
    `${s.labeled} labeled, ${s.skipped} skipped, ${s.remaining} remaining (propagation: ${s.propagation})`;
  const q = await (await fetch('/api/queue?limit=1')).json();
  task = q.tasks.length ? q.tasks[0] : null;
  const card = document.getElementById('card');
  card.textContent = '';
  if (!task) { card.textContent = 'All selected samples are labeled.'; return; }
  const p = document.createElement('p');
  p.textContent = `[cluster ${task.cluster}, rank ${task.rank}] ${task.text}`;
  card.appendChild(p);
  if (task.image_url) { const img = document.createElement('img'); img.src = task.image_url; card.appendChild(img); }
}
async function send(label) {
  if (!task) return;
  await fetch('/api/labels', {method: 'POST', headers: {'Content-Type': 'application/json'},
                              body: JSON.stringify({id: task.id, label})});
  refresh();
}
async function propagate() {
  const r = await fetch('/api/propagate', {method: 'POST'});
  document.getElementById('result').textContent = JSON.stringify(await r.json(), null, 2);
  refresh();
}
document.addEventListener('keydown', e => {
  if (e.key === 'r') send('relevant'); else if (e.key === 'i') send('irrelevant'); else if (e.key === 'n') send('not_sure');
});
refresh();
</script></body></html>
)html";

std::string content_type_for(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

json summary_json(const PropagationSummary& s) {
  return {{"balanced_accuracy", s.balanced_accuracy ? json(*s.balanced_accuracy) : json()},
          {"predicted_relevant", s.predicted_relevant},
          {"predicted_irrelevant", s.predicted_irrelevant}};
}

}  // namespace

struct LabelingServer::Impl {
  LabelingSession& session;
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;

  Impl(LabelingSession& s, ServiceOptions o) : session(s), options(std::move(o)) {}

  void routes() {
    server.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t limit = 10;
      if (req.has_param("limit")) {
        try {
          const auto v = std::stoll(req.get_param_value("limit"));
          if (v < 0) throw std::invalid_argument("negative");
          limit = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          return reply(res, 400, {{"error", "limit must be a non-negative integer"}});
        }
      }
      json tasks = json::array();
      for (const auto& t : session.next_batch(limit))
        tasks.push_back({{"id", t.id},
                         {"text", t.text},
                         {"has_image", t.has_image},
                         {"image_url", t.has_image ? json("/media/" + t.id) : json()},
                         {"cluster", t.cluster},
                         {"rank", t.rank}});
      reply(res, 200, {{"tasks", tasks}});
    });

    server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception&) {
        return reply(res, 400, {{"error", "request body is not valid JSON"}});
      }
      if (!body.is_object() || !body.contains("id") || !body["id"].is_string() || !body.contains("label") ||
          !body["label"].is_string())
        return reply(res, 400, {{"error", "expected {\"id\": string, \"label\": string}"}});
      try {
        const auto remaining = session.submit_label(body["id"].get<std::string>(), body["label"].get<std::string>());
        reply(res, 200, {{"remaining", remaining}});
      } catch (const DataError& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const UsageError& e) {
        reply(res, 400, {{"error", e.what()}});
      }
    });

    server.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
      const auto s = session.status();
      reply(res, 200,
            {{"selected", s.selected},
             {"labeled", s.labeled},
             {"skipped", s.skipped},
             {"remaining", s.remaining},
             {"propagation", std::string(to_string(s.propagation))}});
    });

    server.Post("/api/propagate", [this](const httplib::Request&, httplib::Response& res) {
      try {
        reply(res, 200, summary_json(session.trigger_propagation()));
      } catch (const BusyError& e) {
        reply(res, 409, {{"error", e.what()}});
      } catch (const InsufficientLabelsError& e) {
        reply(res, 422, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    });

    server.Get(R"(/media/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto path = options.media ? options.media(id) : std::nullopt;
      std::ifstream in;
      if (path && fs::is_regular_file(*path)) in.open(*path, std::ios::binary);
      if (!in.is_open()) return reply(res, 404, {{"error", "no image for '" + id + "'"}});
      std::ostringstream bytes;
      bytes << in.rdbuf();
      res.set_content(bytes.str(), content_type_for(*path).c_str());
    });

    const bool has_bundle = !options.ui_dir.empty() && fs::exists(options.ui_dir / "index.html");
    if (has_bundle) {
      server.set_mount_point("/", options.ui_dir.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kBuiltinPage, "text/html; charset=utf-8");
      });
    }
  }
};

LabelingServer::LabelingServer(LabelingSession& session, ServiceOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {
  impl_->routes();
  // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets a
  // second server share a port that is already serving.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
}

LabelingServer::~LabelingServer() { stop(); }

int LabelingServer::start() {
  auto& o = impl_->options;
  if (o.port == 0) {
    port_ = impl_->server.bind_to_any_port(o.host);
    if (port_ < 0) throw DataError("cannot bind " + o.host);
  } else {
    if (!impl_->server.bind_to_port(o.host, o.port))
      throw DataError("cannot bind " + o.host + ":" + std::to_string(o.port));
    port_ = o.port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void LabelingServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace evf

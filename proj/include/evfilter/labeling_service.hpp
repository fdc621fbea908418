#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/pipeline.hpp"

namespace evf {

enum class TaskStatus { pending, labeled, skipped };
enum class PropagationState { idle, running, done };

std::string_view to_string(TaskStatus s);
std::string_view to_string(PropagationState s);

struct LabelTask {
  std::string id;
  std::string text;
  bool has_image = false;
  std::size_t cluster = 0;
  std::size_t rank = 0;
  TaskStatus status = TaskStatus::pending;
};

struct SessionStatus {
  std::size_t selected = 0;
  std::size_t labeled = 0;
  std::size_t skipped = 0;
  std::size_t remaining = 0;
  PropagationState propagation = PropagationState::idle;
};

// A propagation is already running; never queued.
class BusyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fewer than two labels or a class without any label.
class InsufficientLabelsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Annotation session over one selection.
///
/// Labels are persisted to `store` after every submit and reloaded on
/// construction, so a restarted service resumes where it stopped. Readers run
/// concurrently; submits are serialized; at most one propagation runs and a
/// second trigger fails with BusyError instead of waiting.
class LabelingSession {
 public:
  // Receives (id, label) pairs for every labelled task; not_sure tasks are left out.
  using Runner = std::function<PropagationSummary(const std::vector<std::pair<std::string, LabelValue>>&)>;

  // Tasks must be in (cluster, rank) order with unique ids.
  LabelingSession(std::vector<LabelTask> tasks, std::filesystem::path store, Runner runner);

  std::vector<LabelTask> next_batch(std::size_t limit) const;
  // value is relevant, irrelevant or not_sure. Throws DataError for an unknown
  // id and UsageError for any other value. Returns the pending count.
  std::size_t submit_label(const std::string& id, std::string_view value);
  SessionStatus status() const;
  bool complete() const;
  PropagationSummary trigger_propagation();
  std::optional<PropagationSummary> last_result() const;

  // Blocks until no task is pending (or `stop` is set).
  void wait_until_complete(const std::atomic<bool>* stop = nullptr) const;

 private:
  std::vector<LabelTask> tasks_;
  std::vector<LabelValue> values_;  // parallel to tasks_, unknown unless labeled
  std::unordered_map<std::string, std::size_t> index_;
  std::filesystem::path store_;
  Runner runner_;
  mutable std::shared_mutex labels_mutex_;
  std::mutex propagation_mutex_;
  std::atomic<PropagationState> state_{PropagationState::idle};
  mutable std::mutex result_mutex_;
  std::optional<PropagationSummary> result_;
  mutable std::condition_variable_any progress_;

  void persist() const;
  std::size_t pending_locked() const;
};

/// Builds the task list of a selection from the dataset records.
std::vector<LabelTask> tasks_from_selection(const LoadedData& data, const SelectionResult& selection,
                                            std::span<const std::string> node_ids);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  std::filesystem::path ui_dir;  // static UI bundle; a built-in page when empty or missing
  // Image file for a sample id, if any.
  std::function<std::optional<std::filesystem::path>(const std::string&)> media;
};

/// Loopback HTTP front end of a session.
class LabelingServer {
 public:
  LabelingServer(LabelingSession& session, ServiceOptions options);
  ~LabelingServer();
  LabelingServer(const LabelingServer&) = delete;
  LabelingServer& operator=(const LabelingServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace evf

#include <algorithm>
#include <cstdio>

#include "iwast/collector.hpp"
#include "iwast/error.hpp"
#include "iwast/hex.hpp"
#include "iwast/sim_engine.hpp"

namespace iwast::collector {

std::optional<std::string> LiveHub::Subscription::next() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  std::string msg = std::move(queue_.front());
  queue_.pop_front();
  return msg;
}

std::shared_ptr<LiveHub::Subscription> LiveHub::subscribe() {
  auto sub = std::make_shared<Subscription>();
  std::lock_guard lock(mutex_);
  subs_.push_back(sub);
  return sub;
}

void LiveHub::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  std::lock_guard lock(mutex_);
  subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
}

void LiveHub::publish(const std::string& message) {
  std::lock_guard lock(mutex_);
  for (const auto& s : subs_) {
    {
      std::lock_guard sl(s->mutex_);
      s->queue_.push_back(message);
    }
    s->cv_.notify_one();
  }
}

void LiveHub::close_all() {
  std::lock_guard lock(mutex_);
  for (const auto& s : subs_) {
    {
      std::lock_guard sl(s->mutex_);
      s->closed_ = true;
    }
    s->cv_.notify_all();
  }
  subs_.clear();
}

std::size_t LiveHub::subscribers() const {
  std::lock_guard lock(mutex_);
  return subs_.size();
}

// ---------------------------------------------------------------------------

struct RunManager::Run {
  std::string id;
  std::string name;
  mutable std::mutex mutex;
  mutable std::condition_variable cv;
  std::unique_ptr<sim::Simulator> sim;
  std::string status = "running";
  std::string mb_state;
  double end_s = 0.0;
  nlohmann::json report;
  std::size_t uplinks = 0;
  std::size_t stored = 0;
  std::string device_id;
  std::string error;
  bool cancel = false;

  bool done() const { return status == "completed" || status == "failed"; }
};

RunManager::RunManager(Store& store, LiveHub& hub, std::filesystem::path scenario_dir)
    : store_(store), hub_(hub), scenario_dir_(std::move(scenario_dir)) {}

RunManager::~RunManager() {
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, run] : runs_) {
      std::lock_guard rl(run->mutex);
      run->cancel = true;
      run->cv.notify_all();
    }
  }
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
}

std::string RunManager::start(const nlohmann::json& request) {
  if (!request.is_object()) throw Error(Errc::ParseError, "run request must be an object");
  sim::Scenario scenario;
  try {
    if (request.contains("scenario_path")) {
      const std::filesystem::path rel = request.at("scenario_path").get<std::string>();
      if (rel.is_absolute() || std::find(rel.begin(), rel.end(), "..") != rel.end()) {
        throw Error(Errc::ParseError, "scenario_path must stay inside the scenario directory");
      }
      scenario = sim::load_scenario_file(scenario_dir_ / rel);
    } else {
      scenario = sim::scenario_from_json(request.contains("scenario") ? request.at("scenario") : request,
                                         scenario_dir_);
    }
    if (request.contains("await_configuration")) {
      scenario.await_configuration = request.at("await_configuration").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }

  auto run = std::make_shared<Run>();
  run->name = scenario.name;
  run->sim = std::make_unique<sim::Simulator>(std::move(scenario));

  std::lock_guard lock(mutex_);
  run->id = "run" + std::to_string(next_id_++);
  runs_[run->id] = run;
  threads_.emplace_back([this, run] { execute(run); });
  return run->id;
}

void RunManager::execute(const std::shared_ptr<Run>& run) {
  constexpr std::size_t kSlice = 20000;
  try {
    std::optional<sim::RunResult> result;
    {
      std::unique_lock lock(run->mutex);
      while (!run->cancel) {
        const auto st = run->sim->advance(kSlice);
        run->mb_state = std::string(mb::to_string(run->sim->motherboard().state()));
        if (st == sim::RunStatus::PausedForConfiguration) {
          run->status = "awaiting_configuration";
          run->cv.notify_all();
          run->cv.wait(lock, [&] { return run->cancel || !run->sim->awaiting_configuration(); });
          run->status = "running";
          run->cv.notify_all();
          continue;
        }
        if (st == sim::RunStatus::Finished) {
          result = run->sim->finish();
          break;
        }
        // Let status and configure calls in between slices.
        lock.unlock();
        std::this_thread::yield();
        lock.lock();
      }
      if (!result) {
        run->status = "failed";
        run->error = "cancelled";
        run->cv.notify_all();
        return;
      }
    }

    const auto& mbd = run->sim->motherboard();
    const std::string device_id = to_hex(mbd.active_config().device_id);
    store_.register_device(device_id, mbd.topology(), run->id);
    std::size_t stored = 0;
    for (const auto& up : result->uplinks) {
      auto res = store_.ingest(up);
      stored += res.stored;
      for (const auto& row : res.rows) hub_.publish(row.to_json().dump());
    }

    std::lock_guard lock(run->mutex);
    run->device_id = device_id;
    run->uplinks = result->uplinks.size();
    run->stored = stored;
    run->report = to_json(result->report);
    run->end_s = result->end_s;
    run->mb_state = std::string(mb::to_string(mbd.state()));
    run->status = "completed";
    run->cv.notify_all();
  } catch (const std::exception& e) {
    std::lock_guard lock(run->mutex);
    run->status = "failed";
    run->error = e.what();
    run->cv.notify_all();
  }
}

std::optional<nlohmann::json> RunManager::status(const std::string& id) const {
  std::shared_ptr<Run> run;
  {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(id);
    if (it == runs_.end()) return std::nullopt;
    run = it->second;
  }
  std::lock_guard lock(run->mutex);
  nlohmann::json j = {{"id", run->id},
                      {"name", run->name},
                      {"status", run->status},
                      {"t_s", run->done() ? run->end_s : run->sim->now()},
                      {"motherboard_state", run->mb_state},
                      {"awaiting_configuration", run->status == "awaiting_configuration"}};
  if (run->status == "completed") {
    j["device_id"] = run->device_id;
    j["uplinks"] = run->uplinks;
    j["stored"] = run->stored;
    j["report"] = run->report;
  }
  if (!run->error.empty()) j["error"] = run->error;
  return j;
}

std::optional<std::string> RunManager::configure(const std::string& id, const std::string& line) {
  std::shared_ptr<Run> run;
  {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(id);
    if (it == runs_.end()) return std::nullopt;
    run = it->second;
  }
  std::lock_guard lock(run->mutex);
  if (run->status != "awaiting_configuration" || !run->sim->awaiting_configuration()) return "ERR NoDevice";
  std::string reply = run->sim->usb_command(line);
  run->mb_state = std::string(mb::to_string(run->sim->motherboard().state()));
  run->cv.notify_all();
  return reply;
}

void RunManager::wait(const std::string& id, bool until_completed) const {
  std::shared_ptr<Run> run;
  {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw Error(Errc::UnknownDevice, "no run " + id);
    run = it->second;
  }
  std::unique_lock lock(run->mutex);
  run->cv.wait(lock, [&] {
    return run->done() || (!until_completed && run->status == "awaiting_configuration");
  });
}

}  // namespace iwast::collector

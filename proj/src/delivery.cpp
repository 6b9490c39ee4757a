#include "pwcare/delivery.hpp"

#include <algorithm>

namespace pwcare::delivery {

FileGateway::FileGateway(FileGatewayOptions options, const Clock* clock)
    : options_(std::move(options)),
      clock_(clock ? clock : &system_clock_),
      sink_(options_.sink_path, std::ios::app),
      rng_(options_.seed) {
  if (!sink_) {
    throw Error(ErrorCode::GatewayUnreachable, "cannot open gateway sink " + options_.sink_path);
  }
}

void FileGateway::send(const NotificationRecord& n) {
  if (options_.delay.count() > 0) std::this_thread::sleep_for(options_.delay);
  std::lock_guard lock(mu_);
  if (options_.failure_rate > 0.0) {
    // top 53 bits → [0, 1)
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    if (u < options_.failure_rate) {
      throw Error(ErrorCode::GatewayUnreachable, "gateway stub rejected the message");
    }
  }
  sink_ << format_timestamp(clock_->now()) << '\t' << n.recipient_phone << '\t' << n.payload
        << '\n'
        << std::flush;
  if (!sink_) throw Error(ErrorCode::GatewayUnreachable, "gateway sink write failed");
  ++delivered_;
}

std::size_t FileGateway::delivered() const {
  std::lock_guard lock(mu_);
  return delivered_;
}

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
  auto delay = base_backoff;
  for (int i = 1; i < attempt && delay < max_backoff; ++i) delay *= 2;
  return std::min(delay, max_backoff);
}

DeliveryPool::DeliveryPool(registry::Registry& registry, Gateway& gateway, RetryPolicy policy,
                           std::size_t workers, EventLog* events)
    : registry_(registry),
      gateway_(gateway),
      policy_(policy),
      events_(events ? events : &null_events_) {
  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
}

DeliveryPool::~DeliveryPool() { stop(); }

void DeliveryPool::enqueue(const std::vector<std::string>& ids) {
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    for (const auto& id : ids) {
      if (tracked_.insert(id).second) jobs_.push({now, id, 1});
    }
  }
  wake_.notify_all();
}

std::size_t DeliveryPool::redrive() {
  std::vector<std::string> ids;
  for (const auto& n : registry_.queued_notifications()) ids.push_back(n.notification_id);
  if (!ids.empty()) {
    events_->emit("delivery.redrive", {{"queued", ids.size()}});
    enqueue(ids);
  }
  return ids.size();
}

bool DeliveryPool::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  return idle_.wait_for(lock, timeout, [&] { return jobs_.empty() && in_flight_ == 0; });
}

void DeliveryPool::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
}

PoolStats DeliveryPool::stats() const {
  std::lock_guard lock(mu_);
  PoolStats s = stats_;
  s.pending = jobs_.size() + in_flight_;
  return s;
}

void DeliveryPool::run() {
  std::unique_lock lock(mu_);
  while (true) {
    if (stopping_) return;
    if (jobs_.empty()) {
      wake_.wait(lock);
      continue;
    }
    const auto due = jobs_.top().due;
    if (due > std::chrono::steady_clock::now()) {
      wake_.wait_until(lock, due);
      continue;
    }
    Job job = jobs_.top();
    jobs_.pop();
    ++in_flight_;
    lock.unlock();
    attempt(std::move(job));
    lock.lock();
    --in_flight_;
    if (jobs_.empty() && in_flight_ == 0) idle_.notify_all();
  }
}

void DeliveryPool::attempt(Job job) {
  const auto row = registry_.notification(job.id);
  if (!row || row->status != DeliveryStatus::Queued) {
    std::lock_guard lock(mu_);
    tracked_.erase(job.id);
    return;
  }

  try {
    gateway_.send(*row);
    registry_.mark_sent(job.id, job.attempt);
    std::lock_guard lock(mu_);
    ++stats_.sent;
    ++stats_.attempts;
    tracked_.erase(job.id);
    return;
  } catch (const Error& e) {
    events_->emit("delivery.attempt_failed", {{"notification_id", job.id},
                                              {"attempt", job.attempt},
                                              {"code", to_string(e.code())}});
  } catch (const std::exception& e) {
    events_->emit("delivery.attempt_failed",
                  {{"notification_id", job.id}, {"attempt", job.attempt}, {"message", e.what()}});
  }

  std::lock_guard lock(mu_);
  ++stats_.attempts;
  if (job.attempt > policy_.retries) {
    tracked_.erase(job.id);
    try {
      registry_.mark_failed(job.id, job.attempt);
    } catch (const Error&) {
      return;
    }
    ++stats_.failed;
    events_->emit("delivery.failed", {{"notification_id", job.id}, {"attempts", job.attempt}});
    return;
  }
  job.due = std::chrono::steady_clock::now() + policy_.backoff(job.attempt);
  ++job.attempt;
  jobs_.push(std::move(job));
  wake_.notify_one();
}

}  // namespace pwcare::delivery

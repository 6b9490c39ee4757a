#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "pwcare/event_log.hpp"
#include "pwcare/registry.hpp"

namespace pwcare::delivery {

// Transport for one rendered message. Throws GatewayUnreachable on failure.
class Gateway {
 public:
  virtual ~Gateway() = default;
  virtual void send(const NotificationRecord& notification) = 0;
};

struct FileGatewayOptions {
  std::string sink_path;
  double failure_rate = 0.0;  // probability in [0, 1] that a send fails
  std::chrono::milliseconds delay{0};
  std::uint64_t seed = 0;
};

// Stand-in for the SMS-over-IP gateway. Appends
// `ISO8601\trecipient\tpayload` per delivered message.
class FileGateway : public Gateway {
 public:
  FileGateway(FileGatewayOptions options, const Clock* clock = nullptr);

  void send(const NotificationRecord& notification) override;
  std::size_t delivered() const;

 private:
  FileGatewayOptions options_;
  const Clock* clock_;
  SystemClock system_clock_;
  mutable std::mutex mu_;
  std::ofstream sink_;
  std::mt19937_64 rng_;
  std::size_t delivered_ = 0;
};

struct RetryPolicy {
  int retries = 2;  // extra attempts after the first
  std::chrono::milliseconds base_backoff{200};
  std::chrono::milliseconds max_backoff{5000};

  // Delay before attempt `attempt + 1` (attempt counts from 1).
  std::chrono::milliseconds backoff(int attempt) const;
};

struct PoolStats {
  std::size_t sent = 0;
  std::size_t failed = 0;
  std::size_t attempts = 0;
  std::size_t pending = 0;
};

// Worker pool draining queued notification rows through a gateway. Failed
// attempts are rescheduled with exponential backoff instead of blocking a
// worker, so one bad recipient does not hold up the rest.
class DeliveryPool : public Outbox {
 public:
  DeliveryPool(registry::Registry& registry, Gateway& gateway, RetryPolicy policy = {},
               std::size_t workers = 4, EventLog* events = nullptr);
  ~DeliveryPool() override;

  DeliveryPool(const DeliveryPool&) = delete;
  DeliveryPool& operator=(const DeliveryPool&) = delete;

  void enqueue(const std::vector<std::string>& notification_ids) override;

  // Re-queues every row still in queued status (startup after a crash).
  std::size_t redrive();

  // Blocks until nothing is pending or in flight, or the timeout passes.
  bool wait_idle(std::chrono::milliseconds timeout);

  void stop();
  PoolStats stats() const;

 private:
  struct Job {
    std::chrono::steady_clock::time_point due;
    std::string id;
    int attempt = 1;
    bool operator>(const Job& other) const { return due > other.due; }
  };

  void run();
  void attempt(Job job);

  registry::Registry& registry_;
  Gateway& gateway_;
  RetryPolicy policy_;
  EventLog* events_;
  EventLog null_events_;

  mutable std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::priority_queue<Job, std::vector<Job>, std::greater<>> jobs_;
  std::set<std::string, std::less<>> tracked_;  // ids queued, waiting retry or in flight
  std::size_t in_flight_ = 0;
  bool stopping_ = false;
  PoolStats stats_;
  std::vector<std::thread> threads_;
};

}  // namespace pwcare::delivery

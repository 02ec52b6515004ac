#pragma once

// Outbound results webhook: payload rendering, retrying delivery and a
// background dispatcher that never blocks the caller.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cat/engine.hpp"
#include "cat/json_io.hpp"

namespace cat {

/// Result export fields: record/session id, theta_estimate, se_estimate,
/// items_administered, completion_time (ms), stop_reason, plus study id.
Json webhook_payload(const SessionResult& result, const std::string& study_id);

struct SendResult {
  int status = 0;     // HTTP status; 0 when the request never completed
  std::string error;  // transport error text
};

/// POSTs a JSON body to a URL.
using Sender = std::function<SendResult(const std::string& url, const std::string& body)>;

/// Plain-HTTP sender built on cpp-httplib.
Sender http_sender(std::chrono::milliseconds timeout = std::chrono::seconds(5));

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{250};
  double multiplier = 2.0;
};

enum class DeliveryStatus { Pending, Delivered, Failed };
std::string_view to_string(DeliveryStatus s);

struct WebhookDelivery {
  std::string target;
  Json payload;
  int attempts = 0;
  DeliveryStatus status = DeliveryStatus::Pending;
  int last_status = 0;
  std::string last_error;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Delivers with exponential backoff. 2xx is success; other 4xx is terminal;
/// transport errors and 5xx are retried up to policy.max_attempts.
WebhookDelivery deliver_webhook(const Json& payload, const std::string& target, const Sender& send,
                                const RetryPolicy& policy, const Sleeper& sleep);

/// Single background worker draining a FIFO of deliveries.
class WebhookDispatcher {
 public:
  WebhookDispatcher(Sender send, RetryPolicy policy, Sleeper sleep = {});
  ~WebhookDispatcher();
  WebhookDispatcher(const WebhookDispatcher&) = delete;
  WebhookDispatcher& operator=(const WebhookDispatcher&) = delete;

  void enqueue(std::string target, Json payload);
  /// Blocks until the queue is empty and no delivery is in flight.
  void wait_idle();
  /// Completed deliveries, in completion order.
  std::vector<WebhookDelivery> history() const;

 private:
  void run();

  Sender send_;
  RetryPolicy policy_;
  Sleeper sleep_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<WebhookDelivery> queue_;
  std::vector<WebhookDelivery> history_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace cat

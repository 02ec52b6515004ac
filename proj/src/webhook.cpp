#include "cat/webhook.hpp"

#include <httplib.h>

#include <cmath>
#include <regex>

namespace cat {

Json webhook_payload(const SessionResult& r, const std::string& study_id) {
  Json j;
  j["record_id"] = r.session_id;
  j["session_id"] = r.session_id;
  j["study_id"] = study_id;
  j["theta_estimate"] = r.final_estimate.theta;
  j["se_estimate"] = r.final_estimate.se;
  j["items_administered"] = r.items_administered;
  j["completion_time"] = r.duration_ms;
  j["stop_reason"] = r.stop_reason ? Json(to_string(*r.stop_reason)) : Json(nullptr);
  j["disposition"] = to_string(r.disposition);
  j["classification"] = r.classification ? Json(*r.classification) : Json(nullptr);
  return j;
}

Sender http_sender(std::chrono::milliseconds timeout) {
  return [timeout](const std::string& url, const std::string& body) -> SendResult {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) return {0, "unsupported url '" + url + "'"};
    httplib::Client cli(m[1].str());
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = cli.Post(path, body, "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, {}};
  };
}

std::string_view to_string(DeliveryStatus s) {
  switch (s) {
    case DeliveryStatus::Pending: return "pending";
    case DeliveryStatus::Delivered: return "delivered";
    case DeliveryStatus::Failed: return "failed";
  }
  return "pending";
}

WebhookDelivery deliver_webhook(const Json& payload, const std::string& target, const Sender& send,
                                const RetryPolicy& policy, const Sleeper& sleep) {
  WebhookDelivery d;
  d.target = target;
  d.payload = payload;
  const auto body = payload.dump();
  auto delay = policy.base_delay;
  while (d.attempts < policy.max_attempts) {
    if (d.attempts > 0 && sleep) sleep(delay);
    if (d.attempts > 0)
      delay = std::chrono::milliseconds(static_cast<long long>(std::llround(delay.count() * policy.multiplier)));
    ++d.attempts;
    SendResult r;
    try {
      r = send(target, body);
    } catch (const std::exception& e) {
      r = {0, e.what()};
    }
    d.last_status = r.status;
    d.last_error = r.error;
    if (r.status >= 200 && r.status < 300) {
      d.status = DeliveryStatus::Delivered;
      return d;
    }
    if (r.status >= 400 && r.status < 500 && r.status != 408 && r.status != 429) break;
  }
  d.status = DeliveryStatus::Failed;
  return d;
}

WebhookDispatcher::WebhookDispatcher(Sender send, RetryPolicy policy, Sleeper sleep)
    : send_(std::move(send)), policy_(policy), sleep_(std::move(sleep)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds ms) { std::this_thread::sleep_for(ms); };
  worker_ = std::thread([this] { run(); });
}

WebhookDispatcher::~WebhookDispatcher() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void WebhookDispatcher::enqueue(std::string target, Json payload) {
  {
    std::lock_guard lock(mu_);
    WebhookDelivery d;
    d.target = std::move(target);
    d.payload = std::move(payload);
    queue_.push_back(std::move(d));
  }
  cv_.notify_one();
}

void WebhookDispatcher::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

std::vector<WebhookDelivery> WebhookDispatcher::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

void WebhookDispatcher::run() {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
    if (queue_.empty()) return;  // stop requested and drained
    auto job = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    auto done = deliver_webhook(job.payload, job.target, send_, policy_, sleep_);
    lock.lock();
    history_.push_back(std::move(done));
    busy_ = false;
    if (queue_.empty()) idle_cv_.notify_all();
  }
}

}  // namespace cat

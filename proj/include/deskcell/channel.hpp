#pragma once

// Ordered, reliable, in-process byte streams. A TCP connection is adapted
// onto the same interface by pumping socket bytes into a pipe end, so the
// robot node and clients never see the transport.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace deskcell {

class PipeEnd {
 public:
  struct Shared;
  PipeEnd(std::shared_ptr<Shared> shared, int side) : shared_(std::move(shared)), side_(side) {}

  /// Appends to the peer's inbox. Silently dropped once either side closed.
  void write(std::span<const std::uint8_t> bytes);
  /// Drains everything currently readable.
  std::vector<std::uint8_t> read_available();
  /// Blocks until bytes arrive, the pipe closes, or the timeout elapses.
  std::vector<std::uint8_t> read_wait(std::chrono::milliseconds timeout);

  void close();
  bool closed() const;

 private:
  std::shared_ptr<Shared> shared_;
  int side_;
};

std::pair<std::shared_ptr<PipeEnd>, std::shared_ptr<PipeEnd>> make_pipe();

/// Fixed-capacity FIFO shared between contexts. try_push never blocks;
/// push blocks while full (back-pressure).
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool try_push(T v) {
    std::lock_guard lock(m_);
    if (q_.size() >= capacity_) return false;
    q_.push_back(std::move(v));
    cv_.notify_all();
    return true;
  }

  void push(T v) {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return q_.size() < capacity_ || closed_; });
    if (closed_) return;
    q_.push_back(std::move(v));
    cv_.notify_all();
  }

  /// Pushes, evicting the oldest element when full. Returns true if one was evicted.
  bool push_drop_oldest(T v) {
    std::lock_guard lock(m_);
    bool evicted = false;
    if (q_.size() >= capacity_) {
      q_.pop_front();
      evicted = true;
    }
    q_.push_back(std::move(v));
    cv_.notify_all();
    return evicted;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(m_);
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    cv_.notify_all();
    return v;
  }

  std::optional<T> pop_wait(std::chrono::milliseconds timeout) {
    std::unique_lock lock(m_);
    cv_.wait_for(lock, timeout, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    cv_.notify_all();
    return v;
  }

  void close() {
    std::lock_guard lock(m_);
    closed_ = true;
    cv_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(m_);
    return q_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  mutable std::mutex m_;
  std::condition_variable cv_;
  std::deque<T> q_;
  std::size_t capacity_;
  bool closed_ = false;
};

}  // namespace deskcell

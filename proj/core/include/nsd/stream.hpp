#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nsd/dsp.hpp"
#include "nsd/model.hpp"

namespace nsd::stream {

/// One second of preprocessed samples for every channel.
struct Chunk {
  double t = 0;          // start time, seconds
  Tensor<float> samples; // [12, 32]
};

struct Decision {
  std::size_t t = 0;  // window start, seconds
  float probability = 0;
  bool seizure = false;
  std::optional<double> latency_ms;
};

std::string to_json(const Decision& d);

/// Fixed-capacity per-channel history holding the newest `capacity` samples.
class RingBuffer {
 public:
  RingBuffer(std::size_t channels, std::size_t capacity);

  void push(const Tensor<float>& block);  // [channels, n]
  bool full() const { return filled_ >= capacity_; }
  std::size_t filled() const { return filled_; }
  /// Oldest-to-newest copy, [channels, capacity]. Requires full().
  Tensor<float> snapshot() const;
  void reset();

 private:
  std::size_t channels_, capacity_;
  std::vector<float> data_;  // [channel][capacity]
  std::size_t head_ = 0;     // next write position
  std::size_t filled_ = 0;
};

/// Blocking single-producer/single-consumer queue with a capacity bound.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  /// Empty optional once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
};

struct StreamOptions {
  std::size_t queue_capacity = 4;
  bool measure_latency = false;
};

struct StreamStats {
  std::size_t chunks = 0;
  std::size_t decisions = 0;
  std::size_t discontinuities = 0;
};

using ChunkSource = std::function<std::optional<Chunk>()>;
using LineSink = std::function<void(const std::string&)>;

/// Feeder thread pulls chunks into the ring buffer and queues full-window
/// snapshots; the calling thread runs inference and emits decisions in order.
/// A chunk whose time is not the previous time + 1 s resets the buffer and
/// logs a discontinuity.
StreamStats run_stream(const model::Model<float>& model, const ChunkSource& source,
                       const LineSink& decisions, const LineSink& log,
                       const StreamOptions& options = {});

/// Replays a clean signal one second at a time (t = 0, 1, ...).
ChunkSource replay_source(const dsp::CleanSignal& clean);

/// Reads JSON lines {"t": seconds, "samples": [[32 values] x 12]}.
ChunkSource json_lines_source(std::istream& in);

}  // namespace nsd::stream

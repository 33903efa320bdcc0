#include "nsd/stream.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <thread>
#include <variant>

#include "json.hpp"
#include "nsd/dataset.hpp"
#include "nsd/error.hpp"

namespace nsd::stream {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string to_json(const Decision& d) {
  json j = {{"t", d.t}, {"probability", d.probability}, {"seizure", d.seizure}};
  if (d.latency_ms) j["latency_ms"] = *d.latency_ms;
  return j.dump();
}

RingBuffer::RingBuffer(std::size_t channels, std::size_t capacity)
    : channels_(channels), capacity_(capacity), data_(channels * capacity, 0.0f) {}

void RingBuffer::push(const Tensor<float>& block) {
  if (block.rank() != 2 || block.dim(0) != channels_) {
    throw_dimension("RingBuffer::push", "block must be [" + std::to_string(channels_) +
                                            ", n], got " + shape_string(block.shape()));
  }
  const std::size_t n = block.dim(1);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels_; ++c) data_[c * capacity_ + head_] = block.at(c, t);
    head_ = (head_ + 1) % capacity_;
  }
  filled_ = std::min(capacity_, filled_ + n);
}

Tensor<float> RingBuffer::snapshot() const {
  if (!full()) throw Error(ErrorKind::kData, "ring buffer snapshot before it is full");
  Tensor<float> out(Shape{channels_, capacity_});
  for (std::size_t c = 0; c < channels_; ++c)
    for (std::size_t i = 0; i < capacity_; ++i)
      out.at(c, i) = data_[c * capacity_ + (head_ + i) % capacity_];
  return out;
}

void RingBuffer::reset() {
  std::fill(data_.begin(), data_.end(), 0.0f);
  head_ = 0;
  filled_ = 0;
}

namespace {

struct Snapshot {
  std::size_t window_start = 0;
  Tensor<float> data;
  Clock::time_point arrived;
};

struct Discontinuity {
  double expected = 0, got = 0;
};

using Item = std::variant<Snapshot, Discontinuity>;

}  // namespace

StreamStats run_stream(const model::Model<float>& model, const ChunkSource& source,
                       const LineSink& decisions, const LineSink& log,
                       const StreamOptions& options) {
  const std::size_t channels = model.config().channels;
  const std::size_t window = model.config().samples;
  const std::size_t per_second = static_cast<std::size_t>(dsp::kModelRateHz);
  BoundedQueue<Item> queue(std::max<std::size_t>(1, options.queue_capacity));
  StreamStats stats;
  std::exception_ptr feeder_error;

  std::jthread feeder([&] {
    try {
      RingBuffer ring(channels, window);
      std::optional<double> expected;
      while (auto chunk = source()) {
        ++stats.chunks;
        if (chunk->samples.shape() != Shape{channels, per_second}) {
          throw Error(ErrorKind::kData, "chunk at t=" + std::to_string(chunk->t) + " has shape " +
                                            shape_string(chunk->samples.shape()) + ", expected [" +
                                            std::to_string(channels) + ", " +
                                            std::to_string(per_second) + "]");
        }
        const auto arrived = Clock::now();
        if (expected && std::abs(chunk->t - *expected) > 1e-6) {
          ring.reset();
          queue.push(Discontinuity{*expected, chunk->t});
        }
        expected = chunk->t + 1.0;
        ring.push(chunk->samples);
        if (ring.full()) {
          const double start = chunk->t + 1.0 - double(window / per_second);
          queue.push(Snapshot{static_cast<std::size_t>(std::llround(std::max(0.0, start))),
                              ring.snapshot(), arrived});
        }
      }
    } catch (...) {
      feeder_error = std::current_exception();
    }
    queue.close();
  });

  while (auto item = queue.pop()) {
    if (auto* gap = std::get_if<Discontinuity>(&*item)) {
      ++stats.discontinuities;
      log(json{{"event", "discontinuity"}, {"expected_t", gap->expected}, {"t", gap->got},
               {"action", "buffer reset"}}
              .dump());
      continue;
    }
    auto& snap = std::get<Snapshot>(*item);
    data::normalize_epoch(snap.data);
    const auto out = model.infer(snap.data.reshaped({1, channels, window}));
    Decision d;
    d.t = snap.window_start;
    d.probability = out.probability.value()[0];
    d.seizure = d.probability > 0.5f;
    if (options.measure_latency) {
      d.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - snap.arrived).count();
    }
    decisions(to_json(d));
    ++stats.decisions;
  }
  feeder.join();
  if (feeder_error) std::rethrow_exception(feeder_error);
  return stats;
}

ChunkSource replay_source(const dsp::CleanSignal& clean) {
  const std::size_t per_second = static_cast<std::size_t>(clean.fs);
  const std::size_t seconds = clean.sample_count() / per_second;
  auto next = std::make_shared<std::size_t>(0);
  return [&clean, per_second, seconds, next]() -> std::optional<Chunk> {
    if (*next >= seconds) return std::nullopt;
    const std::size_t s = (*next)++;
    const std::size_t rows = clean.channels.dim(0);
    Chunk c;
    c.t = double(s);
    c.samples = Tensor<float>(Shape{rows, per_second});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < per_second; ++i)
        c.samples.at(r, i) = clean.channels.at(r, s * per_second + i);
    return c;
  };
}

ChunkSource json_lines_source(std::istream& in) {
  auto line_no = std::make_shared<std::size_t>(0);
  return [&in, line_no]() -> std::optional<Chunk> {
    std::string line;
    while (std::getline(in, line)) {
      ++*line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        const auto rows = j.at("samples").get<std::vector<std::vector<float>>>();
        if (rows.empty() || rows.front().empty()) {
          throw Error(ErrorKind::kData, "empty samples");
        }
        Chunk c;
        c.t = j.at("t").get<double>();
        c.samples = Tensor<float>(Shape{rows.size(), rows.front().size()});
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.front().size()) throw Error(ErrorKind::kData, "ragged samples");
          for (std::size_t i = 0; i < rows[r].size(); ++i) c.samples.at(r, i) = rows[r][i];
        }
        return c;
      } catch (const json::exception& e) {
        throw Error(ErrorKind::kFormat, "stdin line " + std::to_string(*line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(e.kind(), "stdin line " + std::to_string(*line_no) + ": " + e.what());
      }
    }
    return std::nullopt;
  };
}

}  // namespace nsd::stream

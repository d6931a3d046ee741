#pragma once

#include <chrono>

namespace spq {

class Stopwatch {
 public:
  Stopwatch() : start_(Clock::now()) {}

  void reset() { start_ = Clock::now(); }

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
  }

  // Milliseconds since the last lap (or construction).
  double lap_ms() {
    const auto now = Clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
    return ms;
  }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point start_;
};

// Accumulated wall-clock milliseconds per query stage.
struct StageTimes {
  double tables_ms = 0.0;
  double scan_ms = 0.0;
  double select_ms = 0.0;
  double rerank_ms = 0.0;

  double total_ms() const { return tables_ms + scan_ms + select_ms + rerank_ms; }

  StageTimes& operator+=(const StageTimes& o) {
    tables_ms += o.tables_ms;
    scan_ms += o.scan_ms;
    select_ms += o.select_ms;
    rerank_ms += o.rerank_ms;
    return *this;
  }
};

}  // namespace spq
